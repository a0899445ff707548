"""
Configuration for FractalSym analyses.

Settings are resolved in this order, later sources winning:
    1. AnalysisConfig defaults
    2. the [tool.fsa] table of fsa.toml or pyproject.toml in the working directory
    3. FSA_* environment variables
    4. command-line flags (applied by the CLI through dataclasses.replace)

Example fsa.toml:
    [tool.fsa]
    max_depth = 4
    atom_budget = 8000
"""

import logging
import os
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

logger = logging.getLogger("fractalsym.config")

CONFIG_FILES = ("fsa.toml", "pyproject.toml")


@dataclass
class AnalysisConfig:
    """Configuration for one analysis run"""

    # Maximum number of simplification levels before giving up
    max_depth: int = 3

    # Try the footprint-disjointness shortcut before simplification
    fast_path: bool = True

    # Simplification levels applied before Compare may run
    force_simplify: int = 0

    # Constraint count after which integer elimination aborts
    atom_budget: int = 4000

    # Oracle settings
    trials: int = 200
    seed: int = 0

    # Obligations checked concurrently
    max_workers: int = 1

    log_level: str = "WARNING"


ENV_OVERRIDES = {
    "FSA_MAX_DEPTH": "max_depth",
    "FSA_ATOM_BUDGET": "atom_budget",
    "FSA_LOG_LEVEL": "log_level",
    "FSA_TRIALS": "trials",
    "FSA_MAX_WORKERS": "max_workers",
}


def _coerce(name: str, raw: Any, kind: type) -> Any:
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("true", "1", "yes", "on"):
            return True
        if str(raw).lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if kind is int:
        try:
            value = int(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from e
        if value < 0:
            raise ConfigError(f"{name}: must be non-negative, got {value}")
        return value
    return str(raw)


def _apply(config: AnalysisConfig, values: dict[str, Any], source: str) -> None:
    kinds = {f.name: f.type for f in fields(AnalysisConfig)}
    type_map = {"int": int, "bool": bool, "str": str}
    for key, raw in values.items():
        if key not in kinds:
            logger.warning(f"Ignoring unknown setting '{key}' from {source}")
            continue
        kind = kinds[key]
        if isinstance(kind, str):
            kind = type_map[kind]
        setattr(config, key, _coerce(key, raw, kind))


def _find_table(directory: Path) -> tuple[dict[str, Any], str] | None:
    for name in CONFIG_FILES:
        path = directory / name
        if not path.exists():
            continue
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        table = data.get("tool", {}).get("fsa")
        if table is not None:
            return table, str(path)
    return None


def load_config(path: str | Path | None = None) -> AnalysisConfig:
    """Load configuration, preferring a file table and environment overrides"""
    config = AnalysisConfig()

    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"{path}: {e}") from e
        _apply(config, data.get("tool", {}).get("fsa", data), str(path))
    else:
        found = _find_table(Path.cwd())
        if found:
            table, source = found
            _apply(config, table, source)

    env_values = {
        attr: os.environ[var] for var, attr in ENV_OVERRIDES.items() if var in os.environ
    }
    _apply(config, env_values, "environment")
    if os.environ.get("FSA_NO_FAST_PATH", "").lower() in ("true", "1", "yes", "on"):
        config.fast_path = False

    return config


# Global configuration instance
analysis_config = AnalysisConfig()


@contextmanager
def active(config: AnalysisConfig) -> Iterator[AnalysisConfig]:
    """
    Make config the global configuration while the block runs.

    The solver and the GSE background read analysis_config when no budget is
    passed to them, so analyses started under a loaded configuration must run
    inside this block.
    """
    saved = asdict(analysis_config)
    for key, value in asdict(config).items():
        setattr(analysis_config, key, value)
    try:
        yield analysis_config
    finally:
        for key, value in saved.items():
            setattr(analysis_config, key, value)
