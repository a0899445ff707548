"""
Bundled example programs (package data under corpus/*.fsa)
"""

import logging
from functools import lru_cache
from importlib import resources

from .lang import Program
from .syntax import parse_program

logger = logging.getLogger("fractalsym.corpus")

SUFFIX = ".fsa"


def names() -> list[str]:
    """Sorted names of the bundled programs"""
    root = resources.files(__package__) / "corpus"
    return sorted(entry.name[: -len(SUFFIX)] for entry in root.iterdir() if entry.name.endswith(SUFFIX))


def source(name: str) -> str:
    """Program text of a bundled program"""
    path = resources.files(__package__) / "corpus" / f"{name}{SUFFIX}"
    if not path.is_file():
        raise KeyError(f"no corpus program named '{name}' (have: {', '.join(names())})")
    return path.read_text()


@lru_cache(maxsize=None)
def load(name: str) -> Program:
    """Parsed bundled program"""
    program = parse_program(source(name))
    logger.debug(f"Loaded corpus program {name}")
    return program
