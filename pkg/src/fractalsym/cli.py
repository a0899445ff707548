"""
Command-line surface: fsa parse|check|apply|compare|gse|fuzz|deps|serve

Exit codes:
    0  Legal / equal / no counterexample
    1  Unknown / not proven / counterexample / dependences found
    2  usage or input error
    3  check --verify found a counterexample to a Legal verdict
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from . import corpus
from .affine import Bindings, Formula, conj
from .analyzer import check_transformation
from .config import AnalysisConfig, active, load_config
from .errors import FsaError, WellFormednessError
from .gse import compare_programs, gse_for
from .interp import InstanceSpec, equiv_fuzz
from .lang import Program, check_well_formed
from .syntax import parse_formula, parse_program, print_program
from .timing import timings
from .transforms import apply, dependence_legality, format_transform, parse_transform

logger = logging.getLogger("fractalsym.cli")

EXIT_OK = 0
EXIT_NOT_PROVEN = 1
EXIT_ERROR = 2
EXIT_UNSOUND = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fsa", description="Fractal symbolic analysis of loop transformations")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    parser.add_argument("--config", help="TOML file with a [tool.fsa] table")
    sub = parser.add_subparsers(dest="command", required=True)

    def program_arg(p: argparse.ArgumentParser, name: str = "program") -> None:
        p.add_argument(name, help="program file, or the name of a bundled corpus program")

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--assume", action="append", default=[], metavar="FORMULA", help="extra fact (repeatable)")
        p.add_argument("--json", action="store_true", help="emit the report as one JSON object")

    p = sub.add_parser("parse", help="parse and pretty-print a program")
    program_arg(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("check", help="prove a transformation legal")
    program_arg(p)
    p.add_argument("--transform", required=True, metavar="SPEC")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--no-fast-path", action="store_true")
    p.add_argument("--force-simplify", type=int, metavar="K")
    p.add_argument("--verify", action="store_true", help="apply and fuzz the result when Legal")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    common(p)

    p = sub.add_parser("apply", help="print the transformed program")
    program_arg(p)
    p.add_argument("--transform", required=True, metavar="SPEC")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("compare", help="symbolically compare two programs")
    program_arg(p, "first")
    program_arg(p, "second")
    p.add_argument("--outputs", metavar="LIST", help="comma-separated live arrays")
    common(p)

    p = sub.add_parser("gse", help="dump the guarded symbolic expression of an array")
    program_arg(p)
    p.add_argument("--array", required=True)
    common(p)

    p = sub.add_parser("fuzz", help="compare two programs on random instances")
    program_arg(p, "first")
    program_arg(p, "second")
    p.add_argument("--outputs", metavar="LIST")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    common(p)

    p = sub.add_parser("deps", help="dependence-based legality baseline")
    program_arg(p)
    p.add_argument("--transform", required=True, metavar="SPEC")
    p.add_argument("--json", action="store_true")

    sub.add_parser("serve", help="run the MCP tool server on stdio")
    return parser


def read_program(ref: str) -> Program:
    """Parse a program from a path, falling back to the bundled corpus"""
    path = Path(ref)
    if path.exists():
        text = path.read_text()
    elif ref in corpus.names():
        text = corpus.source(ref)
    else:
        raise FsaError(f"no such file or corpus program: {ref}")
    return parse_program(text)


def _assumptions(args: argparse.Namespace, p: Program) -> list[Formula]:
    return [parse_formula(text, p) for text in getattr(args, "assume", [])]


def _outputs(args: argparse.Namespace, p: Program) -> tuple[str, ...] | None:
    if getattr(args, "outputs", None):
        return tuple(name.strip() for name in args.outputs.split(",") if name.strip())
    return p.outputs or None


def _config(args: argparse.Namespace) -> AnalysisConfig:
    config = load_config(args.config)
    overrides: dict[str, Any] = {}
    if getattr(args, "max_depth", None) is not None:
        overrides["max_depth"] = args.max_depth
    if getattr(args, "no_fast_path", False):
        overrides["fast_path"] = False
    if getattr(args, "force_simplify", None) is not None:
        overrides["force_simplify"] = args.force_simplify
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    return replace(config, **overrides)


# ---------------------------------------------------------------------------
# Commands; each returns (exit code, report, human-readable text)
# ---------------------------------------------------------------------------


def cmd_parse(args: argparse.Namespace, config: AnalysisConfig) -> tuple[int, dict[str, Any], str]:
    p = read_program(args.program)
    diagnostics = check_well_formed(p)
    if diagnostics:
        raise WellFormednessError(diagnostics)
    text = print_program(p)
    return EXIT_OK, {"name": p.name, "program": text}, text


def cmd_check(args: argparse.Namespace, config: AnalysisConfig) -> tuple[int, dict[str, Any], str]:
    p = read_program(args.program)
    t = parse_transform(args.transform)
    facts = _assumptions(args, p)
    verdict = check_transformation(p, t, Bindings.from_formulas(facts), config)
    report = verdict.to_dict()
    lines = [f"{format_transform(t)}: {verdict.outcome}"]
    for ob, v in verdict.obligations:
        lines.append(f"{ob.describe()}: {v.outcome}")
        lines.extend(v.lines())
    code = EXIT_OK if verdict.legal else EXIT_NOT_PROVEN

    if args.verify and verdict.legal:
        q = apply(p, t)
        spec = InstanceSpec(p, constraint=conj(*p.assumes, *facts))
        fuzz = equiv_fuzz(p, q, spec, config.trials, config.seed)
        report["verify"] = fuzz.to_dict()
        if fuzz.equivalent:
            lines.append(f"verified on {fuzz.trials} random instances")
        else:
            logger.error(f"Legal verdict refuted by a random instance: {fuzz.diagnosis}")
            lines.append(f"COUNTEREXAMPLE: {fuzz.diagnosis}")
            lines.append(fuzz.counterexample.dump().rstrip())
            code = EXIT_UNSOUND
    return code, report, "\n".join(lines)


def cmd_apply(args: argparse.Namespace, config: AnalysisConfig) -> tuple[int, dict[str, Any], str]:
    p = read_program(args.program)
    t = parse_transform(args.transform)
    text = print_program(apply(p, t))
    return EXIT_OK, {"transform": format_transform(t), "program": text}, text


def cmd_compare(args: argparse.Namespace, config: AnalysisConfig) -> tuple[int, dict[str, Any], str]:
    p1, p2 = read_program(args.first), read_program(args.second)
    bindings = p1.bindings().merge(Bindings.from_formulas(_assumptions(args, p1)))
    result = compare_programs(p1.body, p2.body, bindings, _outputs(args, p1), p1)
    lines = [f"{'equal' if result.equal else 'not proven'}: {result.summary()}"]
    for comparison in result.arrays:
        for pair in comparison.pairs:
            if pair.overlap and not pair.match:
                lines.append(f"  {comparison.array}: case {pair.left} vs case {pair.right} differ")
        if comparison.witness is not None:
            lines.append(f"  {comparison.witness_line()}")
    return (EXIT_OK if result.equal else EXIT_NOT_PROVEN), result.to_dict(), "\n".join(lines)


def cmd_gse(args: argparse.Namespace, config: AnalysisConfig) -> tuple[int, dict[str, Any], str]:
    p = read_program(args.program)
    bindings = p.bindings().merge(Bindings.from_formulas(_assumptions(args, p)))
    g = gse_for(p.body, args.array, p, bindings)
    report = {
        "array": g.array,
        "index": list(g.index),
        "cases": [{"guard": str(guard), "expr": str(expr)} for guard, expr in g.cases],
    }
    header = f"{g.array}({','.join(g.index)}): {len(g.cases)} case(s)"
    return EXIT_OK, report, f"{header}\n{g.dump()}"


def cmd_fuzz(args: argparse.Namespace, config: AnalysisConfig) -> tuple[int, dict[str, Any], str]:
    p1, p2 = read_program(args.first), read_program(args.second)
    outputs = _outputs(args, p1)
    if outputs is not None:
        p1 = replace(p1, outputs=outputs)
    spec = InstanceSpec(p1, constraint=conj(*p1.assumes, *_assumptions(args, p1)))
    result = equiv_fuzz(p1, p2, spec, config.trials, config.seed)
    if result.equivalent:
        text = f"no counterexample in {result.trials} trial(s)"
    else:
        text = f"counterexample: {result.diagnosis}\n{result.counterexample.dump().rstrip()}"
    return (EXIT_OK if result.equivalent else EXIT_NOT_PROVEN), result.to_dict(), text


def cmd_deps(args: argparse.Namespace, config: AnalysisConfig) -> tuple[int, dict[str, Any], str]:
    p = read_program(args.program)
    result = dependence_legality(p, parse_transform(args.transform))
    lines = [f"{result.transform}: {'legal' if result.legal else 'illegal'}"]
    lines += [f"  {d}" for d in result.dependences]
    return (EXIT_OK if result.legal else EXIT_NOT_PROVEN), result.to_dict(), "\n".join(lines)


COMMANDS = {
    "parse": cmd_parse,
    "check": cmd_check,
    "apply": cmd_apply,
    "compare": cmd_compare,
    "gse": cmd_gse,
    "fuzz": cmd_fuzz,
    "deps": cmd_deps,
}


def run(argv: list[str] | None = None) -> int:
    """Run one command and return its exit code"""
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as e:
        print(f"fsa: {e}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as e:  # --help
        return int(e.code or 0)

    try:
        config = _config(args)
    except FsaError as e:
        print(f"fsa: {e}", file=sys.stderr)
        return EXIT_ERROR

    level = config.log_level.upper()
    if args.verbose:
        level = "DEBUG" if args.verbose > 1 else "INFO"
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )

    if args.command == "serve":
        from .server import main as server_main

        server_main()
        return EXIT_OK

    timings.reset()
    try:
        with active(config):
            code, report, text = COMMANDS[args.command](args, config)
    except FsaError as e:
        print(f"fsa: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}: {e}")
        return EXIT_ERROR

    if getattr(args, "json", False):
        report = {"command": sys.argv[1:] if argv is None else list(argv), **report, "timings": timings.summary()}
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        print(text)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
