# FractalSym MCP Server
# Licensed under the MIT License

import json
import logging
from collections.abc import AsyncIterator
from contextlib import asynccontextmanager
from typing import Any

from mcp.server.fastmcp import Context, FastMCP

from . import corpus
from .affine import Bindings, conj
from .analyzer import check_transformation as _check
from .config import active, load_config
from .gse import compare_programs as _compare
from .gse import gse_for
from .interp import InstanceSpec, equiv_fuzz
from .syntax import parse_formula, parse_program, print_program
from .timing import timings
from .transforms import apply, dependence_legality, format_transform, parse_transform

logger = logging.getLogger("fractalsym.server")


@asynccontextmanager
async def server_lifespan(server: FastMCP) -> AsyncIterator[dict[str, Any]]:
    """Log startup and shutdown"""
    try:
        logger.info(f"FractalSym server starting up with {len(corpus.names())} corpus programs")
        yield {}
    finally:
        logger.info("FractalSym server shut down")


mcp = FastMCP("FractalSym", lifespan=server_lifespan)


def _facts(assume: list[str] | None, program) -> Bindings:
    return Bindings.from_formulas(parse_formula(text, program) for text in assume or [])


def _report(payload: dict[str, Any]) -> str:
    return json.dumps({**payload, "timings": timings.summary()}, sort_keys=True, indent=2)


@mcp.tool()
def check_transformation(
    ctx: Context, program: str, transform: str, assume: list[str] | None = None, max_depth: int | None = None
) -> str:
    """
    Prove a loop transformation legal by fractal symbolic analysis.

    Parameters:
    - program: program text in the loop language
    - transform: e.g. "distribute(j;S1|S2)", "interchange(k,i)", "tile(i,j;B,B)"
    - assume: extra facts such as "forall j in [1, N]: j <= p(j) <= N"
    - max_depth: simplification budget (default from configuration)

    Returns the verdict report as JSON; outcome is Legal or Unknown.
    """
    try:
        timings.reset()
        p = parse_program(program)
        config = load_config()
        if max_depth is not None:
            config.max_depth = max_depth
        verdict = _check(p, parse_transform(transform), _facts(assume, p), config)
        return _report(verdict.to_dict())
    except Exception as e:
        logger.error(f"Error checking transformation: {str(e)}")
        return json.dumps({"error": f"Error checking transformation: {str(e)}"})


@mcp.tool()
def compare_programs(
    ctx: Context, first: str, second: str, outputs: list[str] | None = None, assume: list[str] | None = None
) -> str:
    """
    Symbolically compare the final values of two programs.

    Parameters:
    - first, second: program texts with the same declarations
    - outputs: live arrays (default: the first program's outputs clause)
    - assume: extra facts
    """
    try:
        timings.reset()
        p1, p2 = parse_program(first), parse_program(second)
        bindings = p1.bindings().merge(_facts(assume, p1))
        live = outputs or p1.outputs or None
        with active(load_config()):
            report = _compare(p1.body, p2.body, bindings, live, p1)
        return _report(report.to_dict())
    except Exception as e:
        logger.error(f"Error comparing programs: {str(e)}")
        return json.dumps({"error": f"Error comparing programs: {str(e)}"})


@mcp.tool()
def dump_gse(ctx: Context, program: str, array: str, assume: list[str] | None = None) -> str:
    """
    Guarded symbolic expression of an array's final value.

    Parameters:
    - program: program text; it must be in the simple class (no carried dependences)
    - array: the array to describe
    """
    try:
        p = parse_program(program)
        g = gse_for(p.body, array, p, p.bindings().merge(_facts(assume, p)))
        cases = [{"guard": str(guard), "expr": str(expr)} for guard, expr in g.cases]
        return json.dumps({"array": g.array, "index": list(g.index), "cases": cases}, indent=2)
    except Exception as e:
        logger.error(f"Error building GSE: {str(e)}")
        return json.dumps({"error": f"Error building GSE: {str(e)}"})


@mcp.tool()
def dependence_report(ctx: Context, program: str, transform: str) -> str:
    """Memory-based dependence baseline for a transformation"""
    try:
        p = parse_program(program)
        return json.dumps(dependence_legality(p, parse_transform(transform)).to_dict(), indent=2)
    except Exception as e:
        logger.error(f"Error computing dependences: {str(e)}")
        return json.dumps({"error": f"Error computing dependences: {str(e)}"})


@mcp.tool()
def apply_transformation(ctx: Context, program: str, transform: str, verify_trials: int = 0) -> str:
    """
    Apply a transformation and return the new program text.

    Parameters:
    - verify_trials: when positive, fuzz the result against the original on that many instances
    """
    try:
        p = parse_program(program)
        t = parse_transform(transform)
        q = apply(p, t)
        out: dict[str, Any] = {"transform": format_transform(t), "program": print_program(q)}
        if verify_trials > 0:
            spec = InstanceSpec(p, constraint=conj(*p.assumes))
            out["verify"] = equiv_fuzz(p, q, spec, verify_trials).to_dict()
        return json.dumps(out, indent=2)
    except Exception as e:
        logger.error(f"Error applying transformation: {str(e)}")
        return json.dumps({"error": f"Error applying transformation: {str(e)}"})


@mcp.tool()
def corpus_program(ctx: Context, name: str) -> str:
    """Source text of a bundled example program (see list_corpus)"""
    try:
        return corpus.source(name)
    except Exception as e:
        return json.dumps({"error": str(e)})


@mcp.tool()
def list_corpus(ctx: Context) -> str:
    """Names of the bundled example programs"""
    return json.dumps(corpus.names())


@mcp.prompt()
def legality_strategy() -> str:
    """How to use the tools to establish that a transformation is legal"""
    return """To decide whether a loop transformation is legal:

    1. Run dependence_report first. No reordered dependences means the transformation is legal.
    2. Otherwise run check_transformation. Legal is a proof; Unknown only means "not proven".
    3. On Unknown, read the failing step of the trace. Try adding facts the algorithm relies on
       (for pivoting codes: "forall j in [1, N]: j <= p(j) <= N") or raise max_depth.
    4. Confirm with apply_transformation(verify_trials=100) before trusting the result.
    """


def main():
    """Run the MCP server"""
    mcp.run()


if __name__ == "__main__":
    main()
