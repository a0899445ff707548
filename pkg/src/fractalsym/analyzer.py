"""
Fractal commutation analysis.

commute(s1, s2) asks whether s1;s2 and s2;s1 leave the live variables
equal. Simple pairs go straight to symbolic comparison. Otherwise the
non-simple operand is split by one of the simplification rules and every
piece must commute with the other operand:

    SEQ   {a; b} commutes with s  if a and b each do
    IF    if (c) a else b         if a does under c and b under not c
    LOOP  for i = l..u: a(i)      if a(i) does for a symbolic i in l..u

The rules are sufficient, not necessary, so the outcomes are Legal or
Unknown, never Illegal. Before any of this a footprint check (Bernstein's
conditions) settles pairs that touch disjoint data.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from .affine import (
    TRUE,
    AffineExpr,
    Bindings,
    Cmp,
    Formula,
    SkolemTable,
    conj,
    format_formula,
    free_names,
    instantiate_bindings,
    neg,
    opaque_terms,
    skolemize_formula,
    substitute,
)
from .config import AnalysisConfig, active, analysis_config
from .errors import FsaError
from .gse import CompareReport, compare_programs, is_simple
from .lang import (
    For,
    If,
    Program,
    Seq,
    Stmt,
    ValueCond,
    accesses,
    altered_vars,
    describe,
    fresh_name,
    loop_range,
    program_names,
    stmt_names,
    substitute_stmt,
)
from .omega import is_satisfiable
from .timing import timed
from .transforms import Obligation, TransformSpec, format_transform, obligations_for

logger = logging.getLogger("fractalsym.analyzer")

LEGAL = "Legal"
UNKNOWN = "Unknown"
DESCEND = "descend"


# ---------------------------------------------------------------------------
# Footprints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Cells of one array touched by one reference; index None means any cell"""

    array: str
    index: tuple[AffineExpr, ...] | None
    where: Formula
    loop_vars: tuple[str, ...] = ()

    def __str__(self) -> str:
        cells = "(*)" if self.index is None else f"({','.join(map(str, self.index))})"
        if self.where == TRUE:
            return f"{self.array}{cells}"
        return f"{self.array}{cells} : {format_formula(self.where)}"


@dataclass
class Footprint:
    reads: list[Region] = field(default_factory=list)
    writes: list[Region] = field(default_factory=list)

    def arrays(self) -> set[str]:
        return {r.array for r in (*self.reads, *self.writes)}


def footprint(s: Stmt, program: Program) -> Footprint:
    """
    Over-approximate read and write sets of s. Value-dependent predicates
    and non-affine indices widen the region they guard.
    """
    fp = Footprint()
    for acc in accesses(s, program.int_arrays):
        index = tuple(acc.ref.indices) if acc.ref.is_affine else None
        where = conj(*(loop_range(loop) for loop in acc.loops), *acc.preds)
        region = Region(acc.ref.name, index, where, tuple(loop.var for loop in acc.loops))
        (fp.writes if acc.write else fp.reads).append(region)
    return fp


def _rename(region: Region, tag: str) -> tuple[Formula, tuple[AffineExpr, ...] | None]:
    mapping = {v: AffineExpr.var(f"{v}#{tag}") for v in region.loop_vars}
    where = substitute(region.where, mapping)
    if region.index is None:
        return where, None
    return where, tuple(ix.substitute(mapping) for ix in region.index)


def satisfiable_under(bindings: Bindings, f: Formula, budget: int | None = None) -> bool:
    """f consistent with bindings, universal facts instantiated at the opaque terms of f"""
    table = SkolemTable()
    for term in sorted(opaque_terms(f), key=str):
        table.symbol_for(term)
    ground = instantiate_bindings(bindings, table)
    budget = analysis_config.atom_budget if budget is None else budget
    return is_satisfiable(skolemize_formula(f, table), ground, budget)


def regions_overlap(r1: Region, r2: Region, bindings: Bindings) -> bool:
    if r1.array != r2.array:
        return False
    where1, ix1 = _rename(r1, "1")
    where2, ix2 = _rename(r2, "2")
    alias: Formula = TRUE
    if ix1 is not None and ix2 is not None and len(ix1) == len(ix2):
        alias = conj(*(Cmp("=", a, b) for a, b in zip(ix1, ix2)))
    return satisfiable_under(bindings, conj(where1, where2, alias))


def footprint_conflict(s1: Stmt, s2: Stmt, bindings: Bindings, program: Program) -> str | None:
    """First pair of regions violating Bernstein's conditions, if any"""
    fp1, fp2 = footprint(s1, program), footprint(s2, program)
    checks = [(w, x) for w in fp1.writes for x in (*fp2.reads, *fp2.writes)]
    checks += [(w, r) for w in fp2.writes for r in fp1.reads]
    for a, b in checks:
        if regions_overlap(a, b, bindings):
            return f"{a} meets {b}"
    return None


def disjoint_commute(s1: Stmt, s2: Stmt, bindings: Bindings, program: Program) -> bool:
    """True guarantees that s1 and s2 commute"""
    return footprint_conflict(s1, s2, bindings, program) is None


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


@dataclass
class Step:
    """One rule application in a commute derivation"""

    depth: int
    rule: str
    labels: str
    outcome: str
    detail: str = ""
    children: list[Step] = field(default_factory=list)
    report: CompareReport | None = None
    result: str | None = None

    @property
    def legal(self) -> bool:
        return (self.result or self.outcome) == LEGAL

    def lines(self, indent: int = 0) -> list[str]:
        line = f"{'  ' * indent}[depth {self.depth}] {self.rule}({self.labels}) -> {self.outcome}"
        if self.detail:
            line += f"  # {self.detail}"
        out = [line]
        if self.report is not None:
            pad = "  " * (indent + 1)
            out.extend(f"{pad}{a.witness_line()}" for a in self.report.arrays if a.witness is not None)
        for child in self.children:
            out.extend(child.lines(indent + 1))
        return out

    def first_failure(self) -> Step | None:
        if self.legal:
            return None
        for child in self.children:
            found = child.first_failure()
            if found is not None:
                return found
        return self

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "depth": self.depth,
            "rule": self.rule,
            "labels": self.labels,
            "outcome": self.result or self.outcome,
        }
        if self.detail:
            out["detail"] = self.detail
        if self.report is not None:
            out["compare"] = self.report.to_dict()
        if self.children:
            out["children"] = [c.to_dict() for c in self.children]
        return out


@dataclass
class Verdict:
    outcome: str
    trace: list[Step] = field(default_factory=list)
    max_depth: int = 0
    failure: Step | None = None
    obligations: list[tuple[Obligation, Verdict]] = field(default_factory=list)
    elapsed_ms: float = 0.0

    @property
    def legal(self) -> bool:
        return self.outcome == LEGAL

    def lines(self) -> list[str]:
        out = []
        for step in self.trace:
            out.extend(step.lines())
        return out

    def compare_reports(self) -> list[CompareReport]:
        found: list[CompareReport] = []

        def walk(step: Step) -> None:
            if step.report is not None:
                found.append(step.report)
            for child in step.children:
                walk(child)

        for step in self.trace:
            walk(step)
        for _, v in self.obligations:
            found.extend(v.compare_reports())
        return found

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "outcome": self.outcome,
            "max_depth": self.max_depth,
            "elapsed_ms": round(self.elapsed_ms, 3),
        }
        if self.trace:
            out["trace"] = [s.to_dict() for s in self.trace]
        if self.failure is not None:
            out["failure"] = self.failure.lines()[0].strip()
        if self.obligations:
            out["obligations"] = [
                {**ob.to_dict(), "verdict": v.to_dict()} for ob, v in self.obligations
            ]
        return out


# ---------------------------------------------------------------------------
# Commute
# ---------------------------------------------------------------------------


class Analyzer:
    """Commutation checks for statements of one program"""

    def __init__(self, program: Program, config: AnalysisConfig | None = None):
        self.program = program
        self.config = config or analysis_config
        self._deepest = 0

    def commute(
        self,
        s1: Stmt,
        s2: Stmt,
        bindings: Bindings,
        live: frozenset[str] | set[str],
        names: tuple[str, str] | None = None,
    ) -> Verdict:
        started = time.perf_counter()
        self._deepest = 0
        with active(self.config):
            step = self._commute(s1, s2, bindings, frozenset(live), 0, names)
        verdict = Verdict(
            LEGAL if step.legal else UNKNOWN,
            [step],
            self._deepest,
            step.first_failure(),
            elapsed_ms=(time.perf_counter() - started) * 1000,
        )
        logger.info(f"commute({step.labels}): {verdict.outcome} at depth {verdict.max_depth}")
        return verdict

    def _taken(self, *stmts: Stmt, bindings: Bindings) -> set[str]:
        names = program_names(self.program) | free_names(bindings.ground)
        for s in stmts:
            names |= stmt_names(s)
        return names

    def _commute(
        self,
        s1: Stmt,
        s2: Stmt,
        bindings: Bindings,
        live: frozenset[str],
        level: int,
        names: tuple[str, str] | None = None,
    ) -> Step:
        labels = ", ".join(names) if names else f"{describe(s1)}, {describe(s2)}"
        self._deepest = max(self._deepest, level)
        forced = level < self.config.force_simplify

        if isinstance(s1, Seq) and not s1.stmts or isinstance(s2, Seq) and not s2.stmts:
            return Step(level, "EMPTY", labels, LEGAL)

        if self.config.fast_path and not forced:
            conflict = footprint_conflict(s1, s2, bindings, self.program)
            if conflict is None:
                return Step(level, "FASTPATH", labels, LEGAL, "footprints are disjoint")
            logger.debug(f"Fast path failed for {labels}: {conflict}")

        ok1, why1 = is_simple(s1, self.program, bindings)
        ok2, why2 = is_simple(s2, self.program, bindings)
        if ok1 and ok2 and not forced:
            try:
                report = compare_programs(Seq((s1, s2)), Seq((s2, s1)), bindings, live, self.program)
            except FsaError as e:
                return Step(level, "COMPARE", labels, UNKNOWN, str(e))
            outcome = LEGAL if report.equal else UNKNOWN
            return Step(level, "COMPARE", labels, outcome, report.summary(), report=report)

        if level >= self.config.max_depth:
            return Step(level, "BUDGET", labels, UNKNOWN, f"depth budget {self.config.max_depth} exhausted")

        swapped = (ok1 and not ok2) or (not _splittable(s1) and _splittable(s2))
        if swapped:
            s1, s2 = s2, s1
            why1 = why2
        if not _splittable(s1):
            return Step(level, "ATOMIC", labels, UNKNOWN, why1 if not ok1 or not ok2 else "nothing left to split")

        rule, parts, problem = self._split(s1, s2, bindings)
        if problem:
            return Step(level, rule, labels, UNKNOWN, problem)
        step = Step(level, rule, labels, DESCEND, "operands swapped" if swapped else "")
        for part, part_bindings in parts:
            child = self._commute(part, s2, part_bindings, live, level + 1)
            step.children.append(child)
            if not child.legal:
                break
        step.result = LEGAL if all(c.legal for c in step.children) else UNKNOWN
        return step

    def _split(self, s: Stmt, other: Stmt, bindings: Bindings) -> tuple[str, list[tuple[Stmt, Bindings]], str]:
        """Simplification rule for s: (rule, pieces with their bindings, problem)"""
        written = altered_vars(other)
        if isinstance(s, Seq):
            return "SEQ", [(c, bindings) for c in s.stmts], ""
        if isinstance(s, If):
            parts = []
            if isinstance(s.cond, ValueCond):
                cond_fp = footprint(If(s.cond, Seq()), self.program)
                for w in footprint(other, self.program).writes:
                    for r in cond_fp.reads:
                        if regions_overlap(w, r, bindings):
                            return "IF", [], f"condition '{s.cond}' reads {r.array} written by the other statement"
                parts.append((s.then, bindings))
                if s.orelse is not None:
                    parts.append((s.orelse, bindings))
                return "IF", parts, ""
            touched = {t.fn for t in opaque_terms(s.cond)} & written
            if touched:
                return "IF", [], f"condition depends on {', '.join(sorted(touched))} written by the other statement"
            parts.append((s.then, bindings.with_ground(s.cond)))
            if s.orelse is not None:
                parts.append((s.orelse, bindings.with_ground(neg(s.cond))))
            return "IF", parts, ""
        if isinstance(s, For):
            touched = {t.fn for e in (*s.lower, *s.upper) for t in e.opaque_terms()} & written
            if touched:
                return "LOOP", [], f"bounds of loop {s.var} depend on {', '.join(sorted(touched))}"
            name = fresh_name(s.var, self._taken(s, other, bindings=bindings))
            sym = AffineExpr.var(name)
            body = substitute_stmt(s.body, {s.var: sym})
            return "LOOP", [(body, bindings.with_ground(loop_range(s, sym)))], ""
        return "ATOMIC", [], "statement cannot be split"


def _splittable(s: Stmt) -> bool:
    return isinstance(s, (Seq, If, For))


@timed("commute")
def commute(
    s1: Stmt,
    s2: Stmt,
    bindings: Bindings,
    live: frozenset[str] | set[str],
    program: Program,
    config: AnalysisConfig | None = None,
) -> Verdict:
    """Whether s1;s2 and s2;s1 provably agree on live"""
    return Analyzer(program, config).commute(s1, s2, bindings, live)


def _check_one(program: Program, ob: Obligation, extra: Bindings, config: AnalysisConfig) -> Verdict:
    bindings = ob.bindings.merge(extra)
    return Analyzer(program, config).commute(ob.left, ob.right, bindings, ob.live, (ob.left_name, ob.right_name))


@timed("check_transformation")
def check_transformation(
    p: Program,
    t: TransformSpec,
    extra: Bindings | None = None,
    config: AnalysisConfig | None = None,
) -> Verdict:
    """Legal when every obligation of t is discharged"""
    config = config or analysis_config
    extra = extra or Bindings()
    started = time.perf_counter()
    with active(config):
        obligations = obligations_for(p, t)
        logger.info(f"{format_transform(t)}: {len(obligations)} obligation(s)")
        if config.max_workers > 1 and len(obligations) > 1:
            with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
                verdicts = list(pool.map(lambda ob: _check_one(p, ob, extra, config), obligations))
        else:
            verdicts = [_check_one(p, ob, extra, config) for ob in obligations]

    legal = all(v.legal for v in verdicts)
    failure = next((v.failure for v in verdicts if not v.legal), None)
    verdict = Verdict(
        LEGAL if legal else UNKNOWN,
        max_depth=max((v.max_depth for v in verdicts), default=0),
        failure=failure,
        obligations=list(zip(obligations, verdicts)),
        elapsed_ms=(time.perf_counter() - started) * 1000,
    )
    logger.info(f"{format_transform(t)}: {verdict.outcome} in {verdict.elapsed_ms:.0f} ms")
    return verdict
