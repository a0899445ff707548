"""
Direct symbolic comparison of simple statements.

A statement is simple when it has only affine indices, bounds and
predicates and none of its loops carries a dependence. For such a
statement the final value of every cell A(k) is a conditional expression
tree over the input values; flattening that tree under the analysis
bindings gives a guarded symbolic expression (GSE): disjoint affine guards
over k, each paired with a symbolic value. Two statements compute the same
result when every overlapping pair of guards carries equal values.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Union

import sympy

from .affine import (
    FALSE,
    TRUE,
    AffineExpr,
    And,
    Bindings,
    Cmp,
    Formula,
    Mod,
    Opaque,
    SkolemTable,
    Symbol,
    conj,
    disj,
    format_formula,
    free_names,
    holds,
    instantiate_bindings,
    neg,
    opaque_terms,
    quotient,
    skolemize_formula,
    substitute,
)
from .config import analysis_config
from .errors import NonInvertibleIndexMap, NotSimpleError
from .lang import (
    Access,
    Apply,
    Assign,
    Const,
    For,
    If,
    IndexValue,
    NonAffineIndex,
    Op,
    Program,
    Read,
    Seq,
    Stmt,
    ValExpr,
    ValueCond,
    accesses,
    altered_vars,
    expand_private,
    fresh_name,
    iter_stmts,
    loop_range,
    opaque_in_stmt,
    program_names,
    stmt_names,
)
from .omega import SatContext
from .symexpr import (
    IndexTerm,
    InputRead,
    Num,
    SApply,
    SOp,
    SymExpr,
    canon,
    evaluate,
    map_reads,
    substitute_sym,
)
from .timing import timed

logger = logging.getLogger("fractalsym.gse")


# ---------------------------------------------------------------------------
# Conditional expression trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    expr: SymExpr


@dataclass(frozen=True)
class OpNode:
    """Arithmetic operator, or a function application when fn is set"""

    op: str
    args: tuple[CETree, ...]
    fn: bool = False


@dataclass(frozen=True)
class Cond:
    guard: Formula
    then: CETree
    orelse: CETree


CETree = Union[Leaf, OpNode, Cond]


def seed(array: str, index: tuple[AffineExpr, ...]) -> CETree:
    """Tree of the identity program for cell array(index)"""
    return Leaf(InputRead(array, index))


def has_cond(t: CETree) -> bool:
    if isinstance(t, Cond):
        return True
    if isinstance(t, OpNode):
        return any(has_cond(a) for a in t.args)
    return False


def to_symexpr(t: CETree) -> SymExpr:
    """SymExpr of a Cond-free tree"""
    if isinstance(t, Leaf):
        return t.expr
    if isinstance(t, OpNode):
        args = tuple(to_symexpr(a) for a in t.args)
        return SApply(t.op, args) if t.fn else SOp(t.op, args)
    raise ValueError("tree still contains a condition")


def map_leaves(t: CETree, fn: Callable[[InputRead], CETree]) -> CETree:
    """Replace every input-read leaf by fn(leaf); equal leaves are visited once"""
    memo: dict[InputRead, CETree] = {}

    def walk(node: CETree) -> CETree:
        if isinstance(node, Leaf):
            if not isinstance(node.expr, InputRead):
                return node
            if node.expr not in memo:
                memo[node.expr] = fn(node.expr)
            return memo[node.expr]
        if isinstance(node, OpNode):
            return OpNode(node.op, tuple(walk(a) for a in node.args), node.fn)
        return Cond(node.guard, walk(node.then), walk(node.orelse))

    return walk(t)


def evaluate_tree(
    t: CETree,
    read: Callable[[str, tuple[int, ...]], Fraction],
    env: Mapping[str, int],
    opaque: Callable[[Opaque, Mapping[str, int]], int] | None = None,
) -> Fraction:
    """Concrete value of t for an input store, index symbols and opaque terms"""
    while isinstance(t, Cond):
        t = t.then if holds(t.guard, env, opaque) else t.orelse
    if isinstance(t, Leaf):
        return evaluate(t.expr, read, env, opaque)
    args = tuple(Leaf(Num(evaluate_tree(a, read, env, opaque))) for a in t.args)
    return evaluate(to_symexpr(OpNode(t.op, args, t.fn)), read, env, opaque)


# ---------------------------------------------------------------------------
# Index map inversion
# ---------------------------------------------------------------------------


def solve_index_map(
    write: tuple[AffineExpr, ...], target: tuple[AffineExpr, ...], loop_vars: list[str]
) -> tuple[dict[Symbol, AffineExpr], list[Formula]]:
    """
    Loop variable values at which write equals target.

    Returns the solution for every loop variable plus the constraints the
    solution imposes on target: equalities from the remaining index
    dimensions and, when the map is invertible only over the rationals,
    divisibility of each numerator together with the equation defining its
    quotient term. Raises NonInvertibleIndexMap when the map does not
    determine the loop variables.
    """
    n = len(loop_vars)
    offsets = [AffineExpr.build({s: c for s, c in w.terms if s not in loop_vars}, w.const) for w in write]
    if n == 0:
        return {}, [Cmp("=", t, w) for t, w in zip(target, write)]

    coeffs = sympy.Matrix(len(write), n, [w.coeff(v) for w in write for v in loop_vars])
    if coeffs.rank() < n:
        raise NonInvertibleIndexMap(
            f"write index ({', '.join(map(str, write))}) does not determine loops {', '.join(loop_vars)}"
        )

    chosen: list[int] = []
    for row in range(len(write)):
        if coeffs.extract([*chosen, row], list(range(n))).rank() == len(chosen) + 1:
            chosen.append(row)
        if len(chosen) == n:
            break

    inverse = coeffs.extract(chosen, list(range(n))).inv()
    rest = [target[d] - offsets[d] for d in chosen]
    solution: dict[Symbol, AffineExpr] = {}
    divisibility: list[Formula] = []
    for i, v in enumerate(loop_vars):
        ratios = [sympy.Rational(inverse[i, j]) for j in range(n)]
        den = math.lcm(*(int(x.q) for x in ratios))
        numerator = AffineExpr()
        for j in range(n):
            numerator = numerator + rest[j] * int(ratios[j] * den)
        if den == 1:
            solution[v] = numerator
            continue
        q = quotient(numerator, den)
        solution[v] = q
        divisibility += [Mod(numerator, den, 0), Cmp("=", q * den, numerator)]

    extra = [
        Cmp("=", target[d], write[d].substitute(solution)) for d in range(len(write)) if d not in chosen
    ]
    return solution, divisibility + extra


# ---------------------------------------------------------------------------
# Tree construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Ctx:
    loops: tuple[For, ...] = ()
    preds: tuple[Formula, ...] = ()

    def domain(self) -> Formula:
        return conj(*(loop_range(loop) for loop in self.loops), *self.preds)


def _value_tree(e: ValExpr, mapping: Mapping[Symbol, AffineExpr]) -> CETree:
    if isinstance(e, Const):
        return Leaf(Num(e.value))
    if isinstance(e, Read):
        indices = []
        for ix in e.ref.indices:
            if isinstance(ix, NonAffineIndex):
                raise NotSimpleError(f"non-affine index in {e.ref}")
            indices.append(ix.substitute(mapping))
        return Leaf(InputRead(e.ref.name, tuple(indices)))
    if isinstance(e, IndexValue):
        return Leaf(IndexTerm(e.expr.substitute(mapping)))
    if isinstance(e, Op):
        return OpNode(e.op, tuple(_value_tree(a, mapping) for a in e.args))
    if isinstance(e, Apply):
        return OpNode(e.fn, tuple(_value_tree(a, mapping) for a in e.args), fn=True)
    raise TypeError(f"Unknown value node {e!r}")


def _assign(s: Assign, tree: CETree, ctx: _Ctx) -> CETree:
    loop_vars = [loop.var for loop in ctx.loops]
    write: list[AffineExpr] = []
    for ix in s.lhs.indices:
        if isinstance(ix, NonAffineIndex):
            raise NotSimpleError(f"non-affine index in {s.lhs}")
        write.append(ix)
    domain = ctx.domain()

    def visit(leaf: InputRead) -> CETree:
        if leaf.array != s.lhs.name or len(leaf.indices) != len(write):
            return Leaf(leaf)
        solution, extra = solve_index_map(tuple(write), leaf.indices, loop_vars)
        guard = conj(substitute(domain, solution), *extra)
        if guard == FALSE:
            return Leaf(leaf)
        value = _value_tree(s.rhs, solution)
        if guard == TRUE:
            return value
        return Cond(guard, value, Leaf(leaf))

    return map_leaves(tree, visit)


def _build(s: Stmt, tree: CETree, ctx: _Ctx) -> CETree:
    if isinstance(s, Assign):
        return _assign(s, tree, ctx)
    if isinstance(s, Seq):
        for part in reversed(s.stmts):
            tree = _build(part, tree, ctx)
        return tree
    if isinstance(s, For):
        if isinstance(s.step, str):
            raise NotSimpleError(f"loop {s.var} has symbolic step {s.step}")
        return _build(s.body, tree, _Ctx((*ctx.loops, s), ctx.preds))
    if isinstance(s, If):
        if isinstance(s.cond, ValueCond):
            raise NotSimpleError(f"condition '{s.cond}' depends on array values")
        if s.orelse is not None:
            tree = _build(s.orelse, tree, _Ctx(ctx.loops, (*ctx.preds, neg(s.cond))))
        return _build(s.then, tree, _Ctx(ctx.loops, (*ctx.preds, s.cond)))
    raise TypeError(f"Unknown statement {type(s).__name__}")


def build_expr_tree(s: Stmt, target: CETree) -> CETree:
    """
    Final value of the target cell after running s, as a tree over input reads.

    Statements are visited last to first; each assignment replaces the leaves
    it may overwrite by a Cond choosing between its right-hand side and the
    leaf. Private scalars must already be expanded.
    """
    return _build(s, target, _Ctx())


def factor(t: CETree) -> CETree:
    """Hoist every Cond above the operators that contain it"""
    if isinstance(t, Leaf):
        return t
    if isinstance(t, Cond):
        return Cond(t.guard, factor(t.then), factor(t.orelse))
    args = [factor(a) for a in t.args]
    for i, a in enumerate(args):
        if isinstance(a, Cond):
            then_args = (*args[:i], a.then, *args[i + 1 :])
            else_args = (*args[:i], a.orelse, *args[i + 1 :])
            return Cond(
                a.guard,
                factor(OpNode(t.op, then_args, t.fn)),
                factor(OpNode(t.op, else_args, t.fn)),
            )
    return OpNode(t.op, tuple(args), t.fn)


# ---------------------------------------------------------------------------
# Guarded symbolic expressions
# ---------------------------------------------------------------------------


class Background:
    """Bindings of one comparison: solver context plus the skolem table guards go through"""

    def __init__(self, formula: Formula, table: SkolemTable | None = None, budget: int | None = None):
        self.table = table if table is not None else SkolemTable()
        self.formula = skolemize_formula(formula, self.table)
        self.ctx = SatContext(self.formula, budget if budget is not None else analysis_config.atom_budget)

    @staticmethod
    def for_statements(
        bindings: Bindings, stmts: Iterable[Stmt], extra: Formula = TRUE, budget: int | None = None
    ) -> Background:
        """Background with universal facts instantiated at every opaque term of stmts"""
        table = SkolemTable()
        for s in stmts:
            for term in sorted(opaque_in_stmt(s), key=str):
                table.symbol_for(term)
        for term in sorted(opaque_terms(extra), key=str):
            table.symbol_for(term)
        formula = conj(instantiate_bindings(bindings, table), skolemize_formula(extra, table))
        return Background(formula, table, budget)

    @property
    def consistent(self) -> bool:
        return self.ctx.consistent

    def sat(self, f: Formula) -> bool:
        return self.ctx.is_satisfiable(skolemize_formula(f, self.table))

    def implies(self, f: Formula, g: Formula) -> bool:
        return self.ctx.implies(skolemize_formula(f, self.table), skolemize_formula(g, self.table))


@dataclass(frozen=True)
class GSE:
    array: str
    index: tuple[str, ...]
    cases: tuple[tuple[Formula, SymExpr], ...]

    def dump(self) -> str:
        return "\n".join(f"{format_formula(g)}  ==>  {e}" for g, e in self.cases)

    def __str__(self) -> str:
        return self.dump()


def _conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return list(f.args)
    return [] if f == TRUE else [f]


def simplify_guard(parts: list[Formula], background: Background) -> Formula:
    """Drop conjuncts implied by the others under the background"""
    flat: list[Formula] = []
    for p in parts:
        for c in _conjuncts(p):
            if c not in flat:
                flat.append(c)
    kept = list(flat)
    for part in flat:
        others = [p for p in kept if p is not part]
        if background.implies(conj(*others), part):
            kept = others
    return conj(*kept)


def _regions(t: CETree, path: list[Formula], background: Background) -> list[tuple[list[Formula], CETree]]:
    """Satisfiable leaf regions of t below path; Cond-free subtrees are single regions"""
    if isinstance(t, Cond):
        out = []
        then_ok = background.sat(conj(*path, t.guard))
        else_ok = background.sat(conj(*path, neg(t.guard))) if then_ok else True
        if then_ok:
            out.extend(_regions(t.then, [*path, t.guard], background))
        if else_ok:
            out.extend(_regions(t.orelse, [*path, neg(t.guard)], background))
        return out
    if isinstance(t, OpNode) and has_cond(t):
        partial: list[tuple[list[Formula], tuple[CETree, ...]]] = [(path, ())]
        for arg in t.args:
            grown = []
            for p, done in partial:
                for q, sub in _regions(arg, p, background):
                    grown.append((q, (*done, sub)))
            partial = grown
        return [(p, OpNode(t.op, args, t.fn)) for p, args in partial]
    return [(path, t)]


@timed("normalize_gse")
def normalize_gse(t: CETree, background: Background, array: str, index: tuple[str, ...]) -> GSE:
    """
    Flatten a tree to disjoint guarded cases.

    Branches whose accumulated guard is unsatisfiable under the background
    are dropped. Operators are factored lazily so that infeasible
    combinations are never expanded.
    """
    if not background.consistent:
        logger.info(f"Bindings are inconsistent; {array} has no feasible cells")
        return GSE(array, index, ())
    cases = []
    for path, leaf in _regions(t, [], background):
        guard = simplify_guard(path, background)
        cases.append((guard, to_symexpr(leaf)))
    logger.debug(f"GSE for {array}: {len(cases)} cases")
    return GSE(array, index, tuple(cases))


def check_partition(g: GSE, background: Background, domain: Formula = TRUE) -> list[str]:
    """Violations of pairwise disjointness and coverage of domain"""
    problems = []
    for i, (g1, _) in enumerate(g.cases):
        for j in range(i + 1, len(g.cases)):
            if background.sat(conj(domain, g1, g.cases[j][0])):
                problems.append(f"cases {i} and {j} overlap")
    if g.cases and not background.implies(domain, disj(*(c for c, _ in g.cases))):
        problems.append("cases do not cover the index space")
    return problems


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairResult:
    left: int
    right: int
    overlap: bool
    match: bool | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"left": self.left, "right": self.right, "overlap": self.overlap, "match": self.match}


@dataclass
class ArrayComparison:
    """Outcome of comparing the GSEs of one array"""

    array: str
    equal: bool
    left: GSE
    right: GSE
    pairs: list[PairResult] = field(default_factory=list)
    witness: tuple[Formula, SymExpr, SymExpr] | None = None

    @property
    def nonempty(self) -> int:
        return sum(1 for p in self.pairs if p.overlap)

    @property
    def matched(self) -> int:
        return sum(1 for p in self.pairs if p.match)

    def witness_line(self) -> str | None:
        if self.witness is None:
            return None
        region, e1, e2 = self.witness
        return f"{self.array}: where {format_formula(region)}: {e1} vs {e2}"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "array": self.array,
            "equal": self.equal,
            "index": list(self.left.index),
            "left_cases": len(self.left.cases),
            "right_cases": len(self.right.cases),
            "pairs_tested": len(self.pairs),
            "pairs_nonempty": self.nonempty,
            "pairs_matched": self.matched,
        }
        if self.witness is not None:
            region, e1, e2 = self.witness
            out["witness"] = {"region": format_formula(region), "left": str(e1), "right": str(e2)}
        return out


@dataclass
class CompareReport:
    equal: bool
    arrays: list[ArrayComparison] = field(default_factory=list)
    reason: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "outcome": "equal" if self.equal else "not-proven",
            "arrays": [a.to_dict() for a in self.arrays],
        }
        if self.reason:
            out["reason"] = self.reason
        return out

    def summary(self) -> str:
        if self.reason:
            return self.reason
        parts = [
            f"{a.array}: {a.matched}/{a.nonempty} overlapping of {len(a.pairs)} pairs match" for a in self.arrays
        ]
        return "; ".join(parts) or "nothing live is altered"


def _reads(e: SymExpr) -> list[InputRead]:
    if isinstance(e, InputRead):
        return [e]
    if isinstance(e, (SOp, SApply)):
        return [r for a in e.args for r in _reads(a)]
    return []


def _unify_reads(e1: SymExpr, e2: SymExpr, region: Formula, background: Background) -> SymExpr:
    """e2 with each read renamed to a read of e1 at an index the region forces equal"""
    reads1 = _reads(e1)

    def visit(r: InputRead) -> SymExpr:
        for candidate in reads1:
            if candidate.array != r.array or candidate == r or len(candidate.indices) != len(r.indices):
                continue
            same = conj(*(Cmp("=", a, b) for a, b in zip(candidate.indices, r.indices)))
            if background.implies(region, same):
                return candidate
        return r

    return map_reads(e2, visit)


def _atom_key(f: Formula) -> Any:
    """Key under which two spellings of one comparison coincide"""
    if not isinstance(f, Cmp):
        return f
    d = f.lhs - f.rhs
    if f.op in ("=", "!="):
        return f.op, min(d, -d, key=str)
    return {
        "<=": ("<=", d),
        "<": ("<=", d + 1),
        ">=": ("<=", -d),
        ">": ("<=", 1 - d),
    }[f.op]


def _trivially_true(f: Formula) -> bool:
    if not isinstance(f, Cmp):
        return False
    d = f.lhs - f.rhs
    if not d.is_constant:
        return False
    c = d.const
    return {"<": c < 0, "<=": c <= 0, "=": c == 0, "!=": c != 0, ">=": c >= 0, ">": c > 0}[f.op]


def _defining_equality(f: Formula, keep: set[str]) -> tuple[str, AffineExpr] | None:
    """var := value for an equality with a unit-coefficient variable, preferring names outside keep"""
    if not isinstance(f, Cmp) or f.op != "=":
        return None
    d = f.lhs - f.rhs
    candidates = [s for s, c in d.terms if isinstance(s, str) and abs(c) == 1]
    for var in sorted(candidates, key=lambda s: (s in keep, s)):
        c = d.coeff(var)
        value = (d - AffineExpr.var(var) * c) * -c
        if var not in value.free_names():
            return var, value
    return None


def simplify_witness(
    region: Formula, left: SymExpr, right: SymExpr, keep: Iterable[str], background: Background
) -> tuple[Formula, SymExpr, SymExpr]:
    """
    Readable form of a disagreement region.

    Repeated conjuncts are dropped, equalities that define a variable are
    substituted into the rest of the region and into both values, and
    conjuncts the background already implies are removed.
    """
    keep = set(keep)
    atoms: list[Formula] = []
    pending = _conjuncts(region)
    while pending:
        seen: set[Any] = set()
        atoms = []
        for a in pending:
            key = _atom_key(a)
            if key not in seen and not _trivially_true(a):
                seen.add(key)
                atoms.append(a)
        pending = []
        for i, a in enumerate(atoms):
            found = _defining_equality(a, keep)
            if found is None:
                continue
            var, value = found
            mapping: dict[Symbol, AffineExpr] = {var: value}
            rest = atoms[:i] + atoms[i + 1 :]
            pending = [c for r in rest for c in _conjuncts(substitute(r, mapping))]
            left, right = substitute_sym(left, mapping), substitute_sym(right, mapping)
            if not pending:
                atoms = []
            break
    return simplify_guard(atoms, background), left, right


@timed("compare_gses")
def compare_gses(g1: GSE, g2: GSE, background: Background) -> ArrayComparison:
    """Values must agree on every pair of overlapping guards"""
    result = ArrayComparison(g1.array, True, g1, g2)
    for i, (guard1, e1) in enumerate(g1.cases):
        for j, (guard2, e2) in enumerate(g2.cases):
            region = conj(guard1, guard2)
            if not background.sat(region):
                result.pairs.append(PairResult(i, j, False))
                continue
            match = canon(e1) == canon(e2)
            if not match:
                match = canon(e1) == canon(_unify_reads(e1, e2, region, background))
            if not match:
                match = canon(e2) == canon(_unify_reads(e2, e1, region, background))
            result.pairs.append(PairResult(i, j, True, match))
            if not match:
                logger.debug(f"{g1.array}: {e1} differs from {e2} on {region}")
                if result.witness is None:
                    result.witness = simplify_witness(region, e1, e2, g1.index, background)
                result.equal = False
    return result


def index_symbols(rank: int, taken: set[str]) -> tuple[str, ...]:
    """Fresh target index names: k, or k1..kr"""
    bases = ["k"] if rank == 1 else [f"k{d + 1}" for d in range(rank)]
    out = []
    for base in bases:
        name = fresh_name(base, taken)
        taken.add(name)
        out.append(name)
    return tuple(out)


@timed("compare_programs")
def compare_programs(
    s1: Stmt,
    s2: Stmt,
    bindings: Bindings,
    live: Iterable[str] | None,
    program: Program,
    extra: Formula = TRUE,
) -> CompareReport:
    """Whether s1 and s2 leave every live array with the same final value"""
    e1, e2 = expand_private(s1), expand_private(s2)
    live_set = None if live is None else set(live)
    altered1 = altered_vars(s1) if live_set is None else altered_vars(s1) & live_set
    altered2 = altered_vars(s2) if live_set is None else altered_vars(s2) & live_set
    if altered1 != altered2:
        reason = f"live altered sets differ: {sorted(altered1)} vs {sorted(altered2)}"
        logger.info(reason)
        return CompareReport(False, reason=reason)

    for s in (e1, e2):
        ok, why = _simple_expanded(s, program, bindings, extra)
        if not ok:
            raise NotSimpleError(why)

    background = Background.for_statements(bindings, (e1, e2), extra)
    taken = program_names(program) | stmt_names(e1) | stmt_names(e2) | free_names(bindings.ground) | free_names(extra)
    report = CompareReport(True)
    for name in sorted(altered1):
        rank = _rank(name, e1, e2)
        index = index_symbols(rank, set(taken))
        k = tuple(AffineExpr.var(n) for n in index)
        decl = program.decl(name)
        cell = decl.index_range(k) if decl is not None and decl.rank == rank else TRUE
        local = Background(conj(background.formula, cell), background.table)
        target = seed(name, k)
        gse1 = normalize_gse(build_expr_tree(e1, target), local, name, index)
        gse2 = normalize_gse(build_expr_tree(e2, target), local, name, index)
        comparison = compare_gses(gse1, gse2, local)
        report.arrays.append(comparison)
        if not comparison.equal:
            report.equal = False
    logger.info(f"Compare: {'equal' if report.equal else 'not proven'} ({report.summary()})")
    return report


def _rank(name: str, *stmts: Stmt) -> int:
    for s in stmts:
        for node in iter_stmts(s):
            if isinstance(node, Assign) and node.lhs.name == name:
                return len(node.lhs.indices)
    return 0


# ---------------------------------------------------------------------------
# Simple class
# ---------------------------------------------------------------------------


def _loop_vars(s: Stmt) -> set[str]:
    return {node.var for node in iter_stmts(s) if isinstance(node, For)}


def _loops_with_outer(s: Stmt, outer: tuple[For, ...] = (), preds: tuple[Formula, ...] = ()):
    if isinstance(s, For):
        yield s, outer, preds
        yield from _loops_with_outer(s.body, (*outer, s), preds)
    elif isinstance(s, Seq):
        for c in s.stmts:
            yield from _loops_with_outer(c, outer, preds)
    elif isinstance(s, If):
        yield from _loops_with_outer(s.then, outer, (*preds, s.cond))
        if s.orelse is not None:
            yield from _loops_with_outer(s.orelse, outer, (*preds, neg(s.cond)))


def _side(access: Access, loop: For, iteration: str, tag: str) -> tuple[Formula, tuple[AffineExpr, ...]]:
    """Constraints and index of one access with its loop variables renamed apart"""
    mapping: dict[Symbol, AffineExpr] = {loop.var: AffineExpr.var(iteration)}
    for inner in access.loops:
        mapping[inner.var] = AffineExpr.var(f"{inner.var}#{tag}")
    parts = [substitute(loop_range(inner), mapping) for inner in access.loops]
    parts += [substitute(p, mapping) for p in access.preds]
    index = tuple(ix.substitute(mapping) for ix in access.ref.indices)
    return conj(*parts), index


def _carried_dependence(s: Stmt, program: Program, background: Background) -> str | None:
    for loop, outer, outer_preds in _loops_with_outer(s):
        accs = accesses(loop.body, program.int_arrays)
        if not any(a.write for a in accs):
            continue
        v1, v2 = f"{loop.var}#a", f"{loop.var}#b"
        shared = conj(
            *(loop_range(o) for o in outer),
            *outer_preds,
            loop_range(loop, AffineExpr.var(v1)),
            loop_range(loop, AffineExpr.var(v2)),
            Cmp("<", AffineExpr.var(v1), AffineExpr.var(v2)),
        )
        for a1 in accs:
            for a2 in accs:
                if not (a1.write or a2.write) or a1.ref.name != a2.ref.name:
                    continue
                if len(a1.ref.indices) != len(a2.ref.indices):
                    continue
                c1, ix1 = _side(a1, loop, v1, "a")
                c2, ix2 = _side(a2, loop, v2, "b")
                decl = program.decl(a1.ref.name)
                bounds = TRUE
                if decl is not None and decl.rank == len(ix1):
                    bounds = conj(decl.index_range(ix1), decl.index_range(ix2))
                alias = conj(*(Cmp("=", x, y) for x, y in zip(ix1, ix2)))
                if background.sat(conj(shared, c1, c2, bounds, alias)):
                    return f"loop {loop.var} carries a dependence on {a1.ref.name}"
    return None


def _simple_expanded(s: Stmt, program: Program, bindings: Bindings, extra: Formula = TRUE) -> tuple[bool, str]:
    loop_vars = _loop_vars(s)
    for node in iter_stmts(s):
        if isinstance(node, For) and isinstance(node.step, str):
            return False, f"loop {node.var} has symbolic step {node.step}"
        if isinstance(node, If) and isinstance(node.cond, ValueCond):
            return False, f"condition '{node.cond}' depends on array values"
    for acc in accesses(s, program.int_arrays):
        if any(isinstance(ix, NonAffineIndex) for ix in acc.ref.indices):
            return False, f"non-affine index in {acc.ref}"
    written = altered_vars(s)
    for term in sorted(opaque_in_stmt(s), key=str):
        if term.free_names() & loop_vars:
            return False, f"index term {term} varies with a loop variable"
        if term.fn in written:
            return False, f"index array {term.fn} is written"
    for node, loops in _assignments(s):
        write = tuple(ix for ix in node.lhs.indices if isinstance(ix, AffineExpr))
        placeholder = tuple(AffineExpr.var(f"#k{d}") for d in range(len(write)))
        try:
            solve_index_map(write, placeholder, [loop.var for loop in loops])
        except NonInvertibleIndexMap as e:
            return False, str(e)
    background = Background.for_statements(bindings, (s,), extra)
    if not background.consistent:
        return True, "bindings are inconsistent"
    carried = _carried_dependence(s, program, background)
    if carried:
        return False, carried
    return True, "simple"


def _assignments(s: Stmt, loops: tuple[For, ...] = ()):
    if isinstance(s, Assign):
        yield s, loops
    elif isinstance(s, Seq):
        for c in s.stmts:
            yield from _assignments(c, loops)
    elif isinstance(s, For):
        yield from _assignments(s.body, (*loops, s))
    elif isinstance(s, If):
        yield from _assignments(s.then, loops)
        if s.orelse is not None:
            yield from _assignments(s.orelse, loops)


def is_simple(s: Stmt, program: Program, bindings: Bindings | None = None, extra: Formula = TRUE) -> tuple[bool, str]:
    """(whether s can be compared directly, reason for the first failure)"""
    bindings = program.bindings() if bindings is None else bindings
    ok, reason = _simple_expanded(expand_private(s), program, bindings, extra)
    logger.debug(f"is_simple: {ok} ({reason})")
    return ok, reason


def gse_for(s: Stmt, array: str, program: Program, bindings: Bindings | None = None) -> GSE:
    """GSE of array after s under the program's own bindings"""
    bindings = program.bindings() if bindings is None else bindings
    ok, reason = is_simple(s, program, bindings)
    if not ok:
        raise NotSimpleError(reason)
    expanded = expand_private(s)
    taken = program_names(program) | stmt_names(expanded) | free_names(bindings.ground)
    decl = program.decl(array)
    rank = decl.rank if decl is not None else _rank(array, expanded)
    index = index_symbols(rank, taken)
    k = tuple(AffineExpr.var(n) for n in index)
    cell = decl.index_range(k) if decl is not None else TRUE
    background = Background.for_statements(bindings, (expanded,), cell)
    tree = build_expr_tree(expanded, seed(array, k))
    return normalize_gse(tree, background, array, index)
