"""
Loop and statement transformations.

Each transformation has three faces here:

    obligations_for  - the commutation conditions that make it legal
    apply            - the rewritten program (never checks legality)
    dependence_legality - the classical memory-dependence verdict, for comparison

Transformations are named in a small surface syntax:

    reorder(S1,S3)          distribute(j;S1|S2)     fuse(L1,L2)
    reverse(i)              interchange(k,i)        linear(i,j;[[1,0],[1,1]])
    stripmine(j,B)          split(k,jB+B)           peel(j,first)
    tile(i,j;Bi,Bj)

Loops are designated by label, by loop variable when it is unique, or by
"label/var" for the loop on var inside the labeled statement.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Union

import sympy

from .affine import (
    FALSE,
    TRUE,
    AffineExpr,
    Bindings,
    Cmp,
    Formula,
    Mod,
    SkolemTable,
    conj,
    disj,
    format_formula,
    free_names,
    lex_less,
    neg,
    opaque_terms,
    skolemize_formula,
    substitute,
)
from .errors import ParseError, TransformError
from .lang import (
    Access,
    For,
    If,
    Program,
    Seq,
    Stmt,
    ValueCond,
    accesses,
    ancestors,
    describe,
    fresh_name,
    iter_stmts,
    loop_range,
    map_labels,
    program_names,
    replace_stmt,
    seq,
    stmt_names,
    substitute_stmt,
)
from .gse import Background
from .omega import find_witness, implies, is_satisfiable
from .syntax import parse_affine

logger = logging.getLogger("fractalsym.transforms")


# ---------------------------------------------------------------------------
# Transformation specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reorder:
    first: str
    second: str


@dataclass(frozen=True)
class Distribute:
    loop: str
    groups: tuple[str, ...]


@dataclass(frozen=True)
class Fuse:
    first: str
    second: str


@dataclass(frozen=True)
class Reverse:
    loop: str


@dataclass(frozen=True)
class Interchange:
    outer: str
    inner: str


@dataclass(frozen=True)
class LinearTransform:
    loops: tuple[str, ...]
    matrix: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class Stripmine:
    loop: str
    block: int | str


@dataclass(frozen=True)
class IndexSetSplit:
    loop: str
    point: str


@dataclass(frozen=True)
class Peel:
    loop: str
    end: str = "first"


@dataclass(frozen=True)
class Tile:
    outer: str
    inner: str
    blocks: tuple[int | str, int | str]


TransformSpec = Union[
    Reorder, Distribute, Fuse, Reverse, Interchange, LinearTransform, Stripmine, IndexSetSplit, Peel, Tile
]


def _block(text: str) -> int | str:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return text


def parse_transform(text: str) -> TransformSpec:
    """Parse the surface syntax of one transformation"""
    text = text.strip()
    if "(" not in text or not text.endswith(")"):
        raise ParseError(f"malformed transformation {text!r}; expected name(args)")
    name, _, rest = text.partition("(")
    name = name.strip().lower()
    body = rest[:-1].strip()
    head, _, tail = body.partition(";")
    args = [a.strip() for a in head.split(",") if a.strip()]

    def need(n: int) -> None:
        if len(args) != n:
            raise ParseError(f"{name} takes {n} argument(s), got {len(args)}")

    if name == "reorder":
        need(2)
        return Reorder(args[0], args[1])
    if name == "distribute":
        need(1)
        groups = tuple(g.strip() for g in tail.split("|") if g.strip())
        if len(groups) < 2:
            raise ParseError("distribute needs at least two groups, e.g. distribute(j;S1|S2)")
        return Distribute(args[0], groups)
    if name == "fuse":
        need(2)
        return Fuse(args[0], args[1])
    if name == "reverse":
        need(1)
        return Reverse(args[0])
    if name == "interchange":
        need(2)
        return Interchange(args[0], args[1])
    if name in ("linear", "skew"):
        if name == "skew":
            need(2)
            return LinearTransform(tuple(args), ((1, 0), (1, 1)))
        try:
            matrix = tuple(tuple(int(x) for x in row) for row in json.loads(tail))
        except (ValueError, TypeError) as e:
            raise ParseError(f"bad matrix in {text!r}: {e}") from None
        if len(matrix) != len(args) or any(len(row) != len(args) for row in matrix):
            raise ParseError(f"matrix must be {len(args)}x{len(args)}")
        return LinearTransform(tuple(args), matrix)
    if name == "stripmine":
        need(2)
        return Stripmine(args[0], _block(args[1]))
    if name == "split":
        loop, _, point = body.partition(",")
        if not point.strip():
            raise ParseError("split takes a loop and a split point")
        return IndexSetSplit(loop.strip(), point.strip())
    if name == "peel":
        if len(args) == 1:
            return Peel(args[0])
        need(2)
        if args[1] not in ("first", "last"):
            raise ParseError("peel end must be 'first' or 'last'")
        return Peel(args[0], args[1])
    if name == "tile":
        need(2)
        blocks = [b.strip() for b in tail.split(",") if b.strip()]
        if len(blocks) != 2:
            raise ParseError("tile needs two block sizes, e.g. tile(i,j;Bi,Bj)")
        return Tile(args[0], args[1], (_block(blocks[0]), _block(blocks[1])))
    raise ParseError(f"unknown transformation '{name}'")


def format_transform(t: TransformSpec) -> str:
    if isinstance(t, Reorder):
        return f"reorder({t.first},{t.second})"
    if isinstance(t, Distribute):
        return f"distribute({t.loop};{'|'.join(t.groups)})"
    if isinstance(t, Fuse):
        return f"fuse({t.first},{t.second})"
    if isinstance(t, Reverse):
        return f"reverse({t.loop})"
    if isinstance(t, Interchange):
        return f"interchange({t.outer},{t.inner})"
    if isinstance(t, LinearTransform):
        return f"linear({','.join(t.loops)};{json.dumps([list(r) for r in t.matrix], separators=(',', ':'))})"
    if isinstance(t, Stripmine):
        return f"stripmine({t.loop},{t.block})"
    if isinstance(t, IndexSetSplit):
        return f"split({t.loop},{t.point})"
    if isinstance(t, Peel):
        return f"peel({t.loop},{t.end})"
    return f"tile({t.outer},{t.inner};{t.blocks[0]},{t.blocks[1]})"


# ---------------------------------------------------------------------------
# Locating statements
# ---------------------------------------------------------------------------


def find_stmt(p: Program, designator: str) -> Stmt:
    """Statement with the given label"""
    for node in iter_stmts(p.body):
        if node.label == designator:
            return node
    raise TransformError(f"no statement labeled '{designator}'")


def find_loop(p: Program, designator: str) -> For:
    """Loop by label, unique loop variable, or label/var"""
    scope: Stmt = p.body
    if "/" in designator:
        label, _, designator = designator.partition("/")
        scope = find_stmt(p, label)
    for node in iter_stmts(scope):
        if node.label == designator:
            if not isinstance(node, For):
                raise TransformError(f"'{designator}' is not a loop")
            return node
    loops = [node for node in iter_stmts(scope) if isinstance(node, For) and node.var == designator]
    if not loops:
        raise TransformError(f"no loop '{designator}'")
    if len(loops) > 1:
        raise TransformError(f"loop variable '{designator}' is ambiguous; use a label or label/var")
    return loops[0]


def _context(p: Program, target: Stmt) -> tuple[tuple[For, ...], Formula]:
    """Loops enclosing target and the affine predicates guarding it"""
    chain = ancestors(p.body, target)
    if chain is None:
        raise TransformError(f"{describe(target)} is not part of {p.name}")
    loops: list[For] = []
    preds: list[Formula] = []
    for parent, child in zip(chain, [*chain[1:], target]):
        if isinstance(parent, For):
            loops.append(parent)
        elif isinstance(parent, If) and not isinstance(parent.cond, ValueCond):
            preds.append(parent.cond if child is parent.then else neg(parent.cond))
    context = conj(*(loop_range(loop) for loop in loops), *preds)
    return tuple(loops), context


def _parent_seq(p: Program, target: Stmt) -> Seq:
    chain = ancestors(p.body, target)
    if not chain or not isinstance(chain[-1], Seq):
        raise TransformError(f"{describe(target)} is not an element of a statement sequence")
    return chain[-1]


def _splice(p: Program, target: Stmt, parts: tuple[Stmt, ...]) -> Program:
    """Replace target by parts, inline in its enclosing sequence when it has one"""
    chain = ancestors(p.body, target)
    parent = chain[-1] if chain else None
    if isinstance(parent, Seq):
        stmts: list[Stmt] = []
        for s in parent.stmts:
            stmts.extend(parts if s is target else (s,))
        return p.with_body(replace_stmt(p.body, parent, replace(parent, stmts=tuple(stmts))))
    return p.with_body(replace_stmt(p.body, target, seq(*parts)))


def _drop_implied(context: Formula, bounds: tuple[AffineExpr, ...], dominated) -> tuple[AffineExpr, ...]:
    """Bounds of a max or min that never bind where context holds"""
    kept = list(bounds)
    for b in bounds:
        others = [o for o in kept if o is not b]
        if others and any(implies(context, dominated(b, o)) for o in others):
            kept = others
    return tuple(kept)


def _body_list(s: Stmt) -> list[Stmt]:
    return list(s.stmts) if isinstance(s, Seq) and s.label is None else [s]


def _only_child_loop(loop: For) -> For | None:
    inner = _body_list(loop.body)
    if len(inner) == 1 and isinstance(inner[0], For):
        return inner[0]
    return None


def _unit_step(loop: For, what: str) -> None:
    if loop.step not in (1, -1):
        raise TransformError(f"{what} needs loop {loop.var} to have unit step")


def _rectangular(loops: list[For]) -> None:
    nest_vars = {loop.var for loop in loops}
    for loop in loops:
        for e in (*loop.lower, *loop.upper):
            if e.free_names() & nest_vars:
                raise TransformError(f"bounds of loop {loop.var} depend on the nest; only rectangular nests are supported")


def _nest(p: Program, designators: tuple[str, ...]) -> list[For]:
    """Perfectly nested loops, outermost first"""
    loops = [find_loop(p, d) for d in designators]
    for outer, inner in zip(loops, loops[1:]):
        if _only_child_loop(outer) is not inner:
            raise TransformError(f"loop {inner.var} is not perfectly nested in loop {outer.var}")
    return loops


# ---------------------------------------------------------------------------
# Obligations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Obligation:
    """
    commute(left, right) under bindings.

    left_first records which instance runs first in the original program;
    the commutation question itself is symmetric.
    """

    left: Stmt
    right: Stmt
    bindings: Bindings
    live: frozenset[str]
    provenance: str
    left_name: str = ""
    right_name: str = ""
    left_first: bool = True
    symbols: tuple[str, ...] = ()

    def describe(self) -> str:
        return f"commute({self.left_name}, {self.right_name}) : {format_formula(self.bindings.ground)}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "left": self.left_name,
            "right": self.right_name,
            "bindings": format_formula(self.bindings.ground),
            "live": sorted(self.live),
            "provenance": self.provenance,
        }


def reordered_pairs(n: int, perm: tuple[int, ...] | list[int]) -> set[tuple[int, int]]:
    """
    Inversion set of a permutation of 1..n: pairs (i, j), i < j, whose
    relative order the permutation reverses. perm[i-1] is the new position
    of statement i.
    """
    if sorted(perm) != list(range(1, n + 1)):
        raise ValueError(f"{perm} is not a permutation of 1..{n}")
    return {(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if perm[i - 1] > perm[j - 1]}


class _Names:
    """Fresh symbol supply for one program"""

    def __init__(self, p: Program):
        self.taken = program_names(p) | stmt_names(p.body) | free_names(p.bindings().ground)

    def __call__(self, base: str) -> str:
        name = fresh_name(base, self.taken)
        self.taken.add(name)
        return name


def _var(name: str) -> AffineExpr:
    return AffineExpr.var(name)


def _before(loop: For, a: AffineExpr, b: AffineExpr) -> Formula:
    """Iteration a of loop runs before iteration b"""
    return Cmp("<", a, b) if loop.ascending else Cmp(">", a, b)


def _live_for(p: Program, loops: list[For]) -> frozenset[str]:
    """Every declared name except scalars private to the transformed loops"""
    private = {name for loop in loops for name in loop.private}
    return frozenset(a.name for a in p.arrays if a.name not in private)


def _instance_name(s: Stmt, args: list[str]) -> str:
    return f"{describe(s)}({','.join(args)})"


def _group_stmt(parts: list[Stmt]) -> Stmt:
    return parts[0] if len(parts) == 1 else Seq(tuple(parts), label=None)


def _distribute_groups(loop: For, groups: tuple[str, ...]) -> list[tuple[str, list[Stmt]]]:
    body = _body_list(loop.body)
    starts = []
    for g in groups:
        label = g.split(",")[0].strip()
        idx = next((i for i, s in enumerate(body) if s.label == label), None)
        if idx is None:
            raise TransformError(f"'{label}' is not a statement directly inside loop {loop.var}")
        starts.append(idx)
    if starts != sorted(starts) or len(set(starts)) != len(starts):
        raise TransformError("distribution groups must follow the order of the loop body")
    starts[0] = 0
    bounds = [*starts, len(body)]
    return [(groups[i].split(",")[0].strip(), body[bounds[i] : bounds[i + 1]]) for i in range(len(groups))]


def obligations_for(p: Program, t: TransformSpec) -> list[Obligation]:
    """Commutation conditions under which t preserves the meaning of p"""
    names = _Names(p)
    facts = p.bindings()

    def make(
        left: Stmt, right: Stmt, ground: Formula, live, provenance: str, lname: str, rname: str,
        left_first: bool, symbols: list[str],
    ) -> Obligation:
        return Obligation(
            left, right, Bindings(conj(facts.ground, ground), facts.facts), frozenset(live),
            provenance, lname, rname, left_first, tuple(symbols),
        )

    if isinstance(t, (Stripmine, IndexSetSplit, Peel)):
        find_loop(p, t.loop)
        return []

    if isinstance(t, Reorder):
        a, b = find_stmt(p, t.first), find_stmt(p, t.second)
        parent = _parent_seq(p, a)
        if _parent_seq(p, b) is not parent:
            raise TransformError(f"{t.first} and {t.second} are not in the same sequence")
        stmts = list(parent.stmts)
        i, j = sorted((stmts.index(a), stmts.index(b)))
        order = list(range(len(stmts)))
        order[i], order[j] = order[j], order[i]
        perm = [order.index(k) + 1 for k in range(len(stmts))]
        _, context = _context(p, parent)
        live = frozenset(x.name for x in p.arrays)
        out = []
        for x, y in sorted(reordered_pairs(len(stmts), perm)):
            sx, sy = stmts[x - 1], stmts[y - 1]
            out.append(make(sx, sy, context, live, format_transform(t), describe(sx), describe(sy), True, []))
        return _feasible(out)

    if isinstance(t, Distribute):
        loop = find_loop(p, t.loop)
        outer, context = _context(p, loop)
        groups = _distribute_groups(loop, t.groups)
        live = _live_for(p, [loop])
        l, m = names("l"), names("m")
        out = []
        for gi in range(len(groups)):
            for gj in range(gi + 1, len(groups)):
                (n1, s1), (n2, s2) = groups[gi], groups[gj]
                left = substitute_stmt(_group_stmt(s1), {loop.var: _var(l)})
                right = substitute_stmt(_group_stmt(s2), {loop.var: _var(m)})
                ground = conj(context, loop_range(loop, _var(l)), loop_range(loop, _var(m)), _before(loop, _var(m), _var(l)))
                out.append(make(left, right, ground, live, format_transform(t), f"{n1}({l})", f"{n2}({m})", False, [l, m]))
        return _feasible(out)

    if isinstance(t, Fuse):
        first, second = find_loop(p, t.first), find_loop(p, t.second)
        _check_fusable(p, first, second)
        _, context = _context(p, first)
        live = _live_for(p, [first, second])
        l, m = names("l"), names("m")
        left = substitute_stmt(first.body, {first.var: _var(l)})
        right = substitute_stmt(second.body, {second.var: _var(m)})
        ground = conj(context, loop_range(first, _var(l)), loop_range(second, _var(m)), _before(first, _var(m), _var(l)))
        return _feasible([
            make(left, right, ground, live, format_transform(t), _instance_name(first, [l]), _instance_name(second, [m]), True, [l, m])
        ])

    if isinstance(t, Reverse):
        loop = find_loop(p, t.loop)
        _unit_step(loop, "reversal")
        _, context = _context(p, loop)
        i, j = names("i"), names("j")
        left = substitute_stmt(loop.body, {loop.var: _var(i)})
        right = substitute_stmt(loop.body, {loop.var: _var(j)})
        ground = conj(context, loop_range(loop, _var(i)), loop_range(loop, _var(j)), _before(loop, _var(i), _var(j)))
        return _feasible([
            make(left, right, ground, _live_for(p, [loop]), format_transform(t), _instance_name(loop, [i]), _instance_name(loop, [j]), True, [i, j])
        ])

    if isinstance(t, Interchange):
        outer, inner = _nest(p, (t.outer, t.inner))
        _rectangular([outer, inner])
        _unit_step(outer, "interchange")
        _unit_step(inner, "interchange")
        _, context = _context(p, outer)
        a, b, c, d = names("p"), names("q"), names("r"), names("s")
        body = inner.body
        left = substitute_stmt(body, {outer.var: _var(a), inner.var: _var(b)})
        right = substitute_stmt(body, {outer.var: _var(c), inner.var: _var(d)})
        ground = conj(
            context,
            loop_range(outer, _var(a)), loop_range(inner, _var(b)),
            loop_range(outer, _var(c)), loop_range(inner, _var(d)),
            _before(outer, _var(a), _var(c)), _before(inner, _var(d), _var(b)),
        )
        return _feasible([
            make(left, right, ground, _live_for(p, [outer, inner]), format_transform(t),
                 _instance_name(body, [a, b]), _instance_name(body, [c, d]), True, [a, b, c, d])
        ])

    if isinstance(t, LinearTransform):
        loops = _nest(p, t.loops)
        _rectangular(loops)
        for loop in loops:
            if loop.step != 1:
                raise TransformError(f"linear transformation needs loop {loop.var} to have step 1")
        _unimodular(t.matrix)
        _, context = _context(p, loops[0])
        xs = [names(f"{loop.var}1") for loop in loops]
        ys = [names(f"{loop.var}2") for loop in loops]
        body = loops[-1].body
        left = substitute_stmt(body, {loop.var: _var(x) for loop, x in zip(loops, xs)})
        right = substitute_stmt(body, {loop.var: _var(y) for loop, y in zip(loops, ys)})
        tx = _apply_matrix(t.matrix, [_var(x) for x in xs])
        ty = _apply_matrix(t.matrix, [_var(y) for y in ys])
        ground = conj(
            context,
            *(loop_range(loop, _var(x)) for loop, x in zip(loops, xs)),
            *(loop_range(loop, _var(y)) for loop, y in zip(loops, ys)),
            lex_less([_var(x) for x in xs], [_var(y) for y in ys]),
            lex_less(ty, tx),
        )
        return _feasible([
            make(left, right, ground, _live_for(p, loops), format_transform(t),
                 _instance_name(body, xs), _instance_name(body, ys), True, [*xs, *ys])
        ])

    if isinstance(t, Tile):
        outer, inner = _nest(p, (t.outer, t.inner))
        _rectangular([outer, inner])
        for loop in (outer, inner):
            _tileable(p, loop)
        _, context = _context(p, outer)
        a, b, c, d = names("p"), names("q"), names("r"), names("s")
        P, Q, R, S = names("P"), names("Q"), names("R"), names("S")
        body = inner.body
        left = substitute_stmt(body, {outer.var: _var(a), inner.var: _var(b)})
        right = substitute_stmt(body, {outer.var: _var(c), inner.var: _var(d)})
        ground = conj(
            context,
            loop_range(outer, _var(a)), loop_range(inner, _var(b)),
            loop_range(outer, _var(c)), loop_range(inner, _var(d)),
            lex_less([_var(a), _var(b)], [_var(c), _var(d)]),
            _tile_origins(outer, t.blocks[0], P, a, R, c),
            _tile_origins(inner, t.blocks[1], Q, b, S, d),
            lex_less([_var(R), _var(S), _var(c), _var(d)], [_var(P), _var(Q), _var(a), _var(b)]),
        )
        return _feasible([
            make(left, right, ground, _live_for(p, [outer, inner]), format_transform(t),
                 _instance_name(body, [a, b]), _instance_name(body, [c, d]), True, [a, b, c, d, P, Q, R, S])
        ])

    raise TransformError(f"unsupported transformation {t!r}")


def _feasible(obligations: list[Obligation]) -> list[Obligation]:
    """Drop obligations whose instance constraints admit no pair"""
    out = []
    for ob in obligations:
        background = Background.for_statements(ob.bindings, (ob.left, ob.right))
        if background.consistent and background.sat(TRUE):
            out.append(ob)
        else:
            logger.debug(f"Obligation {ob.describe()} is vacuous")
    return out


def _tile_origins(loop: For, block: int | str, P: str, x: str, R: str, y: str) -> Formula:
    """Tile origins P of x and R of y: P <= x < P+B, both on the tile grid"""
    size = AffineExpr.constant(block) if isinstance(block, int) else _var(block)
    start = loop.start
    parts: list[Formula] = [
        Cmp("<=", _var(P), _var(x)), Cmp("<=", _var(x), _var(P) + size - 1),
        Cmp("<=", _var(R), _var(y)), Cmp("<=", _var(y), _var(R) + size - 1),
        Cmp("<=", start, _var(P)), Cmp("<=", start, _var(R)),
    ]
    if isinstance(block, int):
        parts += [Mod(_var(P) - start, block, 0), Mod(_var(R) - start, block, 0)]
    else:
        parts += [
            Cmp(">=", size, AffineExpr.constant(1)),
            disj(
                Cmp("=", _var(P), _var(R)),
                Cmp("<=", _var(P) + size, _var(R)),
                Cmp("<=", _var(R) + size, _var(P)),
            ),
        ]
    return conj(*parts)


def _tileable(p: Program, loop: For) -> None:
    if loop.step != 1 or len(loop.lower) != 1 or len(loop.upper) != 1:
        raise TransformError(f"tiling needs loop {loop.var} with step 1 and single bounds")


def _unimodular(matrix: tuple[tuple[int, ...], ...]) -> sympy.Matrix:
    m = sympy.Matrix(matrix)
    if abs(m.det()) != 1:
        raise TransformError(f"matrix {json.dumps([list(r) for r in matrix])} is not unimodular")
    return m


def _apply_matrix(matrix: tuple[tuple[int, ...], ...], xs: list[AffineExpr]) -> list[AffineExpr]:
    out = []
    for row in matrix:
        total = AffineExpr()
        for c, x in zip(row, xs):
            total = total + x * c
        out.append(total)
    return out


def _check_fusable(p: Program, first: For, second: For) -> None:
    parent = _parent_seq(p, first)
    stmts = list(parent.stmts)
    if second not in stmts or stmts.index(second) != stmts.index(first) + 1:
        raise TransformError(f"loops {describe(first)} and {describe(second)} are not adjacent")
    if (first.lower, first.upper, first.step) != (second.lower, second.upper, second.step):
        raise TransformError("fused loops must have identical bounds and step")


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------


def _relabel(s: Stmt, suffix: str) -> Stmt:
    return map_labels(s, lambda label: f"{label}{suffix}")


def apply(p: Program, t: TransformSpec) -> Program:
    """Rewrite p by t; legality is not checked"""
    names = _Names(p)

    if isinstance(t, Reorder):
        a, b = find_stmt(p, t.first), find_stmt(p, t.second)
        parent = _parent_seq(p, a)
        if _parent_seq(p, b) is not parent:
            raise TransformError(f"{t.first} and {t.second} are not in the same sequence")
        stmts = list(parent.stmts)
        i, j = stmts.index(a), stmts.index(b)
        stmts[i], stmts[j] = stmts[j], stmts[i]
        return p.with_body(replace_stmt(p.body, parent, replace(parent, stmts=tuple(stmts))))

    if isinstance(t, Distribute):
        loop = find_loop(p, t.loop)
        groups = _distribute_groups(loop, t.groups)
        loops = [
            replace(loop, body=seq(*parts), label=loop.label if gi == 0 else None)
            for gi, (_, parts) in enumerate(groups)
        ]
        return _splice(p, loop, tuple(loops))

    if isinstance(t, Fuse):
        first, second = find_loop(p, t.first), find_loop(p, t.second)
        _check_fusable(p, first, second)
        body2 = substitute_stmt(second.body, {second.var: _var(first.var)})
        fused = replace(first, body=seq(first.body, body2))
        parent = _parent_seq(p, first)
        stmts = [s for s in parent.stmts if s is not second]
        stmts[stmts.index(first)] = fused
        return p.with_body(replace_stmt(p.body, parent, replace(parent, stmts=tuple(stmts))))

    if isinstance(t, Reverse):
        loop = find_loop(p, t.loop)
        _unit_step(loop, "reversal")
        reversed_loop = replace(loop, lower=loop.upper, upper=loop.lower, step=-loop.step)
        return p.with_body(replace_stmt(p.body, loop, reversed_loop))

    if isinstance(t, Interchange):
        outer, inner = _nest(p, (t.outer, t.inner))
        _rectangular([outer, inner])
        new_inner = replace(outer, body=inner.body, label=inner.label)
        new_outer = replace(inner, body=Seq((new_inner,)), label=outer.label)
        return p.with_body(replace_stmt(p.body, outer, new_outer))

    if isinstance(t, LinearTransform):
        loops = _nest(p, t.loops)
        _rectangular(loops)
        for loop in loops:
            if loop.step != 1 or len(loop.lower) != 1 or len(loop.upper) != 1:
                raise TransformError(f"linear transformation needs loop {loop.var} with step 1 and single bounds")
        matrix = _unimodular(t.matrix)
        inverse = matrix.inv()
        new_vars = [names(f"t{loop.var}") for loop in loops]
        us = [_var(v) for v in new_vars]
        originals = {
            loop.var: sum((us[d] * int(inverse[c, d]) for d in range(len(loops))), AffineExpr())
            for c, loop in enumerate(loops)
        }
        guard = conj(*(
            conj(Cmp("<=", loop.lower[0], originals[loop.var]), Cmp("<=", originals[loop.var], loop.upper[0]))
            for loop in loops
        ))
        body: Stmt = Seq((If(guard, seq(substitute_stmt(loops[-1].body, originals))),))
        for d in reversed(range(len(loops))):
            lo, hi = AffineExpr(), AffineExpr()
            for c, loop in enumerate(loops):
                coeff = t.matrix[d][c]
                if coeff > 0:
                    lo, hi = lo + loop.lower[0] * coeff, hi + loop.upper[0] * coeff
                elif coeff < 0:
                    lo, hi = lo + loop.upper[0] * coeff, hi + loop.lower[0] * coeff
            body = For(new_vars[d], (lo,), (hi,), body if isinstance(body, Seq) else Seq((body,)))
        return p.with_body(replace_stmt(p.body, loops[0], replace(body, label=loops[0].label)))

    if isinstance(t, Stripmine):
        loop = find_loop(p, t.loop)
        _stripminable(p, loop, t.block)
        outer_var = names(f"{loop.var}{t.block}" if isinstance(t.block, str) else f"{loop.var}B")
        size = AffineExpr.constant(t.block) if isinstance(t.block, int) else _var(t.block)
        inner = replace(loop, lower=(_var(outer_var),), upper=(_var(outer_var) + size - 1, *loop.upper), label=None)
        outer = For(outer_var, loop.lower, loop.upper, Seq((inner,)), t.block, loop.label)
        return p.with_body(replace_stmt(p.body, loop, outer))

    if isinstance(t, IndexSetSplit):
        loop = find_loop(p, t.loop)
        if loop.step != 1:
            raise TransformError(f"index-set splitting needs loop {loop.var} to have step 1")
        point = parse_affine(t.point, p)
        _, context = _context(p, loop)
        upper = _drop_implied(context, (*loop.upper, point - 1), lambda b, o: Cmp("<=", o, b))
        lower = _drop_implied(context, (*loop.lower, point), lambda b, o: Cmp("<=", b, o))
        first = replace(loop, upper=upper)
        second = replace(
            loop, lower=lower, body=_relabel(loop.body, "_2"),
            label=None if loop.label is None else f"{loop.label}_2",
        )
        return _splice(p, loop, (first, second))

    if isinstance(t, Peel):
        loop = find_loop(p, t.loop)
        if loop.step != 1:
            raise TransformError(f"peeling needs loop {loop.var} to have step 1")
        if t.end == "first":
            if len(loop.lower) != 1:
                raise TransformError(f"peeling the first iteration needs loop {loop.var} to have a single start")
            at = loop.lower[0]
            guard = conj(*(Cmp("<=", at, u) for u in loop.upper))
            peeled = If(guard, seq(_relabel(substitute_stmt(loop.body, {loop.var: at}), "_peel")))
            rest = replace(loop, lower=(at + 1,))
            parts: tuple[Stmt, ...] = (peeled, rest)
        else:
            if len(loop.upper) != 1:
                raise TransformError(f"peeling the last iteration needs loop {loop.var} to have a single end")
            at = loop.upper[0]
            guard = conj(*(Cmp("<=", lo, at) for lo in loop.lower))
            peeled = If(guard, seq(_relabel(substitute_stmt(loop.body, {loop.var: at}), "_peel")))
            rest = replace(loop, upper=(at - 1,))
            parts = (rest, peeled)
        return _splice(p, loop, parts)

    if isinstance(t, Tile):
        outer, inner = _nest(p, (t.outer, t.inner))
        _rectangular([outer, inner])
        for loop in (outer, inner):
            _tileable(p, loop)
        nest = inner.body
        for loop, block in ((inner, t.blocks[1]), (outer, t.blocks[0])):
            _stripminable(p, loop, block)
        tiles = []
        for loop, block in ((outer, t.blocks[0]), (inner, t.blocks[1])):
            tile_var = names(f"{loop.var}T")
            size = AffineExpr.constant(block) if isinstance(block, int) else _var(block)
            tiles.append((loop, tile_var, size, block))
        body: Stmt = nest
        for loop, tile_var, size, _ in reversed(tiles):
            body = For(loop.var, (_var(tile_var),), (_var(tile_var) + size - 1, *loop.upper), _as_seq(body))
        for loop, tile_var, _, block in reversed(tiles):
            body = For(tile_var, loop.lower, loop.upper, _as_seq(body), block)
        return p.with_body(replace_stmt(p.body, outer, replace(body, label=outer.label)))

    raise TransformError(f"unsupported transformation {t!r}")


def _as_seq(s: Stmt) -> Seq:
    return s if isinstance(s, Seq) else Seq((s,))


def _stripminable(p: Program, loop: For, block: int | str) -> None:
    if loop.step != 1 or len(loop.lower) != 1:
        raise TransformError(f"stripmining needs loop {loop.var} with step 1 and a single start")
    if isinstance(block, int):
        if block < 1:
            raise TransformError(f"block size must be positive, got {block}")
    elif block not in p.params:
        raise TransformError(f"block size '{block}' is not a parameter of {p.name}")


# ---------------------------------------------------------------------------
# Dependence baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dependence:
    source: str
    sink: str
    kind: str
    array: str
    witness: dict[str, int] | None = None

    def __str__(self) -> str:
        where = ""
        if self.witness:
            where = " at " + ", ".join(f"{k}={v}" for k, v in sorted(self.witness.items()))
        return f"{self.kind} dependence {self.source} -> {self.sink} on {self.array}{where}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "sink": self.sink,
            "kind": self.kind,
            "array": self.array,
            "witness": self.witness,
        }


@dataclass
class DependenceReport:
    transform: str
    dependences: list[Dependence] = field(default_factory=list)

    @property
    def legal(self) -> bool:
        return not self.dependences

    def to_dict(self) -> dict[str, Any]:
        return {
            "transform": self.transform,
            "legal": self.legal,
            "dependences": [d.to_dict() for d in self.dependences],
        }


def _renamed(access: Access, tag: str) -> tuple[Formula, tuple[AffineExpr, ...] | None]:
    mapping = {loop.var: _var(f"{loop.var}#{tag}") for loop in access.loops}
    parts = [loop_range(loop) for loop in access.loops] + list(access.preds)
    where = conj(*(substitute(f, mapping) for f in parts))
    if not access.ref.is_affine:
        return where, None
    return where, tuple(ix.substitute(mapping) for ix in access.ref.indices)


def _kind(first_write: bool, second_write: bool) -> str:
    if first_write and second_write:
        return "output"
    return "flow" if first_write else "anti"


def dependence_legality(p: Program, t: TransformSpec) -> DependenceReport:
    """
    Memory-based dependence test: t is legal when no pair of instances it
    reorders touches a common cell with at least one write. Opaque index
    terms are unconstrained, so they may alias anything.
    """
    report = DependenceReport(format_transform(t))
    loop_vars = {s.var for s in iter_stmts(p.body) if isinstance(s, For)}
    for ob in obligations_for(p, t):
        first, second = (ob.left, ob.right) if ob.left_first else (ob.right, ob.left)
        fname, sname = (ob.left_name, ob.right_name) if ob.left_first else (ob.right_name, ob.left_name)
        acc1 = accesses(first, p.int_arrays)
        acc2 = accesses(second, p.int_arrays)
        found: set[tuple[str, str]] = set()
        for a1 in acc1:
            for a2 in acc2:
                if not (a1.write or a2.write) or a1.ref.name != a2.ref.name:
                    continue
                kind = _kind(a1.write, a2.write)
                if (kind, a1.ref.name) in found:
                    continue
                where1, ix1 = _renamed(a1, "1")
                where2, ix2 = _renamed(a2, "2")
                alias = TRUE
                if ix1 is not None and ix2 is not None and len(ix1) == len(ix2):
                    alias = conj(*(Cmp("=", x, y) for x, y in zip(ix1, ix2)))
                query = conj(ob.bindings.ground, where1, where2, alias)
                table = SkolemTable()
                for term in sorted(opaque_terms(query), key=str):
                    table.symbol_for(term)
                grounded = skolemize_formula(query, table)
                if query == FALSE or not is_satisfiable(grounded):
                    continue
                found.add((kind, a1.ref.name))
                symbols = [s for s in ob.symbols if s in free_names(grounded)]
                symbols += sorted(n for n in free_names(grounded) if n in p.params or n in loop_vars)
                witness = find_witness(grounded, symbols)
                report.dependences.append(Dependence(fname, sname, kind, a1.ref.name, witness))
                logger.debug(f"{report.dependences[-1]}")
    return report


__all__ = [
    "Dependence",
    "DependenceReport",
    "Distribute",
    "Fuse",
    "IndexSetSplit",
    "Interchange",
    "LinearTransform",
    "Obligation",
    "Peel",
    "Reorder",
    "Reverse",
    "Stripmine",
    "Tile",
    "TransformSpec",
    "apply",
    "dependence_legality",
    "find_loop",
    "format_transform",
    "obligations_for",
    "parse_transform",
    "reordered_pairs",
]
