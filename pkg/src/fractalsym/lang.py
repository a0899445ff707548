"""
The structured loop language: AST, well-formedness and static queries.

Programs are built from assignments, counted loops, conditionals and
sequences. Every node is an immutable dataclass; rewrites return new trees.
Scalars are rank-0 arrays, so a scalar reference is Ref(name, ()).
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Union

from .affine import (
    QUOTIENT,
    AffineExpr,
    Bindings,
    Cmp,
    Formula,
    Mod,
    Opaque,
    conj,
    free_names,
    neg,
    opaque_terms,
    substitute,
)

logger = logging.getLogger("fractalsym.lang")

BUILTINS = frozenset({"abs"})
OPERATORS = ("+", "-", "*", "/", "neg")


# ---------------------------------------------------------------------------
# Value expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NonAffineIndex:
    """Index expression outside the affine fragment, e.g. i*i"""

    expr: ValExpr

    def __str__(self) -> str:
        return str(self.expr)


Index = Union[AffineExpr, NonAffineIndex]


def _index_str(ix: Index) -> str:
    return str(ix)


@dataclass(frozen=True)
class Ref:
    """Array cell or scalar reference"""

    name: str
    indices: tuple[Index, ...] = ()

    def __str__(self) -> str:
        if not self.indices:
            return self.name
        return f"{self.name}({','.join(_index_str(i) for i in self.indices)})"

    @property
    def is_affine(self) -> bool:
        return all(isinstance(i, AffineExpr) for i in self.indices)

    def substitute(self, mapping: Mapping[str, AffineExpr]) -> Ref:
        return Ref(self.name, tuple(_subst_index(i, mapping) for i in self.indices))


class ValExpr:
    """Base class of numeric value expressions"""

    precedence = 4


@dataclass(frozen=True)
class Const(ValExpr):
    value: Fraction

    @property
    def precedence(self) -> int:  # type: ignore[override]
        return 4 if self.value.denominator == 1 and self.value >= 0 else 3

    def __str__(self) -> str:
        if self.value.denominator == 1:
            return str(self.value.numerator)
        return f"({self.value.numerator}/{self.value.denominator})"


@dataclass(frozen=True)
class Read(ValExpr):
    ref: Ref

    def __str__(self) -> str:
        return str(self.ref)


@dataclass(frozen=True)
class IndexValue(ValExpr):
    """Integer affine quantity used as a value, e.g. p(j) = i"""

    expr: AffineExpr

    @property
    def precedence(self) -> int:  # type: ignore[override]
        e = self.expr
        simple = (len(e.terms) == 1 and e.const == 0 and e.terms[0][1] == 1) or (
            not e.terms and e.const >= 0
        )
        return 4 if simple else 1

    def __str__(self) -> str:
        return str(self.expr)


@dataclass(frozen=True)
class Op(ValExpr):
    """Arithmetic: op in +, -, *, / (binary) or neg (unary)"""

    op: str
    args: tuple[ValExpr, ...]

    @property
    def precedence(self) -> int:  # type: ignore[override]
        return {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3}[self.op]

    def __str__(self) -> str:
        if self.op == "neg":
            return f"-{_paren(self.args[0], 3)}"
        left, right = self.args
        # left-associative: the right operand needs parens at equal precedence
        return f"{_paren(left, self.precedence)} {self.op} {_paren(right, self.precedence + 1)}"


@dataclass(frozen=True)
class Apply(ValExpr):
    """Uninterpreted or builtin function application, e.g. abs(x)"""

    fn: str
    args: tuple[ValExpr, ...]

    def __str__(self) -> str:
        return f"{self.fn}({', '.join(str(a) for a in self.args)})"


def _paren(e: ValExpr, min_prec: int) -> str:
    return f"({e})" if e.precedence < min_prec else str(e)


@dataclass(frozen=True)
class ValueCond:
    """Comparison of value expressions, e.g. abs(A(i,j)) > abs(A(p(j),j))"""

    op: str
    lhs: ValExpr
    rhs: ValExpr

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


Condition = Union[Formula, ValueCond]


def map_value(e: ValExpr, fn: Callable[[ValExpr], ValExpr | None]) -> ValExpr:
    """Bottom-up rewrite; fn returns a replacement or None to keep the node"""
    if isinstance(e, Op):
        e = Op(e.op, tuple(map_value(a, fn) for a in e.args))
    elif isinstance(e, Apply):
        e = Apply(e.fn, tuple(map_value(a, fn) for a in e.args))
    out = fn(e)
    return e if out is None else out


def value_reads(e: ValExpr) -> Iterator[Ref]:
    if isinstance(e, Read):
        yield e.ref
    elif isinstance(e, (Op, Apply)):
        for a in e.args:
            yield from value_reads(a)


def _subst_index(ix: Index, mapping: Mapping[str, AffineExpr]) -> Index:
    if isinstance(ix, AffineExpr):
        return ix.substitute(mapping)
    return NonAffineIndex(subst_value(ix.expr, mapping))


def subst_value(e: ValExpr, mapping: Mapping[str, AffineExpr]) -> ValExpr:
    def visit(node: ValExpr) -> ValExpr | None:
        if isinstance(node, Read):
            return Read(node.ref.substitute(mapping))
        if isinstance(node, IndexValue):
            return IndexValue(node.expr.substitute(mapping))
        return None

    return map_value(e, visit)


def subst_cond(c: Condition, mapping: Mapping[str, AffineExpr]) -> Condition:
    if isinstance(c, ValueCond):
        return ValueCond(c.op, subst_value(c.lhs, mapping), subst_value(c.rhs, mapping))
    return substitute(c, mapping)


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


class Stmt:
    """Base class of statements; every statement may carry a label"""

    label: str | None


@dataclass(frozen=True)
class Assign(Stmt):
    lhs: Ref
    rhs: ValExpr
    label: str | None = None


@dataclass(frozen=True)
class Seq(Stmt):
    stmts: tuple[Stmt, ...] = ()
    label: str | None = None


@dataclass(frozen=True)
class For(Stmt):
    """
    Counted loop. lower holds the start expressions and upper the end
    expressions; with a positive step the start is their max and the end
    their min, with a negative step the reverse.
    """

    var: str
    lower: tuple[AffineExpr, ...]
    upper: tuple[AffineExpr, ...]
    body: Stmt
    step: int | str = 1
    label: str | None = None
    private: tuple[str, ...] = ()

    @property
    def ascending(self) -> bool:
        return isinstance(self.step, str) or self.step > 0

    @property
    def start(self) -> AffineExpr:
        return self.lower[0]


@dataclass(frozen=True)
class If(Stmt):
    cond: Condition
    then: Stmt
    orelse: Stmt | None = None
    label: str | None = None


def loop_range(loop: For, var: AffineExpr | None = None) -> Formula:
    """Affine iteration-space constraint of loop at var (default: its own variable)"""
    v = AffineExpr.var(loop.var) if var is None else var
    if loop.ascending:
        lo = [Cmp("<=", e, v) for e in loop.lower]
        hi = [Cmp("<=", v, e) for e in loop.upper]
    else:
        lo = [Cmp(">=", e, v) for e in loop.lower]
        hi = [Cmp(">=", v, e) for e in loop.upper]
    parts: list[Formula] = lo + hi
    if isinstance(loop.step, int) and abs(loop.step) != 1:
        parts.append(Mod(v - loop.start, abs(loop.step), 0))
    return conj(*parts)


def seq(*stmts: Stmt, label: str | None = None) -> Seq:
    """Sequence with nested unlabeled sequences flattened"""
    flat: list[Stmt] = []
    for s in stmts:
        if isinstance(s, Seq) and s.label is None:
            flat.extend(s.stmts)
        else:
            flat.append(s)
    return Seq(tuple(flat), label)


def children(s: Stmt) -> tuple[Stmt, ...]:
    if isinstance(s, Seq):
        return s.stmts
    if isinstance(s, For):
        return (s.body,)
    if isinstance(s, If):
        return (s.then,) if s.orelse is None else (s.then, s.orelse)
    return ()


def iter_stmts(s: Stmt) -> Iterator[Stmt]:
    """Pre-order walk"""
    yield s
    for c in children(s):
        yield from iter_stmts(c)


def find_label(s: Stmt, label: str) -> Stmt | None:
    for node in iter_stmts(s):
        if node.label == label:
            return node
    return None


def ancestors(root: Stmt, target: Stmt) -> list[Stmt] | None:
    """Chain of statements from root down to target (exclusive), matched by identity"""
    if root is target:
        return []
    for c in children(root):
        found = ancestors(c, target)
        if found is not None:
            return [root, *found]
    return None


def replace_stmt(root: Stmt, target: Stmt, new: Stmt) -> Stmt:
    """Copy of root with the node identical to target replaced by new"""
    if root is target:
        return new
    if isinstance(root, Seq):
        return replace(root, stmts=tuple(replace_stmt(c, target, new) for c in root.stmts))
    if isinstance(root, For):
        return replace(root, body=replace_stmt(root.body, target, new))
    if isinstance(root, If):
        orelse = None if root.orelse is None else replace_stmt(root.orelse, target, new)
        return replace(root, then=replace_stmt(root.then, target, new), orelse=orelse)
    return root


def map_labels(s: Stmt, fn: Callable[[str], str]) -> Stmt:
    label = None if s.label is None else fn(s.label)
    if isinstance(s, Seq):
        return replace(s, stmts=tuple(map_labels(c, fn) for c in s.stmts), label=label)
    if isinstance(s, For):
        return replace(s, body=map_labels(s.body, fn), label=label)
    if isinstance(s, If):
        orelse = None if s.orelse is None else map_labels(s.orelse, fn)
        return replace(s, then=map_labels(s.then, fn), orelse=orelse, label=label)
    return replace(s, label=label)


def substitute_stmt(s: Stmt, mapping: Mapping[str, AffineExpr]) -> Stmt:
    """Replace free loop variables or parameters; inner loops shadow their own variable"""
    if not mapping:
        return s
    if isinstance(s, Assign):
        return replace(s, lhs=s.lhs.substitute(mapping), rhs=subst_value(s.rhs, mapping))
    if isinstance(s, Seq):
        return replace(s, stmts=tuple(substitute_stmt(c, mapping) for c in s.stmts))
    if isinstance(s, If):
        orelse = None if s.orelse is None else substitute_stmt(s.orelse, mapping)
        return replace(
            s,
            cond=subst_cond(s.cond, mapping),
            then=substitute_stmt(s.then, mapping),
            orelse=orelse,
        )
    if isinstance(s, For):
        inner = {k: v for k, v in mapping.items() if k != s.var}
        return replace(
            s,
            lower=tuple(e.substitute(mapping) for e in s.lower),
            upper=tuple(e.substitute(mapping) for e in s.upper),
            body=substitute_stmt(s.body, inner),
        )
    raise TypeError(f"Unknown statement {type(s).__name__}")


def describe(s: Stmt) -> str:
    """Short human name for traces"""
    if s.label:
        return s.label
    if isinstance(s, For):
        return f"for {s.var}"
    if isinstance(s, If):
        return "if"
    if isinstance(s, Assign):
        return str(s.lhs)
    return "{...}"


# ---------------------------------------------------------------------------
# Accesses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Access:
    """One syntactic read or write with its enclosing loops and affine predicates"""

    ref: Ref
    write: bool
    stmt: Stmt
    loops: tuple[For, ...]
    preds: tuple[Formula, ...]
    # positions of the enclosing statements, used to order accesses within an iteration
    position: tuple[int, ...] = ()


def _opaque_reads(ix: Index, int_arrays: frozenset[str]) -> Iterator[Ref]:
    if isinstance(ix, NonAffineIndex):
        for ref in value_reads(ix.expr):
            yield ref
            for i in ref.indices:
                yield from _opaque_reads(i, int_arrays)
        return
    for term in ix.opaque_terms():
        if term.fn in int_arrays:
            yield Ref(term.fn, term.args)


def _ref_reads(ref: Ref, int_arrays: frozenset[str]) -> Iterator[Ref]:
    for ix in ref.indices:
        yield from _opaque_reads(ix, int_arrays)


def _value_all_reads(e: ValExpr, int_arrays: frozenset[str]) -> Iterator[Ref]:
    for ref in value_reads(e):
        yield ref
        yield from _ref_reads(ref, int_arrays)
    for node in _value_nodes(e):
        if isinstance(node, IndexValue):
            yield from _opaque_reads(node.expr, int_arrays)


def _value_nodes(e: ValExpr) -> Iterator[ValExpr]:
    yield e
    if isinstance(e, (Op, Apply)):
        for a in e.args:
            yield from _value_nodes(a)


def _cond_reads(c: Condition, int_arrays: frozenset[str]) -> Iterator[Ref]:
    if isinstance(c, ValueCond):
        yield from _value_all_reads(c.lhs, int_arrays)
        yield from _value_all_reads(c.rhs, int_arrays)
        return
    for term in opaque_terms(c):
        if term.fn in int_arrays:
            yield Ref(term.fn, term.args)


def accesses(s: Stmt, int_arrays: frozenset[str] = frozenset()) -> list[Access]:
    """Every read and write in s; opaque index terms over int arrays count as reads"""
    out: list[Access] = []

    def walk(node: Stmt, loops: tuple[For, ...], preds: tuple[Formula, ...], pos: tuple[int, ...]):
        if isinstance(node, Assign):
            for ref in _value_all_reads(node.rhs, int_arrays):
                out.append(Access(ref, False, node, loops, preds, pos))
            for ref in _ref_reads(node.lhs, int_arrays):
                out.append(Access(ref, False, node, loops, preds, pos))
            out.append(Access(node.lhs, True, node, loops, preds, pos))
        elif isinstance(node, Seq):
            for i, c in enumerate(node.stmts):
                walk(c, loops, preds, (*pos, i))
        elif isinstance(node, For):
            walk(node.body, (*loops, node), preds, pos)
        elif isinstance(node, If):
            for ref in _cond_reads(node.cond, int_arrays):
                out.append(Access(ref, False, node, loops, preds, pos))
            if isinstance(node.cond, ValueCond):
                walk(node.then, loops, preds, (*pos, 0))
                if node.orelse is not None:
                    walk(node.orelse, loops, preds, (*pos, 1))
            else:
                walk(node.then, loops, (*preds, node.cond), (*pos, 0))
                if node.orelse is not None:
                    walk(node.orelse, loops, (*preds, neg(node.cond)), (*pos, 1))

    walk(s, (), (), ())
    return out


def altered_vars(s: Stmt) -> set[str]:
    """Root names of every assignment target in s"""
    return {node.lhs.name for node in iter_stmts(s) if isinstance(node, Assign)}


# ---------------------------------------------------------------------------
# Program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArrayDecl:
    """Array (or scalar when bounds is empty) declaration"""

    name: str
    bounds: tuple[tuple[AffineExpr, AffineExpr], ...] = ()
    kind: str = "real"
    role: str = "inout"

    @property
    def rank(self) -> int:
        return len(self.bounds)

    def index_range(self, indices: tuple[AffineExpr, ...]) -> Formula:
        """Declared bounds at the given index vector"""
        parts: list[Formula] = []
        for (lo, hi), ix in zip(self.bounds, indices):
            parts.append(Cmp("<=", lo, ix))
            parts.append(Cmp("<=", ix, hi))
        return conj(*parts)


@dataclass(frozen=True)
class Program:
    name: str
    params: tuple[str, ...] = ()
    assumes: tuple[Formula, ...] = ()
    arrays: tuple[ArrayDecl, ...] = ()
    functions: tuple[str, ...] = ()
    body: Seq = field(default_factory=Seq)
    outputs: tuple[str, ...] = ()

    def decl(self, name: str) -> ArrayDecl | None:
        for a in self.arrays:
            if a.name == name:
                return a
        return None

    @property
    def scalars(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.arrays if a.rank == 0)

    @property
    def int_arrays(self) -> frozenset[str]:
        return frozenset(a.name for a in self.arrays if a.kind == "int")

    def bindings(self) -> Bindings:
        return Bindings.from_formulas(self.assumes)

    def with_body(self, body: Stmt) -> Program:
        if not isinstance(body, Seq):
            body = Seq((body,))
        return mark_private(replace(self, body=body))


# ---------------------------------------------------------------------------
# Private scalars
# ---------------------------------------------------------------------------


def _defined_before_use(s: Stmt, name: str, defined: bool) -> tuple[bool, bool]:
    """(every read of name sees a write earlier in its loop iteration, defined afterwards)"""
    if isinstance(s, Assign):
        reads = {r.name for r in _value_all_reads(s.rhs, frozenset())}
        reads |= {r.name for r in _ref_reads(s.lhs, frozenset())}
        if name in reads and not defined:
            return False, defined
        return True, defined or s.lhs.name == name
    if isinstance(s, Seq):
        for c in s.stmts:
            ok, defined = _defined_before_use(c, name, defined)
            if not ok:
                return False, defined
        return True, defined
    if isinstance(s, If):
        if name in {r.name for r in _cond_reads(s.cond, frozenset())} and not defined:
            return False, defined
        ok1, d1 = _defined_before_use(s.then, name, defined)
        ok2, d2 = (True, defined) if s.orelse is None else _defined_before_use(s.orelse, name, defined)
        return ok1 and ok2, d1 and d2
    if isinstance(s, For):
        ok, _ = _defined_before_use(s.body, name, False)
        return ok, defined
    raise TypeError(f"Unknown statement {type(s).__name__}")


def private_scalars(p: Program) -> set[str]:
    """Scalars, not live-out, whose every read follows a write in the same loop iteration"""
    out = set()
    for name in p.scalars:
        if name in p.outputs:
            continue
        ok, _ = _defined_before_use(p.body, name, False)
        if ok:
            out.add(name)
    return out


def _mark(s: Stmt, private: set[str]) -> Stmt:
    if isinstance(s, Seq):
        return replace(s, stmts=tuple(_mark(c, private) for c in s.stmts))
    if isinstance(s, If):
        orelse = None if s.orelse is None else _mark(s.orelse, private)
        return replace(s, then=_mark(s.then, private), orelse=orelse)
    if isinstance(s, For):
        body = _mark(s.body, private)
        written = tuple(sorted(altered_vars(body) & private))
        return replace(s, body=body, private=written)
    return s


def mark_private(p: Program) -> Program:
    """Record on each loop the private scalars its body writes"""
    private = private_scalars(p)
    if private:
        logger.debug(f"Private scalars in {p.name}: {sorted(private)}")
    return replace(p, body=_mark(p.body, private))


def expand_private(s: Stmt) -> Stmt:
    """Scalar expansion: private scalars gain one index per enclosing loop that privatizes them"""

    def walk(node: Stmt, extra: Mapping[str, tuple[AffineExpr, ...]]) -> Stmt:
        if isinstance(node, Assign):
            return replace(node, lhs=_expand_ref(node.lhs, extra), rhs=_expand_value(node.rhs, extra))
        if isinstance(node, Seq):
            return replace(node, stmts=tuple(walk(c, extra) for c in node.stmts))
        if isinstance(node, If):
            cond = node.cond
            if isinstance(cond, ValueCond):
                cond = ValueCond(cond.op, _expand_value(cond.lhs, extra), _expand_value(cond.rhs, extra))
            orelse = None if node.orelse is None else walk(node.orelse, extra)
            return replace(node, cond=cond, then=walk(node.then, extra), orelse=orelse)
        if isinstance(node, For):
            inner = dict(extra)
            for name in node.private:
                inner[name] = (*inner.get(name, ()), AffineExpr.var(node.var))
            return replace(node, body=walk(node.body, inner), private=())
        return node

    return walk(s, {})


def _expand_ref(ref: Ref, extra: Mapping[str, tuple[AffineExpr, ...]]) -> Ref:
    if not ref.indices and ref.name in extra:
        return Ref(ref.name, extra[ref.name])
    return ref


def _expand_value(e: ValExpr, extra: Mapping[str, tuple[AffineExpr, ...]]) -> ValExpr:
    if not extra:
        return e

    def visit(node: ValExpr) -> ValExpr | None:
        if isinstance(node, Read):
            return Read(_expand_ref(node.ref, extra))
        return None

    return map_value(e, visit)


# ---------------------------------------------------------------------------
# Well-formedness
# ---------------------------------------------------------------------------


class _Checker:
    def __init__(self, p: Program):
        self.p = p
        self.diagnostics: list[str] = []
        self.params = set(p.params)
        self.arrays = {a.name: a for a in p.arrays}
        self.functions = set(p.functions) | BUILTINS
        self.labels: set[str] = set()

    def report(self, message: str) -> None:
        if message not in self.diagnostics:
            self.diagnostics.append(message)

    def check_decls(self) -> None:
        seen: set[str] = set()
        for name in [*self.p.params, *(a.name for a in self.p.arrays), *self.p.functions]:
            if name in seen:
                self.report(f"duplicate declaration of '{name}'")
            if name == QUOTIENT:
                self.report(f"'{name}' is reserved for integer division")
            seen.add(name)
        for a in self.p.arrays:
            for lo, hi in a.bounds:
                for name in lo.free_names() | hi.free_names():
                    if name not in self.params:
                        self.report(f"bound of array '{a.name}' references non-parameter '{name}'")
        for name in self.p.outputs:
            if name not in self.arrays:
                self.report(f"output '{name}' is not a declared array or scalar")
        for f in self.p.assumes:
            self.check_formula(f, set(), "assume")

    def check_affine(self, e: AffineExpr, scope: set[str], where: str) -> None:
        for name in e.free_names():
            if name not in self.params and name not in scope:
                self.report(f"undeclared identifier '{name}' in {where}")
        for term in e.opaque_terms():
            decl = self.arrays.get(term.fn)
            if decl is not None:
                if decl.kind != "int":
                    self.report(f"array '{term.fn}' used as an index must be declared int")
                if decl.rank != len(term.args):
                    self.report(f"arity mismatch: '{term.fn}' has rank {decl.rank}")
            elif term.fn not in self.functions:
                self.report(f"undeclared function '{term.fn}' in {where}")

    def check_formula(self, f: Formula, scope: set[str], where: str) -> None:
        for name in free_names(f):
            if name not in self.params and name not in scope:
                self.report(f"undeclared identifier '{name}' in {where}")
        for term in opaque_terms(f):
            if term.fn not in self.arrays and term.fn not in self.functions:
                self.report(f"undeclared function '{term.fn}' in {where}")

    def check_ref(self, ref: Ref, scope: set[str], loops: set[str], write: bool) -> None:
        if ref.name in loops and write:
            self.report(f"loop variable assigned: '{ref.name}'")
            return
        decl = self.arrays.get(ref.name)
        if decl is None:
            self.report(f"undeclared variable '{ref.name}'")
            return
        if decl.rank != len(ref.indices):
            self.report(f"arity mismatch: '{ref.name}' has rank {decl.rank}, used with {len(ref.indices)}")
        for ix in ref.indices:
            if isinstance(ix, NonAffineIndex):
                self.report(f"non-affine index '{ix}' in {ref}")
                self.check_value(ix.expr, scope, loops)
            else:
                self.check_affine(ix, scope, str(ref))

    def check_value(self, e: ValExpr, scope: set[str], loops: set[str]) -> None:
        for node in _value_nodes(e):
            if isinstance(node, Read):
                self.check_ref(node.ref, scope, loops, write=False)
            elif isinstance(node, IndexValue):
                self.check_affine(node.expr, scope, "value expression")
            elif isinstance(node, Apply) and node.fn not in self.functions:
                self.report(f"undeclared function '{node.fn}'")
            elif isinstance(node, Op) and node.op == "/" and len(node.args) != 2:
                self.report("division must be binary")

    def check_stmt(self, s: Stmt, scope: set[str]) -> None:
        if s.label is not None:
            if s.label in self.labels:
                self.report(f"duplicate label '{s.label}'")
            self.labels.add(s.label)
        if isinstance(s, Assign):
            self.check_ref(s.lhs, scope, scope, write=True)
            self.check_value(s.rhs, scope, scope)
        elif isinstance(s, Seq):
            for c in s.stmts:
                self.check_stmt(c, scope)
        elif isinstance(s, If):
            if isinstance(s.cond, ValueCond):
                self.check_value(s.cond.lhs, scope, scope)
                self.check_value(s.cond.rhs, scope, scope)
            else:
                self.check_formula(s.cond, scope, "condition")
            self.check_stmt(s.then, scope)
            if s.orelse is not None:
                self.check_stmt(s.orelse, scope)
        elif isinstance(s, For):
            if s.var in self.params or s.var in self.arrays:
                self.report(f"loop variable '{s.var}' shadows a declaration")
            if s.step == 0:
                self.report(f"zero step in loop '{s.var}'")
            if isinstance(s.step, str) and s.step not in self.params:
                self.report(f"symbolic step '{s.step}' is not a parameter")
            if s.step != 1 and s.step != -1 and len(s.lower) > 1:
                self.report(f"loop '{s.var}' with non-unit step needs a single start")
            for e in (*s.lower, *s.upper):
                self.check_affine(e, scope, f"bounds of loop '{s.var}'")
            self.check_stmt(s.body, scope | {s.var})
        else:
            self.report(f"unstructured statement {type(s).__name__}")


def check_well_formed(p: Program) -> list[str]:
    """Diagnostics for every violated declaration or structural invariant"""
    checker = _Checker(p)
    checker.check_decls()
    checker.check_stmt(p.body, set())
    return checker.diagnostics


def program_names(p: Program) -> set[str]:
    """Every identifier used anywhere in p (declarations and loop variables)"""
    names = set(p.params) | {a.name for a in p.arrays} | set(p.functions)
    for node in iter_stmts(p.body):
        if isinstance(node, For):
            names.add(node.var)
    return names


def fresh_name(base: str, taken: set[str]) -> str:
    """base, or base with primes appended until unused"""
    name = base
    while name in taken:
        name += "'"
    return name


def opaque_in_stmt(s: Stmt) -> set[Opaque]:
    found: set[Opaque] = set()

    def visit_ix(ix: Index) -> None:
        if isinstance(ix, AffineExpr):
            found.update(ix.opaque_terms())

    for node in iter_stmts(s):
        if isinstance(node, Assign):
            for ix in node.lhs.indices:
                visit_ix(ix)
            for ref in value_reads(node.rhs):
                for ix in ref.indices:
                    visit_ix(ix)
            for v in _value_nodes(node.rhs):
                if isinstance(v, IndexValue):
                    visit_ix(v.expr)
        elif isinstance(node, For):
            for e in (*node.lower, *node.upper):
                visit_ix(e)
        elif isinstance(node, If):
            if isinstance(node.cond, ValueCond):
                for side in (node.cond.lhs, node.cond.rhs):
                    for ref in value_reads(side):
                        for ix in ref.indices:
                            visit_ix(ix)
            else:
                found.update(opaque_terms(node.cond))
    return found


def stmt_names(s: Stmt) -> set[str]:
    """Loop variables and every name free in an index, bound or condition of s"""
    names: set[str] = set()

    def visit_ix(ix: Index) -> None:
        if isinstance(ix, AffineExpr):
            names.update(ix.free_names())

    for acc in accesses(s):
        for ix in acc.ref.indices:
            visit_ix(ix)
    for node in iter_stmts(s):
        if isinstance(node, For):
            names.add(node.var)
            for e in (*node.lower, *node.upper):
                visit_ix(e)
        elif isinstance(node, If) and not isinstance(node.cond, ValueCond):
            names.update(free_names(node.cond))
        elif isinstance(node, Assign):
            for v in _value_nodes(node.rhs):
                if isinstance(v, IndexValue):
                    visit_ix(v.expr)
    return names


__all__ = [
    "Access",
    "Apply",
    "ArrayDecl",
    "Assign",
    "Condition",
    "Const",
    "For",
    "If",
    "Index",
    "IndexValue",
    "NonAffineIndex",
    "Op",
    "Program",
    "Read",
    "Ref",
    "Seq",
    "Stmt",
    "ValExpr",
    "ValueCond",
    "accesses",
    "altered_vars",
    "check_well_formed",
    "expand_private",
    "find_label",
    "iter_stmts",
    "loop_range",
    "mark_private",
    "substitute_stmt",
]
