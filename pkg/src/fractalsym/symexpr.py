"""
Symbolic values over program inputs and their ring normal form.

canon() maps a SymExpr to a polynomial over atoms with rational
coefficients. Atoms are input reads, function applications and whole
division subtrees (children canonicalized first); expansion and collection
is done by sympy. Division and function laws are not applied, so
(a/b)/c and a/(b*c) stay distinct.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import sympy

from .affine import AffineExpr, Opaque, Symbol

logger = logging.getLogger("fractalsym.symexpr")


class SymExpr:
    """Base class of symbolic value expressions"""

    precedence = 4


@dataclass(frozen=True)
class InputRead(SymExpr):
    """Pre-execution value of an array cell, A_in(k)"""

    array: str
    indices: tuple[AffineExpr, ...] = ()

    def __str__(self) -> str:
        if not self.indices:
            return f"{self.array}_in"
        return f"{self.array}_in({','.join(str(i) for i in self.indices)})"

    def substitute(self, mapping: Mapping[Symbol, AffineExpr]) -> InputRead:
        return InputRead(self.array, tuple(i.substitute(mapping) for i in self.indices))


@dataclass(frozen=True)
class Num(SymExpr):
    value: Fraction

    @property
    def precedence(self) -> int:  # type: ignore[override]
        return 4 if self.value.denominator == 1 and self.value >= 0 else 3

    def __str__(self) -> str:
        if self.value.denominator == 1:
            return str(self.value.numerator)
        return f"({self.value.numerator}/{self.value.denominator})"


@dataclass(frozen=True)
class IndexTerm(SymExpr):
    """Integer affine quantity used as a value"""

    expr: AffineExpr

    @property
    def precedence(self) -> int:  # type: ignore[override]
        return 4 if len(self.expr.terms) + (self.expr.const != 0) <= 1 else 1

    def __str__(self) -> str:
        return str(self.expr)


@dataclass(frozen=True)
class SOp(SymExpr):
    op: str
    args: tuple[SymExpr, ...]

    @property
    def precedence(self) -> int:  # type: ignore[override]
        return {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3}[self.op]

    def __str__(self) -> str:
        if self.op == "neg":
            return f"-{_paren(self.args[0], 3)}"
        left, right = self.args
        return f"{_paren(left, self.precedence)} {self.op} {_paren(right, self.precedence + 1)}"


@dataclass(frozen=True)
class SApply(SymExpr):
    fn: str
    args: tuple[SymExpr, ...]

    def __str__(self) -> str:
        return f"{self.fn}({', '.join(str(a) for a in self.args)})"


def _paren(e: SymExpr, min_prec: int) -> str:
    return f"({e})" if e.precedence < min_prec else str(e)


def substitute_sym(e: SymExpr, mapping: Mapping[Symbol, AffineExpr]) -> SymExpr:
    """Substitute index symbols everywhere in e"""
    if isinstance(e, InputRead):
        return e.substitute(mapping)
    if isinstance(e, IndexTerm):
        return IndexTerm(e.expr.substitute(mapping))
    if isinstance(e, SOp):
        return SOp(e.op, tuple(substitute_sym(a, mapping) for a in e.args))
    if isinstance(e, SApply):
        return SApply(e.fn, tuple(substitute_sym(a, mapping) for a in e.args))
    return e


def map_reads(e: SymExpr, fn: Callable[[InputRead], SymExpr]) -> SymExpr:
    if isinstance(e, InputRead):
        return fn(e)
    if isinstance(e, SOp):
        return SOp(e.op, tuple(map_reads(a, fn) for a in e.args))
    if isinstance(e, SApply):
        return SApply(e.fn, tuple(map_reads(a, fn) for a in e.args))
    return e


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------

Monomial = tuple[tuple[SymExpr, int], ...]


@dataclass(frozen=True)
class CanonExpr:
    """Polynomial over canonical atoms; monomials sorted by their text"""

    terms: tuple[tuple[Monomial, Fraction], ...]

    def __str__(self) -> str:
        return str(to_symexpr(self))


def _atom_key(atom: SymExpr) -> str:
    return str(atom)


def _index_atoms(expr: AffineExpr) -> list[tuple[SymExpr, int]]:
    return [(IndexTerm(AffineExpr.var(s)), c) for s, c in expr.terms]


class _Builder:
    """Translate a SymExpr to sympy with canonical atoms as symbols"""

    def __init__(self):
        self.atoms: dict[SymExpr, sympy.Symbol] = {}

    def symbol(self, atom: SymExpr) -> sympy.Symbol:
        sym = self.atoms.get(atom)
        if sym is None:
            sym = sympy.Symbol(f"x{len(self.atoms)}")
            self.atoms[atom] = sym
        return sym

    def build(self, e: SymExpr) -> sympy.Expr:
        if isinstance(e, Num):
            return sympy.Rational(e.value.numerator, e.value.denominator)
        if isinstance(e, InputRead):
            return self.symbol(e)
        if isinstance(e, IndexTerm):
            total = sympy.Integer(e.expr.const)
            for atom, c in _index_atoms(e.expr):
                total += c * self.symbol(atom)
            return total
        if isinstance(e, SApply):
            atom = SApply(e.fn, tuple(to_symexpr(canon(a)) for a in e.args))
            return self.symbol(atom)
        if isinstance(e, SOp):
            if e.op == "/":
                num, den = (to_symexpr(canon(a)) for a in e.args)
                return self.symbol(SOp("/", (num, den)))
            args = [self.build(a) for a in e.args]
            if e.op == "+":
                return args[0] + args[1]
            if e.op == "-":
                return args[0] - args[1]
            if e.op == "*":
                return args[0] * args[1]
            if e.op == "neg":
                return -args[0]
        raise TypeError(f"Unknown symbolic node {e!r}")


@lru_cache(maxsize=8192)
def canon(e: SymExpr) -> CanonExpr:
    """Ring normal form of e"""
    builder = _Builder()
    expr = sympy.expand(builder.build(e))
    by_symbol = {sym: atom for atom, sym in builder.atoms.items()}
    gens = list(builder.atoms.values())
    terms: list[tuple[Monomial, Fraction]] = []
    if gens:
        poly = sympy.Poly(expr, *gens, domain=sympy.QQ)
        raw = poly.terms()
    else:
        raw = [((), sympy.Rational(expr))]
    for exps, coeff in raw:
        if coeff == 0:
            continue
        rational = sympy.Rational(coeff)
        monomial = tuple(
            sorted(
                ((by_symbol[g], int(k)) for g, k in zip(gens, exps) if k),
                key=lambda t: _atom_key(t[0]),
            )
        )
        terms.append((monomial, Fraction(int(rational.p), int(rational.q))))
    terms.sort(key=lambda t: (-sum(k for _, k in t[0]), [(_atom_key(a), k) for a, k in t[0]]))
    return CanonExpr(tuple(terms))


def _monomial_expr(monomial: Monomial) -> SymExpr | None:
    out: SymExpr | None = None
    for atom, k in monomial:
        for _ in range(k):
            out = atom if out is None else SOp("*", (out, atom))
    return out


@lru_cache(maxsize=8192)
def to_symexpr(c: CanonExpr) -> SymExpr:
    """SymExpr whose canonical form is c"""
    out: SymExpr | None = None
    for monomial, coeff in c.terms:
        body = _monomial_expr(monomial)
        magnitude = abs(coeff)
        if body is None:
            term: SymExpr = Num(magnitude)
        elif magnitude == 1:
            term = body
        else:
            term = SOp("*", (Num(magnitude), body))
        if out is None:
            out = term if coeff > 0 else SOp("neg", (term,))
        else:
            out = SOp("+" if coeff > 0 else "-", (out, term))
    return Num(Fraction(0)) if out is None else out


def equal(e1: SymExpr, e2: SymExpr) -> bool:
    """Equality modulo commutative ring laws"""
    return canon(e1) == canon(e2)


# ---------------------------------------------------------------------------
# Concrete evaluation
# ---------------------------------------------------------------------------

BUILTIN_FUNCTIONS: dict[str, Callable[..., Fraction]] = {"abs": lambda x: abs(x)}


def evaluate(
    e: SymExpr,
    read: Callable[[str, tuple[int, ...]], Fraction],
    env: Mapping[str, int],
    opaque: Callable[[Opaque, Mapping[str, int]], int] | None = None,
    functions: Mapping[str, Callable[..., Fraction]] = BUILTIN_FUNCTIONS,
) -> Fraction:
    """Numeric value of e given input cells, index symbols and opaque terms"""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, InputRead):
        return read(e.array, tuple(i.evaluate(env, opaque) for i in e.indices))
    if isinstance(e, IndexTerm):
        return Fraction(e.expr.evaluate(env, opaque))
    if isinstance(e, SApply):
        return functions[e.fn](*(evaluate(a, read, env, opaque, functions) for a in e.args))
    if isinstance(e, SOp):
        args = [evaluate(a, read, env, opaque, functions) for a in e.args]
        if e.op == "+":
            return args[0] + args[1]
        if e.op == "-":
            return args[0] - args[1]
        if e.op == "*":
            return args[0] * args[1]
        if e.op == "/":
            return args[0] / args[1]
        if e.op == "neg":
            return -args[0]
    raise TypeError(f"Unknown symbolic node {e!r}")
