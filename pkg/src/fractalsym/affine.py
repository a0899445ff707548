"""
Integer affine expressions and the formula language of guards and bindings.

An AffineExpr is an integer coefficient map over symbols plus a constant. A
symbol is either a plain name (loop variable, parameter, skolem) or an Opaque
term such as p(l): an uninterpreted integer application whose arguments are
themselves affine. Opaque terms are replaced by skolem names before a formula
reaches the solver (see SkolemTable).

Decision procedures live in fractalsym.omega.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from typing import Union

logger = logging.getLogger("fractalsym.affine")

Symbol = Union[str, "Opaque"]


def _sym_key(sym: Symbol) -> str:
    return str(sym)


@dataclass(frozen=True)
class Opaque:
    """Uninterpreted integer term, e.g. p(j)"""

    fn: str
    args: tuple[AffineExpr, ...]

    def __str__(self) -> str:
        return f"{self.fn}({','.join(str(a) for a in self.args)})"

    def substitute(self, mapping: Mapping[Symbol, AffineExpr]) -> Opaque:
        return Opaque(self.fn, tuple(a.substitute(mapping) for a in self.args))

    def free_names(self) -> set[str]:
        names: set[str] = set()
        for a in self.args:
            names |= a.free_names()
        return names


# Opaque function standing for exact integer division, div(n, d) = n / d
QUOTIENT = "div"


def quotient(numerator: AffineExpr, divisor: int) -> AffineExpr:
    return AffineExpr.var(Opaque(QUOTIENT, (numerator, AffineExpr.constant(divisor))))


@dataclass(frozen=True)
class AffineExpr:
    """Sum of integer-weighted symbols plus an integer constant"""

    terms: tuple[tuple[Symbol, int], ...] = ()
    const: int = 0

    @staticmethod
    def build(coeffs: Mapping[Symbol, int], const: int = 0) -> AffineExpr:
        items = sorted(((s, c) for s, c in coeffs.items() if c != 0), key=lambda t: _sym_key(t[0]))
        return AffineExpr(tuple(items), const)

    @staticmethod
    def var(sym: Symbol) -> AffineExpr:
        return AffineExpr(((sym, 1),), 0)

    @staticmethod
    def constant(value: int) -> AffineExpr:
        return AffineExpr((), value)

    def as_dict(self) -> dict[Symbol, int]:
        return dict(self.terms)

    def coeff(self, sym: Symbol) -> int:
        for s, c in self.terms:
            if s == sym:
                return c
        return 0

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def symbols(self) -> set[Symbol]:
        return {s for s, _ in self.terms}

    def free_names(self) -> set[str]:
        """Plain names, including those inside opaque arguments"""
        names: set[str] = set()
        for s, _ in self.terms:
            if isinstance(s, Opaque):
                names |= s.free_names()
            else:
                names.add(s)
        return names

    def opaque_terms(self) -> set[Opaque]:
        found: set[Opaque] = set()
        for s, _ in self.terms:
            if isinstance(s, Opaque):
                found.add(s)
                for a in s.args:
                    found |= a.opaque_terms()
        return found

    def __add__(self, other: AffineExpr | int) -> AffineExpr:
        if isinstance(other, int):
            return AffineExpr(self.terms, self.const + other)
        coeffs = self.as_dict()
        for s, c in other.terms:
            coeffs[s] = coeffs.get(s, 0) + c
        return AffineExpr.build(coeffs, self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> AffineExpr:
        return AffineExpr(tuple((s, -c) for s, c in self.terms), -self.const)

    def __sub__(self, other: AffineExpr | int) -> AffineExpr:
        return self + (-other)

    def __rsub__(self, other: int) -> AffineExpr:
        return (-self) + other

    def __mul__(self, factor: int) -> AffineExpr:
        if factor == 0:
            return AffineExpr()
        return AffineExpr(tuple((s, c * factor) for s, c in self.terms), self.const * factor)

    __rmul__ = __mul__

    def substitute(self, mapping: Mapping[Symbol, AffineExpr]) -> AffineExpr:
        if not mapping:
            return self
        result = AffineExpr.constant(self.const)
        changed = False
        for s, c in self.terms:
            if s in mapping:
                result = result + mapping[s] * c
                changed = True
            elif isinstance(s, Opaque):
                new = s.substitute(mapping)
                changed = changed or new != s
                result = result + AffineExpr.var(new) * c
            else:
                result = result + AffineExpr.var(s) * c
        return result if changed else self

    def map_opaque(self, fn: Callable[[Opaque], Symbol]) -> AffineExpr:
        coeffs: dict[Symbol, int] = {}
        for s, c in self.terms:
            key = fn(s) if isinstance(s, Opaque) else s
            coeffs[key] = coeffs.get(key, 0) + c
        return AffineExpr.build(coeffs, self.const)

    def evaluate(
        self,
        env: Mapping[str, int],
        opaque: Callable[[Opaque, Mapping[str, int]], int] | None = None,
    ) -> int:
        total = self.const
        for s, c in self.terms:
            if isinstance(s, Opaque):
                if opaque is None:
                    raise KeyError(str(s))
                total += c * opaque(s, env)
            else:
                total += c * env[s]
        return total

    def __str__(self) -> str:
        parts: list[str] = []
        for s, c in self.terms:
            name = str(s)
            mag = abs(c)
            body = name if mag == 1 else f"{mag}*{name}"
            if not parts:
                parts.append(body if c > 0 else f"-{body}")
            else:
                parts.append(f"+ {body}" if c > 0 else f"- {body}")
        if not parts:
            return str(self.const)
        if self.const > 0:
            parts.append(f"+ {self.const}")
        elif self.const < 0:
            parts.append(f"- {-self.const}")
        return " ".join(parts)


ZERO = AffineExpr()
ONE = AffineExpr.constant(1)


def aff(value: AffineExpr | int | str) -> AffineExpr:
    """Coerce an int or a name to an AffineExpr"""
    if isinstance(value, AffineExpr):
        return value
    if isinstance(value, int):
        return AffineExpr.constant(value)
    return AffineExpr.var(value)


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


class Formula:
    """Base class of the quantifier-bearing affine formula tree"""

    def __str__(self) -> str:
        return format_formula(self)


@dataclass(frozen=True, eq=True)
class Truth(Formula):
    value: bool


TRUE = Truth(True)
FALSE = Truth(False)

COMPARISONS = ("<", "<=", "=", "!=", ">=", ">")


@dataclass(frozen=True)
class Cmp(Formula):
    """lhs op rhs with op one of <, <=, =, !=, >=, >"""

    op: str
    lhs: AffineExpr
    rhs: AffineExpr


@dataclass(frozen=True)
class Mod(Formula):
    """expr mod modulus = residue"""

    expr: AffineExpr
    modulus: int
    residue: int = 0


@dataclass(frozen=True)
class And(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class Exists(Formula):
    vars: tuple[str, ...]
    body: Formula


@dataclass(frozen=True)
class Forall(Formula):
    """forall var in [lower, upper]: body"""

    var: str
    lower: AffineExpr
    upper: AffineExpr
    body: Formula


def cmp(op: str, lhs, rhs) -> Cmp:
    return Cmp(op, aff(lhs), aff(rhs))


def conj(*formulas: Formula) -> Formula:
    """Flattening conjunction with constant folding"""
    out: list[Formula] = []
    for f in formulas:
        if f == TRUE:
            continue
        if f == FALSE:
            return FALSE
        if isinstance(f, And):
            out.extend(f.args)
        else:
            out.append(f)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*formulas: Formula) -> Formula:
    """Flattening disjunction with constant folding"""
    out: list[Formula] = []
    for f in formulas:
        if f == FALSE:
            continue
        if f == TRUE:
            return TRUE
        if isinstance(f, Or):
            out.extend(f.args)
        else:
            out.append(f)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


NEGATED = {"<": ">=", "<=": ">", "=": "!=", "!=": "=", ">=": "<", ">": "<="}


def neg(f: Formula) -> Formula:
    if f == TRUE:
        return FALSE
    if f == FALSE:
        return TRUE
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, Cmp):
        return Cmp(NEGATED[f.op], f.lhs, f.rhs)
    return Not(f)


def implies_formula(f: Formula, g: Formula) -> Formula:
    return disj(neg(f), g)


def between(lower, var, upper) -> Formula:
    """lower <= var <= upper"""
    v = aff(var)
    return conj(Cmp("<=", aff(lower), v), Cmp("<=", v, aff(upper)))


def lex_less(xs: Iterable[AffineExpr], ys: Iterable[AffineExpr]) -> Formula:
    """Lexicographic xs < ys as a disjunction of prefix-equal cases"""
    xs, ys = list(xs), list(ys)
    cases: list[Formula] = []
    for i in range(len(xs)):
        prefix = [Cmp("=", xs[j], ys[j]) for j in range(i)]
        cases.append(conj(*prefix, Cmp("<", xs[i], ys[i])))
    return disj(*cases)


def map_atoms(f: Formula, fn: Callable[[AffineExpr], AffineExpr]) -> Formula:
    """Apply fn to every affine expression in f, quantifiers included"""
    if isinstance(f, Truth):
        return f
    if isinstance(f, Cmp):
        return Cmp(f.op, fn(f.lhs), fn(f.rhs))
    if isinstance(f, Mod):
        return Mod(fn(f.expr), f.modulus, f.residue)
    if isinstance(f, And):
        return conj(*(map_atoms(a, fn) for a in f.args))
    if isinstance(f, Or):
        return disj(*(map_atoms(a, fn) for a in f.args))
    if isinstance(f, Not):
        return neg(map_atoms(f.arg, fn))
    if isinstance(f, Exists):
        return Exists(f.vars, map_atoms(f.body, fn))
    if isinstance(f, Forall):
        return Forall(f.var, fn(f.lower), fn(f.upper), map_atoms(f.body, fn))
    raise TypeError(f"Unknown formula node {type(f).__name__}")


def substitute(f: Formula, mapping: Mapping[Symbol, AffineExpr]) -> Formula:
    """Capture-avoiding substitution of free symbols"""
    if not mapping:
        return f
    if isinstance(f, Exists):
        inner = {k: v for k, v in mapping.items() if k not in f.vars}
        return Exists(f.vars, substitute(f.body, inner))
    if isinstance(f, Forall):
        inner = {k: v for k, v in mapping.items() if k != f.var}
        return Forall(
            f.var,
            f.lower.substitute(mapping),
            f.upper.substitute(mapping),
            substitute(f.body, inner),
        )
    if isinstance(f, And):
        return conj(*(substitute(a, mapping) for a in f.args))
    if isinstance(f, Or):
        return disj(*(substitute(a, mapping) for a in f.args))
    if isinstance(f, Not):
        return neg(substitute(f.arg, mapping))
    return map_atoms(f, lambda e: e.substitute(mapping))


def free_names(f: Formula) -> set[str]:
    """Plain names occurring free in f, including inside opaque arguments"""
    if isinstance(f, Truth):
        return set()
    if isinstance(f, Cmp):
        return f.lhs.free_names() | f.rhs.free_names()
    if isinstance(f, Mod):
        return f.expr.free_names()
    if isinstance(f, (And, Or)):
        out: set[str] = set()
        for a in f.args:
            out |= free_names(a)
        return out
    if isinstance(f, Not):
        return free_names(f.arg)
    if isinstance(f, Exists):
        return free_names(f.body) - set(f.vars)
    if isinstance(f, Forall):
        return (f.lower.free_names() | f.upper.free_names() | free_names(f.body)) - {f.var}
    raise TypeError(f"Unknown formula node {type(f).__name__}")


def opaque_terms(f: Formula) -> set[Opaque]:
    found: set[Opaque] = set()

    def visit(e: AffineExpr) -> AffineExpr:
        found.update(e.opaque_terms())
        return e

    map_atoms(f, visit)
    return found


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _prec(f: Formula) -> int:
    if isinstance(f, Or):
        return 1
    if isinstance(f, And):
        return 2
    if isinstance(f, (Exists, Forall)):
        return 0
    return 3


def _wrap(f: Formula, parent: int) -> str:
    text = format_formula(f)
    return f"({text})" if _prec(f) < parent else text


def format_formula(f: Formula) -> str:
    """Render f in the surface syntax accepted by the parser"""
    if isinstance(f, Truth):
        return "true" if f.value else "false"
    if isinstance(f, Cmp):
        return f"{f.lhs} {f.op} {f.rhs}"
    if isinstance(f, Mod):
        return f"{f.expr} mod {f.modulus} = {f.residue}"
    if isinstance(f, And):
        return " and ".join(_wrap(a, 3) for a in f.args)
    if isinstance(f, Or):
        return " or ".join(_wrap(a, 2) for a in f.args)
    if isinstance(f, Not):
        return f"not {_wrap(f.arg, 3)}"
    if isinstance(f, Exists):
        return f"exists {', '.join(f.vars)}: {format_formula(f.body)}"
    if isinstance(f, Forall):
        return f"forall {f.var} in [{f.lower}, {f.upper}]: {format_formula(f.body)}"
    raise TypeError(f"Unknown formula node {type(f).__name__}")


def pretty_ge(expr: AffineExpr) -> Formula:
    """expr >= 0 rendered with positive terms on both sides"""
    pos = AffineExpr.build({s: c for s, c in expr.terms if c > 0}, max(expr.const, 0))
    negs = AffineExpr.build({s: -c for s, c in expr.terms if c < 0}, max(-expr.const, 0))
    return Cmp("<=", negs, pos)


def pretty_eq(expr: AffineExpr) -> Formula:
    """expr = 0 rendered with positive terms on both sides"""
    pos = AffineExpr.build({s: c for s, c in expr.terms if c > 0}, max(expr.const, 0))
    negs = AffineExpr.build({s: -c for s, c in expr.terms if c < 0}, max(-expr.const, 0))
    if pos.is_constant and not negs.is_constant:
        return Cmp("=", negs, pos)
    return Cmp("=", pos, negs)


# ---------------------------------------------------------------------------
# Bindings and skolemization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniversalFact:
    """forall vars: range => conclusion"""

    vars: tuple[str, ...]
    range: Formula
    conclusion: Formula

    def __str__(self) -> str:
        return f"forall {', '.join(self.vars)}: ({self.range}) => ({self.conclusion})"


@dataclass(frozen=True)
class Bindings:
    """Ground constraints on free symbols plus universally quantified facts"""

    ground: Formula = TRUE
    facts: tuple[UniversalFact, ...] = ()

    @staticmethod
    def from_formulas(formulas: Iterable[Formula]) -> Bindings:
        """Split assume clauses into ground constraints and universal facts"""
        ground: list[Formula] = []
        facts: list[UniversalFact] = []
        for f in formulas:
            parts = f.args if isinstance(f, And) else (f,)
            for part in parts:
                if isinstance(part, Forall):
                    facts.append(_fact_from_forall(part))
                else:
                    ground.append(part)
        return Bindings(conj(*ground), tuple(facts))

    def with_ground(self, *formulas: Formula) -> Bindings:
        return Bindings(conj(self.ground, *formulas), self.facts)

    def merge(self, other: Bindings) -> Bindings:
        return Bindings(conj(self.ground, other.ground), self.facts + other.facts)

    def __str__(self) -> str:
        lines = [str(self.ground)] + [str(fact) for fact in self.facts]
        return " ; ".join(lines)


def _fact_from_forall(f: Forall) -> UniversalFact:
    vars_: list[str] = []
    ranges: list[Formula] = []
    body: Formula = f
    while isinstance(body, Forall):
        vars_.append(body.var)
        ranges.append(between(body.lower, body.var, body.upper))
        body = body.body
    return UniversalFact(tuple(vars_), conj(*ranges), body)


@dataclass
class SkolemTable:
    """Hash-consed map from opaque terms to skolem names, append-only"""

    entries: dict[Opaque, str] = field(default_factory=dict)

    def symbol_for(self, term: Opaque) -> str:
        term = Opaque(term.fn, tuple(skolemize(a, self) for a in term.args))
        name = self.entries.get(term)
        if name is None:
            name = str(term)
            self.entries[term] = name
            logger.debug(f"Skolem {name} introduced")
        return name

    def items(self) -> list[tuple[Opaque, str]]:
        return list(self.entries.items())

    def functions(self) -> set[str]:
        return {t.fn for t in self.entries}


def skolemize(ix: AffineExpr, table: SkolemTable) -> AffineExpr:
    """Replace opaque subterms by their skolem names"""
    if not any(isinstance(s, Opaque) for s, _ in ix.terms):
        return ix
    return ix.map_opaque(table.symbol_for)


def skolemize_formula(f: Formula, table: SkolemTable) -> Formula:
    """Skolemize every opaque term in f; terms over quantified variables are rejected"""
    bound = _bound_names(f)
    for term in opaque_terms(f):
        if term.free_names() & bound:
            raise ValueError(f"opaque term {term} depends on a quantified variable")
    return map_atoms(f, lambda e: skolemize(e, table))


def _bound_names(f: Formula) -> set[str]:
    if isinstance(f, Exists):
        return set(f.vars) | _bound_names(f.body)
    if isinstance(f, Forall):
        return {f.var} | _bound_names(f.body)
    if isinstance(f, (And, Or)):
        out: set[str] = set()
        for a in f.args:
            out |= _bound_names(a)
        return out
    if isinstance(f, Not):
        return _bound_names(f.arg)
    return set()


def _fact_patterns(fact: UniversalFact) -> list[Opaque]:
    """Opaque terms of the conclusion whose arguments are exactly bound variables"""
    patterns = []
    for term in opaque_terms(fact.conclusion):
        if all(
            len(a.terms) == 1 and a.const == 0 and a.terms[0][1] == 1 and a.terms[0][0] in fact.vars
            for a in term.args
        ):
            patterns.append(term)
    return sorted(patterns, key=str)


def instantiate_bindings(b: Bindings, table: SkolemTable) -> Formula:
    """Ground formula: b.ground plus every universal fact instantiated at each table entry"""
    parts: list[Formula] = [skolemize_formula(b.ground, table)]
    for fact in b.facts:
        for pattern in _fact_patterns(fact):
            for term, _name in table.items():
                if term.fn != pattern.fn or len(term.args) != len(pattern.args):
                    continue
                mapping: dict[Symbol, AffineExpr] = {}
                consistent = True
                for parg, targ in zip(pattern.args, term.args):
                    var = parg.terms[0][0]
                    if var in mapping and mapping[var] != targ:
                        consistent = False
                        break
                    mapping[var] = targ
                if not consistent or len(mapping) != len(fact.vars):
                    continue
                rng = substitute(fact.range, mapping)
                concl = substitute(fact.conclusion, mapping)
                instance = implies_formula(rng, concl)
                parts.append(skolemize_formula(instance, table))
                logger.debug(f"Instantiated {fact} at {term}")
    return conj(*parts)


# ---------------------------------------------------------------------------
# Concrete evaluation
# ---------------------------------------------------------------------------

_CMP_OPS: dict[str, Callable[[int, int], bool]] = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def holds(
    f: Formula,
    env: Mapping[str, int],
    opaque: Callable[[Opaque, Mapping[str, int]], int] | None = None,
) -> bool:
    """Truth of f under a full assignment; forall ranges are enumerated"""
    if isinstance(f, Truth):
        return f.value
    if isinstance(f, Cmp):
        return _CMP_OPS[f.op](f.lhs.evaluate(env, opaque), f.rhs.evaluate(env, opaque))
    if isinstance(f, Mod):
        return (f.expr.evaluate(env, opaque) - f.residue) % f.modulus == 0
    if isinstance(f, And):
        return all(holds(a, env, opaque) for a in f.args)
    if isinstance(f, Or):
        return any(holds(a, env, opaque) for a in f.args)
    if isinstance(f, Not):
        return not holds(f.arg, env, opaque)
    if isinstance(f, Forall):
        lo = f.lower.evaluate(env, opaque)
        hi = f.upper.evaluate(env, opaque)
        inner = dict(env)
        for value in range(lo, hi + 1):
            inner[f.var] = value
            if not holds(f.body, inner, opaque):
                return False
        return True
    raise TypeError(f"Cannot evaluate {type(f).__name__} concretely")
