"""
Exact integer elimination over affine formulas.

Formulas are brought into disjunctive normal form over three constraint
kinds (e = 0, e >= 0, m | e). Existential variables are removed per
conjunct in the manner of the Omega test: equalities by substitution (with a
unimodular change of variables when no unit coefficient exists),
divisibility by an auxiliary equality, and inequalities by Fourier-Motzkin
with the real shadow when exact, otherwise the dark shadow plus splinters.

Satisfiability projects every symbol away; a conjunct that survives is
satisfiable. All arithmetic is on Python integers.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from math import gcd

from .affine import (
    TRUE,
    AffineExpr,
    And,
    Cmp,
    Exists,
    Forall,
    Formula,
    Mod,
    Not,
    Or,
    Symbol,
    Truth,
    conj,
    disj,
    pretty_eq,
    pretty_ge,
)
from .config import analysis_config
from .errors import EliminationTooLarge

logger = logging.getLogger("fractalsym.omega")

# DNF lists longer than this are filtered by satisfiability after each product
PRUNE_AT = 6


def _gcd_all(values: Iterable[int]) -> int:
    g = 0
    for v in values:
        g = gcd(g, v)
    return g


def _ext_gcd(a: int, b: int) -> tuple[int, int, int]:
    """(g, u, v) with a*u + b*v = g = gcd(a, b) >= 0"""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


class _System:
    """Conjunction of normalized equalities, inequalities and divisibility constraints"""

    __slots__ = ("eqs", "geqs", "dvds")

    def __init__(self):
        # terms -> const for e = 0 (first coefficient positive)
        self.eqs: dict[tuple, int] = {}
        # terms -> const for e >= 0 (tightest constant kept)
        self.geqs: dict[tuple, int] = {}
        # (modulus, terms) -> set of consts for m | e
        self.dvds: dict[tuple, set[int]] = {}

    def copy(self) -> _System:
        s = _System()
        s.eqs = dict(self.eqs)
        s.geqs = dict(self.geqs)
        s.dvds = {k: set(v) for k, v in self.dvds.items()}
        return s

    def size(self) -> int:
        return len(self.eqs) + len(self.geqs) + sum(len(v) for v in self.dvds.values())

    def symbols(self) -> set[Symbol]:
        syms: set[Symbol] = set()
        for terms in itertools.chain(self.eqs, self.geqs):
            syms.update(s for s, _ in terms)
        for _, terms in self.dvds:
            syms.update(s for s, _ in terms)
        return syms

    def constraints(self) -> Iterator[tuple[str, int, AffineExpr]]:
        for terms, c in self.eqs.items():
            yield "eq", 0, AffineExpr(terms, c)
        for terms, c in self.geqs.items():
            yield "geq", 0, AffineExpr(terms, c)
        for (m, terms), consts in self.dvds.items():
            for c in consts:
                yield "dvd", m, AffineExpr(terms, c)

    # -- adding constraints; each returns False on contradiction

    def add(self, kind: str, modulus: int, expr: AffineExpr) -> bool:
        if kind == "eq":
            return self.add_eq(expr)
        if kind == "geq":
            return self.add_geq(expr)
        return self.add_dvd(modulus, expr)

    def add_eq(self, e: AffineExpr) -> bool:
        if not e.terms:
            return e.const == 0
        g = _gcd_all(c for _, c in e.terms)
        if e.const % g != 0:
            return False
        sign = 1 if e.terms[0][1] > 0 else -1
        terms = tuple((s, sign * c // g) for s, c in e.terms)
        const = sign * e.const // g
        old = self.eqs.get(terms)
        if old is not None:
            return old == const
        self.eqs[terms] = const
        # opposing or identical inequalities are subsumed by the equality
        neg_terms = tuple((s, -c) for s, c in terms)
        if terms in self.geqs:
            if self.geqs[terms] < const:
                return False
            del self.geqs[terms]
        if neg_terms in self.geqs:
            if self.geqs[neg_terms] < -const:
                return False
            del self.geqs[neg_terms]
        return True

    def add_geq(self, e: AffineExpr) -> bool:
        if not e.terms:
            return e.const >= 0
        g = _gcd_all(abs(c) for _, c in e.terms)
        terms = tuple((s, c // g) for s, c in e.terms)
        const = e.const // g
        neg_terms = tuple((s, -c) for s, c in terms)
        # interaction with an equality on the same form
        for t, sign in ((terms, 1), (neg_terms, -1)):
            if t in self.eqs:
                # sign * (t-form) with eq t + c0 = 0  =>  form value fixed
                c0 = self.eqs[t]
                # constraint: sign * (T) + const >= 0 where T = -c0 (relative to t)
                value = sign * (-c0) + const
                return value >= 0
        old = self.geqs.get(terms)
        if old is not None and old <= const:
            return True
        self.geqs[terms] = const
        other = self.geqs.get(neg_terms)
        if other is not None:
            # T + const >= 0 and -T + other >= 0  =>  -const <= T <= other
            if -const > other:
                return False
            if -const == other:
                del self.geqs[terms]
                del self.geqs[neg_terms]
                return self.add_eq(AffineExpr(terms, const))
        return True

    def add_dvd(self, m: int, e: AffineExpr) -> bool:
        m = abs(m)
        if m == 1:
            return True
        terms = tuple((s, c % m) for s, c in e.terms if c % m != 0)
        const = e.const % m
        if not terms:
            return const == 0
        h = gcd(m, _gcd_all(c for _, c in terms))
        if const % h != 0:
            return False
        if h > 1:
            m //= h
            terms = tuple((s, c // h) for s, c in terms)
            const //= h
            if m == 1:
                return True
        self.dvds.setdefault((m, terms), set()).add(const)
        return True

    def to_formula(self) -> Formula:
        parts: list[Formula] = []
        for terms, c in sorted(self.eqs.items(), key=str):
            parts.append(pretty_eq(AffineExpr(terms, c)))
        for terms, c in sorted(self.geqs.items(), key=str):
            parts.append(pretty_ge(AffineExpr(terms, c)))
        for (m, terms), consts in sorted(self.dvds.items(), key=str):
            for c in sorted(consts):
                parts.append(Mod(AffineExpr(terms, 0), m, (-c) % m))
        return conj(*parts)


def _make(items: Iterable[tuple[str, int, AffineExpr]]) -> _System | None:
    s = _System()
    for kind, m, e in items:
        if not s.add(kind, m, e):
            return None
    return s


def _merge(a: _System, b: _System) -> _System | None:
    s = a.copy()
    for kind, m, e in b.constraints():
        if not s.add(kind, m, e):
            return None
    return s


@dataclass
class _Counter:
    budget: int
    used: int = 0
    fresh: int = 0

    def spend(self, n: int = 1) -> None:
        self.used += n
        if self.used > self.budget:
            raise EliminationTooLarge(
                f"elimination too large: more than {self.budget} constraints generated"
            )

    def fresh_name(self) -> str:
        self.fresh += 1
        return f"#t{self.fresh}"


class Solver:
    """Integer elimination engine with a per-query constraint budget"""

    def __init__(self, budget: int | None = None):
        self.budget = budget if budget is not None else analysis_config.atom_budget
        self._counter = _Counter(self.budget)

    def _reset(self) -> None:
        self._counter = _Counter(self.budget)

    # -- projection

    def _substitute(
        self, s: _System, var: Symbol, value: AffineExpr, scale: int = 1
    ) -> _System | None:
        """Replace scale*var by value in every constraint (scale > 0 multiplies the rest)"""
        out = _System()
        for kind, m, e in s.constraints():
            c = e.coeff(var)
            if c == 0:
                new = e
            else:
                rest = e - AffineExpr.var(var) * c
                new = rest * scale + value * c
                if kind == "dvd":
                    m = m * scale
            self._counter.spend()
            if not out.add(kind, m, new):
                return None
        return out

    def project(self, system: _System, variables: Iterable[Symbol]) -> Iterator[_System]:
        """Yield systems whose union is exactly the projection of system"""
        stack: list[tuple[_System, frozenset]] = [(system, frozenset(variables))]
        while stack:
            s, vs = stack.pop()
            vs = vs & frozenset(s.symbols())
            if not vs:
                yield s
                continue
            reduced = self._eliminate_step(s, vs)
            stack.extend(reduced)

    def _eliminate_step(self, s: _System, vs: frozenset) -> list[tuple[_System, frozenset]]:
        # divisibility constraints over eliminated variables become equalities
        for (m, terms), consts in s.dvds.items():
            if any(sym in vs for sym, _ in terms):
                t = self._counter.fresh_name()
                out = s.copy()
                const = next(iter(consts))
                consts_left = consts - {const}
                if consts_left:
                    out.dvds[(m, terms)] = set(consts_left)
                else:
                    del out.dvds[(m, terms)]
                expr = AffineExpr(terms, const) - AffineExpr.var(t) * m
                if not out.add_eq(expr):
                    return []
                return [(out, vs | {t})]

        # equalities over eliminated variables
        for terms, const in s.eqs.items():
            in_vs = [(sym, c) for sym, c in terms if sym in vs]
            if not in_vs:
                continue
            in_vs.sort(key=lambda t: (abs(t[1]), str(t[0])))
            x, a = in_vs[0]
            e = AffineExpr(terms, const)
            if abs(a) == 1:
                rest = e - AffineExpr.var(x) * a
                value = rest * (-a)
                reduced = s.copy()
                del reduced.eqs[terms]
                out = self._substitute(reduced, x, value)
                return [] if out is None else [(out, vs - {x})]
            if len(in_vs) > 1:
                y, b = in_vs[1]
                g, u, v = _ext_gcd(a, b)
                a1, b1 = a // g, b // g
                x2, y2 = self._counter.fresh_name(), self._counter.fresh_name()
                x_val = AffineExpr.var(x2) * u - AffineExpr.var(y2) * b1
                y_val = AffineExpr.var(x2) * v + AffineExpr.var(y2) * a1
                out = self._substitute(s, x, x_val)
                if out is not None:
                    out = self._substitute(out, y, y_val)
                return [] if out is None else [(out, (vs - {x, y}) | {x2, y2})]
            # single eliminated variable with |a| > 1: x = -rest / a
            rest = e - AffineExpr.var(x) * a
            reduced = s.copy()
            del reduced.eqs[terms]
            sign = 1 if a > 0 else -1
            out = self._substitute(reduced, x, rest * (-sign), scale=abs(a))
            if out is None or not out.add_dvd(abs(a), rest):
                return []
            return [(out, vs - {x})]

        return self._fourier_motzkin(s, vs)

    def _fourier_motzkin(self, s: _System, vs: frozenset) -> list[tuple[_System, frozenset]]:
        candidates = []
        for x in sorted(vs, key=str):
            lowers = [(c, terms) for terms, _ in s.geqs.items() for sym, c in terms if sym == x and c > 0]
            uppers = [(-c, terms) for terms, _ in s.geqs.items() for sym, c in terms if sym == x and c < 0]
            exact = all(c == 1 for c, _ in lowers) or all(c == 1 for c, _ in uppers)
            candidates.append((not exact, len(lowers) * len(uppers), str(x), x))
        candidates.sort()
        _, _, _, x = candidates[0]

        lowers: list[tuple[int, AffineExpr]] = []
        uppers: list[tuple[int, AffineExpr]] = []
        rest = _System()
        rest.eqs = dict(s.eqs)
        rest.dvds = {k: set(v) for k, v in s.dvds.items()}
        for terms, const in s.geqs.items():
            e = AffineExpr(terms, const)
            c = e.coeff(x)
            if c > 0:
                lowers.append((c, e - AffineExpr.var(x) * c))
            elif c < 0:
                uppers.append((-c, e - AffineExpr.var(x) * c))
            else:
                rest.geqs[terms] = const

        if not lowers or not uppers:
            return [(rest, vs - {x})]

        exact = all(a == 1 for a, _ in lowers) or all(b == 1 for b, _ in uppers)
        real = rest.copy()
        dark = rest.copy() if not exact else None
        real_ok = dark_ok = True
        for (a, e), (b, f) in itertools.product(lowers, uppers):
            # a*x + e >= 0 and -b*x + f >= 0
            shadow = e * b + f * a
            self._counter.spend()
            real_ok = real_ok and real.add_geq(shadow)
            if dark is not None and dark_ok:
                dark_ok = dark.add_geq(shadow - (a - 1) * (b - 1))
        if exact:
            return [(real, vs - {x})] if real_ok else []
        if not real_ok:
            return []

        results: list[tuple[_System, frozenset]] = []
        if dark_ok:
            results.append((dark, vs - {x}))
        m = max(b for b, _ in uppers)
        for a, e in lowers:
            imax = (m * a - a - m) // m
            for i in range(imax + 1):
                splinter = s.copy()
                self._counter.spend()
                if splinter.add_eq(AffineExpr.var(x) * a + e - i):
                    results.append((splinter, vs))
        logger.debug(f"Inexact elimination of {x}: dark shadow plus {len(results) - 1} splinters")
        return results

    def system_satisfiable(self, s: _System) -> bool:
        for _ in self.project(s, s.symbols()):
            return True
        return False

    # -- formula to DNF

    def _atom(self, kind: str, m: int, e: AffineExpr) -> list[_System]:
        s = _make([(kind, m, e)])
        return [] if s is None else [s]

    def _cmp_dnf(self, f: Cmp, negate: bool) -> list[_System]:
        d = f.lhs - f.rhs
        op = f.op
        if negate:
            op = {"<": ">=", "<=": ">", "=": "!=", "!=": "=", ">=": "<", ">": "<="}[op]
        if op == "<=":
            return self._atom("geq", 0, -d)
        if op == "<":
            return self._atom("geq", 0, -d - 1)
        if op == ">=":
            return self._atom("geq", 0, d)
        if op == ">":
            return self._atom("geq", 0, d - 1)
        if op == "=":
            return self._atom("eq", 0, d)
        return self._atom("geq", 0, d - 1) + self._atom("geq", 0, -d - 1)

    def _mod_dnf(self, f: Mod, negate: bool) -> list[_System]:
        m = abs(f.modulus)
        if m == 0:
            raise ValueError("modulus must be nonzero")
        if not negate:
            return self._atom("dvd", m, f.expr - f.residue)
        out: list[_System] = []
        for r in range(m):
            if (r - f.residue) % m != 0:
                out.extend(self._atom("dvd", m, f.expr - r))
        return out

    def _product(self, left: list[_System], right: list[_System]) -> list[_System]:
        out: list[_System] = []
        for a, b in itertools.product(left, right):
            merged = _merge(a, b)
            self._counter.spend()
            if merged is not None:
                out.append(merged)
        if len(out) > PRUNE_AT:
            out = [s for s in out if self.system_satisfiable(s)]
        return out

    def _negate_dnf(self, systems: list[_System]) -> list[_System]:
        result: list[_System] = [_System()]
        for s in systems:
            alternatives: list[_System] = []
            for kind, m, e in s.constraints():
                if kind == "eq":
                    alternatives += self._atom("geq", 0, e - 1) + self._atom("geq", 0, -e - 1)
                elif kind == "geq":
                    alternatives += self._atom("geq", 0, -e - 1)
                else:
                    for r in range(1, m):
                        alternatives += self._atom("dvd", m, e - r)
            result = self._product(result, alternatives)
            if not result:
                break
        return result

    def dnf(self, f: Formula, negate: bool = False) -> list[_System]:
        """Quantifier-free DNF of f (or of not f)"""
        if isinstance(f, Truth):
            return [_System()] if f.value != negate else []
        if isinstance(f, Cmp):
            return self._cmp_dnf(f, negate)
        if isinstance(f, Mod):
            return self._mod_dnf(f, negate)
        if isinstance(f, Not):
            return self.dnf(f.arg, not negate)
        if isinstance(f, (And, Or)):
            is_and = isinstance(f, And) != negate
            if is_and:
                result = [_System()]
                for arg in sorted(f.args, key=lambda a: not isinstance(a, (Cmp, Mod))):
                    result = self._product(result, self.dnf(arg, negate))
                    if not result:
                        break
                return result
            out: list[_System] = []
            for arg in f.args:
                out.extend(self.dnf(arg, negate))
            return out
        if isinstance(f, Exists):
            projected: list[_System] = []
            for s in self.dnf(f.body):
                projected.extend(self.project(s, f.vars))
            return self._negate_dnf(projected) if negate else projected
        if isinstance(f, Forall):
            v = AffineExpr.var(f.var)
            witness = Exists(
                (f.var,),
                conj(Cmp("<=", f.lower, v), Cmp("<=", v, f.upper), Not(f.body)),
            )
            return self.dnf(witness, not negate)
        raise TypeError(f"Unknown formula node {type(f).__name__}")

    # -- satisfiability

    def satisfiable_with(self, base: list[_System], f: Formula) -> bool:
        """Whether some base system is consistent with f"""
        items = list(f.args) if isinstance(f, And) else [f]
        branches = [self.dnf(item) for item in items]
        if any(not b for b in branches):
            return False
        branches.sort(key=len)
        for start in base:
            if self._search(start, branches, 0):
                return True
        return False

    def _search(self, current: _System, branches: list[list[_System]], index: int) -> bool:
        while index < len(branches) and len(branches[index]) == 1:
            merged = _merge(current, branches[index][0])
            if merged is None:
                return False
            current = merged
            index += 1
        if index == len(branches):
            return self.system_satisfiable(current)
        if not self.system_satisfiable(current):
            return False
        for alt in branches[index]:
            merged = _merge(current, alt)
            if merged is not None and self._search(merged, branches, index + 1):
                return True
        return False

    def base(self, f: Formula) -> list[_System]:
        """Pruned DNF of f, for reuse across many queries"""
        self._reset()
        return [s for s in self.dnf(f) if self.system_satisfiable(s)]


def eliminate_exists(f: Formula, budget: int | None = None) -> Formula:
    """Quantifier-free formula with the same integer solutions over the free symbols"""
    solver = Solver(budget)
    systems = [s for s in solver.dnf(f) if solver.system_satisfiable(s)]
    return disj(*(s.to_formula() for s in systems))


def is_satisfiable(f: Formula, under: Formula = TRUE, budget: int | None = None) -> bool:
    """Exact integer satisfiability of f and under; budget aborts answer True"""
    solver = Solver(budget)
    try:
        base = solver.base(under)
        return solver.satisfiable_with(base, f)
    except EliminationTooLarge as e:
        logger.warning(f"{e}; treating formula as satisfiable")
        return True


def implies(f: Formula, g: Formula, budget: int | None = None) -> bool:
    """True iff f and not g is unsatisfiable; budget aborts answer False"""
    solver = Solver(budget)
    try:
        base = solver.base(f)
        return not solver.satisfiable_with(base, Not(g))
    except EliminationTooLarge as e:
        logger.warning(f"{e}; implication not established")
        return False


class SatContext:
    """Satisfiability queries under a fixed background formula"""

    def __init__(self, background: Formula, budget: int | None = None):
        self.background = background
        self._solver = Solver(budget)
        try:
            self._base: list[_System] | None = self._solver.base(background)
        except EliminationTooLarge as e:
            logger.warning(f"{e}; background kept unexpanded")
            self._base = None

    @property
    def consistent(self) -> bool:
        return self._base is None or bool(self._base)

    def is_satisfiable(self, f: Formula) -> bool:
        """Whether f is consistent with the background; budget aborts answer True"""
        self._solver._reset()
        try:
            if self._base is None:
                return self._solver.satisfiable_with([_System()], conj(self.background, f))
            return self._solver.satisfiable_with(self._base, f)
        except EliminationTooLarge as e:
            logger.warning(f"{e}; treating formula as satisfiable")
            return True

    def implies(self, f: Formula, g: Formula) -> bool:
        """Whether background and f entail g; budget aborts answer False"""
        self._solver._reset()
        try:
            base = self._base if self._base is not None else self._solver.base(self.background)
            return not self._solver.satisfiable_with(base, conj(f, Not(g)))
        except EliminationTooLarge as e:
            logger.warning(f"{e}; implication not established")
            return False


WITNESS_VALUES = (1, 2, 3, 0, 4, 5, 6, -1, 7, 8, -2)


def find_witness(
    f: Formula, symbols: Iterable[str], values: Iterable[int] = WITNESS_VALUES
) -> dict[str, int] | None:
    """Small integer assignment to symbols under which f stays satisfiable, if one is found"""
    values = tuple(values)
    ctx = SatContext(f)
    if not ctx.consistent:
        return None
    chosen: dict[str, int] = {}
    current = TRUE
    for sym in sorted(symbols):
        for value in values:
            candidate = conj(current, Cmp("=", AffineExpr.var(sym), AffineExpr.constant(value)))
            if ctx.is_satisfiable(candidate):
                chosen[sym] = value
                current = candidate
                break
        else:
            return None
    return chosen
