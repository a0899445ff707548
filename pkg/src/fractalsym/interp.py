"""
Reference interpreter over exact rationals, and the randomized oracle built on it.

Every cell holds a Fraction, so programs that are algebraically equal give
bit-identical outputs and a single mismatch is a real counterexample.
Out-of-bounds accesses and division by zero are errors, not undefined
behavior.
"""

from __future__ import annotations

import logging
import random
import re
import zlib
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .affine import (
    QUOTIENT,
    And,
    AffineExpr,
    Bindings,
    Cmp,
    Forall,
    Formula,
    Opaque,
    UniversalFact,
    conj,
    free_names,
    holds,
    opaque_terms,
)
from .errors import EvaluationError, SamplingError
from .lang import (
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
    Ref,
    Seq,
    Stmt,
    ValExpr,
    ValueCond,
    iter_stmts,
)
from .timing import timed

logger = logging.getLogger("fractalsym.interp")

_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


@dataclass
class Store:
    """Parameter valuation plus the value of every array cell and scalar"""

    params: dict[str, int] = field(default_factory=dict)
    cells: dict[str, dict[tuple[int, ...], Fraction]] = field(default_factory=dict)

    def copy(self) -> Store:
        return Store(dict(self.params), {name: dict(values) for name, values in self.cells.items()})

    def read(self, name: str, index: tuple[int, ...]) -> Fraction:
        try:
            return self.cells[name][index]
        except KeyError:
            raise EvaluationError(f"read of {_cell(name, index)} is out of bounds") from None

    def write(self, name: str, index: tuple[int, ...], value: Fraction) -> None:
        values = self.cells.get(name)
        if values is None or index not in values:
            raise EvaluationError(f"write of {_cell(name, index)} is out of bounds")
        values[index] = value

    def dump(self) -> str:
        """One `name(indices)=rational` line per cell, parameters first as name=value"""
        lines = [f"{k}={v}" for k, v in sorted(self.params.items())]
        for name in sorted(self.cells):
            for index, value in sorted(self.cells[name].items()):
                lines.append(f"{_cell(name, index)}={value}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def load(text: str, program: Program) -> Store:
        store = Store()
        params = set(program.params)
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            match = _LINE.match(line)
            if match is None:
                raise ValueError(f"line {lineno}: expected name(indices)=value, got {line!r}")
            name, indices, value = match.group(1), match.group(2), match.group(3)
            if indices is None and name in params:
                store.params[name] = int(value)
                continue
            index = tuple(int(x) for x in indices.split(",")) if indices else ()
            store.cells.setdefault(name, {})[index] = Fraction(value)
        return store

    def outputs(self, names: list[str] | tuple[str, ...]) -> dict[str, dict[tuple[int, ...], Fraction]]:
        return {name: self.cells.get(name, {}) for name in names}


_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\(([-0-9, ]*)\))?\s*=\s*(-?\d+(?:/\d+)?)$")


def _cell(name: str, index: tuple[int, ...]) -> str:
    return f"{name}({','.join(map(str, index))})" if index else name


def _extent(p: Program, name: str, params: Mapping[str, int]) -> list[tuple[int, ...]]:
    decl = p.decl(name)
    if decl is None:
        raise EvaluationError(f"undeclared variable {name}")
    ranges = [range(lo.evaluate(params), hi.evaluate(params) + 1) for lo, hi in decl.bounds]
    cells: list[tuple[int, ...]] = [()]
    for r in ranges:
        cells = [(*c, v) for c in cells for v in r]
    return cells


def empty_store(p: Program, params: Mapping[str, int]) -> Store:
    """Store with every declared cell set to zero"""
    store = Store(dict(params))
    for decl in p.arrays:
        store.cells[decl.name] = {index: Fraction(0) for index in _extent(p, decl.name, params)}
    return store


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _function_value(fn: str, args: tuple[Any, ...]) -> int:
    """Deterministic stand-in value of an uninterpreted function"""
    return zlib.crc32(f"{fn}{args}".encode()) % 7 + 1


class _Machine:
    def __init__(self, p: Program, store: Store):
        self.p = p
        self.store = store
        self.functions = set(p.functions)

    def opaque(self, term: Opaque, env: Mapping[str, int]) -> int:
        args = tuple(a.evaluate(env, self.opaque) for a in term.args)
        if term.fn in self.store.cells:
            value = self.store.read(term.fn, args)
            if value.denominator != 1:
                raise EvaluationError(f"{_cell(term.fn, args)} = {value} used as an index")
            return int(value)
        if term.fn == QUOTIENT:
            return args[0] // args[1]
        return _function_value(term.fn, args)

    def index(self, ref: Ref, env: Mapping[str, int], label: str | None) -> tuple[int, ...]:
        out = []
        for ix in ref.indices:
            if isinstance(ix, NonAffineIndex):
                value = self.value(ix.expr, env, label)
                if value.denominator != 1:
                    raise EvaluationError(f"index {ix} = {value} is not an integer", label)
                out.append(int(value))
            else:
                out.append(ix.evaluate(env, self.opaque))
        return tuple(out)

    def value(self, e: ValExpr, env: Mapping[str, int], label: str | None) -> Fraction:
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Read):
            return self.store.read(e.ref.name, self.index(e.ref, env, label))
        if isinstance(e, IndexValue):
            return Fraction(e.expr.evaluate(env, self.opaque))
        if isinstance(e, Op):
            args = [self.value(a, env, label) for a in e.args]
            if e.op == "+":
                return args[0] + args[1]
            if e.op == "-":
                return args[0] - args[1]
            if e.op == "*":
                return args[0] * args[1]
            if e.op == "/":
                if args[1] == 0:
                    raise EvaluationError("division by zero", label)
                return args[0] / args[1]
            if e.op == "neg":
                return -args[0]
        if isinstance(e, Apply):
            args = [self.value(a, env, label) for a in e.args]
            if e.fn == "abs":
                return abs(args[0])
            return Fraction(_function_value(e.fn, tuple(args)))
        raise TypeError(f"Unknown value node {e!r}")

    def condition(self, s: If, env: Mapping[str, int], label: str | None) -> bool:
        if isinstance(s.cond, ValueCond):
            lhs = self.value(s.cond.lhs, env, label)
            rhs = self.value(s.cond.rhs, env, label)
            return _CMP[s.cond.op](lhs, rhs)
        return holds(s.cond, env, self.opaque)

    def bounds(self, loop: For, env: Mapping[str, int]) -> tuple[int, int, int]:
        lows = [e.evaluate(env, self.opaque) for e in loop.lower]
        highs = [e.evaluate(env, self.opaque) for e in loop.upper]
        step = loop.step if isinstance(loop.step, int) else env[loop.step]
        if step == 0:
            raise EvaluationError(f"loop {loop.var} has zero step", loop.label)
        if step > 0:
            return max(lows), min(highs), step
        return min(lows), max(highs), step

    def run(self, s: Stmt, env: dict[str, int], label: str | None = None) -> None:
        label = s.label or label
        if isinstance(s, Assign):
            value = self.value(s.rhs, env, label)
            index = self.index(s.lhs, env, label)
            decl = self.p.decl(s.lhs.name)
            if decl is not None and decl.kind == "int" and value.denominator != 1:
                raise EvaluationError(f"non-integer {value} stored in int {s.lhs.name}", label)
            self.store.write(s.lhs.name, index, value)
        elif isinstance(s, Seq):
            for c in s.stmts:
                self.run(c, env, label)
        elif isinstance(s, For):
            start, end, step = self.bounds(s, env)
            saved = env.get(s.var)
            v = start
            while (step > 0 and v <= end) or (step < 0 and v >= end):
                env[s.var] = v
                self.run(s.body, env, label)
                v += step
            if saved is None:
                env.pop(s.var, None)
            else:
                env[s.var] = saved
        elif isinstance(s, If):
            if self.condition(s, env, label):
                self.run(s.then, env, label)
            elif s.orelse is not None:
                self.run(s.orelse, env, label)
        else:
            raise TypeError(f"Unknown statement {type(s).__name__}")


def evaluate(p: Program, store: Store) -> Store:
    """Final store after running p; the input store is left untouched"""
    out = store.copy()
    _Machine(p, out).run(p.body, dict(store.params))
    return out


def opaque_evaluator(p: Program, store: Store):
    """Callback evaluating opaque index terms against store"""
    return _Machine(p, store).opaque


# ---------------------------------------------------------------------------
# Instance generation
# ---------------------------------------------------------------------------


@dataclass
class InstanceSpec:
    """What random instances of a program must look like"""

    program: Program
    params: dict[str, int] = field(default_factory=dict)
    param_range: tuple[int, int] = (1, 6)
    constraint: Formula | None = None
    max_tries: int = 200

    def formula(self) -> Formula:
        if self.constraint is not None:
            return self.constraint
        return conj(*self.program.assumes)


def divided_arrays(p: Program) -> set[str]:
    """Arrays read inside a divisor"""
    out: set[str] = set()

    def visit(e: ValExpr, in_divisor: bool) -> None:
        if isinstance(e, Read) and in_divisor:
            out.add(e.ref.name)
        elif isinstance(e, Op):
            for i, a in enumerate(e.args):
                visit(a, in_divisor or (e.op == "/" and i == 1))
        elif isinstance(e, Apply):
            for a in e.args:
                visit(a, in_divisor)

    for node in iter_stmts(p.body):
        if isinstance(node, Assign):
            visit(node.rhs, False)
    return out


def _rational(rng: random.Random, nonzero: bool) -> Fraction:
    while True:
        value = Fraction(rng.randint(-9, 9), rng.randint(1, 4))
        if value != 0 or not nonzero:
            return value


def _parts(f: Formula) -> list[Formula]:
    return list(f.args) if isinstance(f, And) else [f]


def _pointwise_bounds(fact: UniversalFact, array: str) -> tuple[list[AffineExpr], list[AffineExpr]]:
    """Lower and upper bounds a fact `forall j: ... array(j) ...` puts on array(j)"""
    var = fact.vars[0]
    cell = AffineExpr.var(Opaque(array, (AffineExpr.var(var),)))
    lows: list[AffineExpr] = []
    highs: list[AffineExpr] = []
    for atom in _parts(fact.conclusion):
        if not isinstance(atom, Cmp):
            continue
        for side, other, flip in ((atom.lhs, atom.rhs, False), (atom.rhs, atom.lhs, True)):
            if side != cell or array in {t.fn for t in other.opaque_terms()}:
                continue
            op = atom.op
            if flip:
                op = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}[op]
            if op in ("<=", "="):
                highs.append(other)
            if op == "<":
                highs.append(other - 1)
            if op in (">=", "="):
                lows.append(other)
            if op == ">":
                lows.append(other + 1)
    return lows, highs


def _param_ok(f: Formula, params: Mapping[str, int]) -> bool:
    """Ground parts of f that mention only parameters hold"""
    for part in _parts(f):
        if isinstance(part, Forall) or opaque_terms(part):
            continue
        if free_names(part) <= set(params):
            if not holds(part, params):
                return False
    return True


def _choose_params(spec: InstanceSpec, rng: random.Random, formula: Formula) -> dict[str, int]:
    lo, hi = spec.param_range
    for _ in range(spec.max_tries):
        params = {name: spec.params.get(name, rng.randint(lo, hi)) for name in spec.program.params}
        if _param_ok(formula, params):
            return params
    raise SamplingError(f"no parameter valuation satisfies the assumptions within {spec.max_tries} tries")


@timed("gen_instance")
def gen_instance(spec: InstanceSpec, seed: int = 0) -> Store:
    """
    Random store satisfying spec.formula(), deterministic per seed.

    Int arrays constrained pointwise by a `forall j in [..]: lo <= p(j) <= hi`
    fact are drawn directly from that interval; everything else is
    rejection-sampled.
    """
    p = spec.program
    rng = random.Random(seed)
    formula = spec.formula()
    nonzero = divided_arrays(p)
    universal = Bindings.from_formulas(f for f in _parts(formula) if isinstance(f, Forall)).facts

    for attempt in range(spec.max_tries):
        params = _choose_params(spec, rng, formula)
        store = empty_store(p, params)
        index_range = _index_range(p, params)
        for decl in p.arrays:
            cells = store.cells[decl.name]
            if decl.kind == "int":
                lows, highs = [], []
                if decl.rank == 1:
                    for fact in universal:
                        if len(fact.vars) == 1:
                            lo_, hi_ = _pointwise_bounds(fact, decl.name)
                            lows += [(fact, e) for e in lo_]
                            highs += [(fact, e) for e in hi_]
                for index in cells:
                    env = {**params}
                    lo, hi = index_range
                    for fact, e in lows:
                        env[fact.vars[0]] = index[0]
                        lo = max(lo, e.evaluate(env)) if not e.opaque_terms() else lo
                    for fact, e in highs:
                        env[fact.vars[0]] = index[0]
                        hi = min(hi, e.evaluate(env)) if not e.opaque_terms() else hi
                    cells[index] = Fraction(rng.randint(lo, hi) if lo <= hi else rng.randint(*index_range))
            else:
                for index in cells:
                    cells[index] = _rational(rng, decl.name in nonzero)
        machine = _Machine(p, store)
        try:
            ok = holds(formula, params, machine.opaque)
        except EvaluationError:
            ok = False
        if ok:
            logger.debug(f"Instance for seed {seed} after {attempt + 1} attempt(s): {params}")
            return store
    raise SamplingError(f"could not satisfy the constraint within {spec.max_tries} samples")


def _index_range(p: Program, params: Mapping[str, int]) -> tuple[int, int]:
    """Smallest and largest declared index of any array"""
    los, his = [], []
    for decl in p.arrays:
        for lo, hi in decl.bounds:
            los.append(lo.evaluate(params))
            his.append(hi.evaluate(params))
    if not los:
        return 1, max(1, max(params.values(), default=1))
    return min(los), max(his)


# ---------------------------------------------------------------------------
# Equivalence fuzzing
# ---------------------------------------------------------------------------


@dataclass
class FuzzResult:
    trials: int
    counterexample: Store | None = None
    diagnosis: str | None = None
    skipped: int = 0

    @property
    def equivalent(self) -> bool:
        return self.counterexample is None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "outcome": "no-counterexample" if self.equivalent else "counterexample",
            "trials": self.trials,
            "skipped": self.skipped,
        }
        if self.counterexample is not None:
            out["diagnosis"] = self.diagnosis
            out["instance"] = self.counterexample.dump()
        return out


def _first_difference(a: Store, b: Store, names: tuple[str, ...]) -> str | None:
    for name in names:
        va, vb = a.cells.get(name, {}), b.cells.get(name, {})
        for index in sorted(set(va) | set(vb)):
            if va.get(index) != vb.get(index):
                return f"{_cell(name, index)}: {va.get(index)} vs {vb.get(index)}"
    return None


@timed("equiv_fuzz")
def equiv_fuzz(p1: Program, p2: Program, spec: InstanceSpec, trials: int = 200, seed: int = 0) -> FuzzResult:
    """Run both programs on random instances and compare declared outputs exactly"""
    names = p1.outputs or tuple(a.name for a in p1.arrays)
    result = FuzzResult(0)
    for trial in range(trials):
        store = gen_instance(spec, seed * 100003 + trial)
        result.trials += 1
        errors = []
        finals = []
        for p in (p1, p2):
            try:
                finals.append(evaluate(p, store))
            except EvaluationError as e:
                errors.append(str(e))
                finals.append(None)
        if len(errors) == 2:
            result.skipped += 1
            logger.debug(f"Trial {trial}: both programs failed ({errors[0]})")
            continue
        if errors:
            result.counterexample = store
            result.diagnosis = f"only one program failed: {errors[0]}"
            return result
        diff = _first_difference(finals[0], finals[1], names)
        if diff is not None:
            result.counterexample = store
            result.diagnosis = diff
            logger.info(f"Counterexample at trial {trial}: {diff}")
            return result
    return result
