"""Tests for the integer elimination engine."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st


def _f(text):
    from fractalsym.syntax import parse_formula

    return parse_formula(text)


class TestSatisfiability:
    """Exact integer answers on small systems."""

    def test_simple_interval(self):
        """A non-empty interval is satisfiable."""
        from fractalsym.omega import is_satisfiable

        assert is_satisfiable(_f("1 <= x and x <= 3"))

    def test_empty_interval(self):
        """Contradictory bounds are unsatisfiable."""
        from fractalsym.omega import is_satisfiable

        assert not is_satisfiable(_f("x >= 3 and x <= 2"))

    def test_integer_gap(self):
        """2x = 1 has a rational but no integer solution."""
        from fractalsym.omega import is_satisfiable

        assert not is_satisfiable(_f("2 * x = 1"))

    def test_no_integer_between_bounds(self):
        """Rational solutions exist but no integer one does."""
        from fractalsym.omega import is_satisfiable

        assert not is_satisfiable(_f("3 * y <= 2 * x and 2 * x <= 3 * y + 1 and x = 1"))

    def test_mod_constraint(self):
        """Divisibility atoms are honored."""
        from fractalsym.omega import is_satisfiable

        assert is_satisfiable(_f("x mod 3 = 1 and 0 <= x and x <= 2"))
        assert not is_satisfiable(_f("x mod 3 = 1 and x mod 3 = 2"))

    def test_under_background(self):
        """Satisfiability is relative to the background formula."""
        from fractalsym.omega import is_satisfiable

        assert not is_satisfiable(_f("x > N"), under=_f("x <= N"))

    def test_exists_is_projected(self):
        """An existential witness inside the formula is eliminated."""
        from fractalsym.omega import is_satisfiable

        assert is_satisfiable(_f("exists j: 1 <= j and j <= N and k = j"), under=_f("N >= 1 and k = N"))
        assert not is_satisfiable(_f("exists j: 1 <= j and j <= N and k = j"), under=_f("k = N + 1"))

class TestImplication:
    """Tests for implies."""

    def test_implied_bound(self):
        """A tighter bound implies a looser one."""
        from fractalsym.omega import implies

        assert implies(_f("x >= 5"), _f("x >= 3"))
        assert not implies(_f("x >= 3"), _f("x >= 5"))

    def test_integer_implication(self):
        """x > 2 implies x >= 3 over the integers."""
        from fractalsym.omega import implies

        assert implies(_f("x > 2"), _f("x >= 3"))


class TestWitness:
    """Tests for find_witness and guard simplification."""

    def test_witness_satisfies(self):
        """The witness makes the formula true."""
        from fractalsym.affine import holds
        from fractalsym.omega import find_witness

        f = _f("1 <= m and m < l and l <= N and N <= 4")
        witness = find_witness(f, ["N", "l", "m"])
        assert witness is not None
        assert holds(f, witness)

    def test_no_witness_when_unsat(self):
        """An unsatisfiable formula has no witness."""
        from fractalsym.omega import find_witness

        assert find_witness(_f("x < 0 and x > 0"), ["x"]) is None

    def test_guard_simplification_drops_implied(self):
        """Conjuncts entailed by the rest are removed without changing the solutions."""
        from fractalsym.affine import TRUE, free_names
        from fractalsym.gse import Background, simplify_guard
        from fractalsym.omega import implies

        f = _f("1 <= k and k <= m and m < N and k < N")
        out = simplify_guard([f], Background(TRUE))
        assert free_names(out) <= {"k", "m", "N"}
        assert len(str(out).split(" and ")) == 3
        assert implies(out, f) and implies(f, out)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

VARS = ("w", "x", "y", "z")
BOX = 6


def _atom():
    from fractalsym.affine import AffineExpr, Cmp, Mod

    coeffs = st.lists(st.integers(-3, 3), min_size=4, max_size=4)
    const = st.integers(-6, 6)
    expr = st.builds(lambda cs, c: AffineExpr.build(dict(zip(VARS, cs)), c), coeffs, const)
    cmp_atom = st.builds(Cmp, st.sampled_from(["<", "<=", "=", "!=", ">=", ">"]), expr, expr)
    mod_atom = st.builds(lambda e, m, r: Mod(e, m, r % m), expr, st.integers(2, 4), st.integers(0, 3))
    return st.one_of(cmp_atom, cmp_atom, mod_atom)


def _formula():
    from fractalsym.affine import Exists, conj, disj, neg

    return st.recursive(
        _atom(),
        lambda inner: st.one_of(
            st.builds(lambda a, b: conj(a, b), inner, inner),
            st.builds(lambda a, b: disj(a, b), inner, inner),
            st.builds(neg, inner),
            st.builds(lambda a: Exists(("w",), a), inner),
        ),
        max_leaves=5,
    )


def _box():
    from fractalsym.affine import between, conj

    return conj(*(between(-BOX, v, BOX) for v in VARS))


def _brute(f) -> bool:
    return any(
        _brute_at(f, dict(zip(VARS, values)))
        for values in itertools.product(range(-BOX, BOX + 1), repeat=len(VARS))
    )


def _boxed_exists(f):
    """Bound every existential to the box so the oracle can enumerate it"""
    from fractalsym.affine import And, Exists, Not, Or, between, conj

    if isinstance(f, Exists):
        return Exists(f.vars, conj(between(-BOX, "w", BOX), _boxed_exists(f.body)))
    if isinstance(f, And):
        return And(tuple(_boxed_exists(a) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(_boxed_exists(a) for a in f.args))
    if isinstance(f, Not):
        return Not(_boxed_exists(f.arg))
    return f


@pytest.mark.slow
class TestAgainstEnumeration:
    """Solver answers agree with exhaustive enumeration over a box."""

    @settings(settings.get_profile("thorough"))
    @given(_formula())
    def test_is_satisfiable_matches_enumeration(self, f):
        """is_satisfiable equals brute force on boxed formulas."""
        from fractalsym.affine import conj
        from fractalsym.omega import is_satisfiable

        f = _boxed_exists(f)
        assert is_satisfiable(conj(_box(), f), budget=10**6) == _brute(f)

    @settings(settings.get_profile("thorough"))
    @given(_formula())
    def test_eliminate_exists_preserves_solutions(self, f):
        """The quantifier-free result has exactly the same boxed solutions."""
        from fractalsym.affine import Exists, conj
        from fractalsym.omega import eliminate_exists

        f = _boxed_exists(f)
        body = Exists(("w",), conj(_box(), f))
        free = eliminate_exists(body, budget=10**6)
        for values in itertools.product(range(-2, 3), repeat=3):
            env = dict(zip(("x", "y", "z"), values))
            assert _brute_at(free, env) == _brute_at(body, env)


def _brute_at(f, env) -> bool:
    from fractalsym.affine import And, Exists, Not, Or, holds

    if isinstance(f, Exists):
        return any(_brute_at(f.body, {**env, f.vars[0]: w}) for w in range(-BOX, BOX + 1))
    if isinstance(f, And):
        return all(_brute_at(a, env) for a in f.args)
    if isinstance(f, Or):
        return any(_brute_at(a, env) for a in f.args)
    if isinstance(f, Not):
        return not _brute_at(f.arg, env)
    return holds(f, {"w": 0, **env})


class TestProfiles:
    """Slow randomized properties run the long profile."""

    @pytest.mark.parametrize(
        "test",
        [
            TestAgainstEnumeration.test_is_satisfiable_matches_enumeration,
            TestAgainstEnumeration.test_eliminate_exists_preserves_solutions,
        ],
    )
    def test_slow_properties_run_thorough(self, test):
        """Each enumeration property draws 1000 examples."""
        assert test._hypothesis_internal_use_settings.max_examples == 1000
