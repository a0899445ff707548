"""Tests for symbolic value expressions."""

from fractions import Fraction

from hypothesis import given
from hypothesis import strategies as st


def _read(name):
    from fractalsym.symexpr import InputRead

    return InputRead(name)


def _op(op, *args):
    from fractalsym.symexpr import SOp

    return SOp(op, tuple(args))


def _num(v):
    from fractalsym.symexpr import Num

    return Num(Fraction(v))


class TestCanon:
    """Tests for the ring normal form."""

    def test_commutativity(self):
        """a + b equals b + a."""
        from fractalsym.symexpr import equal

        a, b = _read("a"), _read("b")
        assert equal(_op("+", a, b), _op("+", b, a))

    def test_figure_one_values(self):
        """2*(a+b) equals 2*a + 2*b, the final value of a in both orders."""
        from fractalsym.symexpr import equal

        a, b = _read("a"), _read("b")
        first = _op("+", _op("*", _num(2), a), _op("*", _num(2), b))
        second = _op("*", _num(2), _op("+", a, b))
        assert equal(first, second)

    def test_distinct_values(self):
        """a/b differs from a."""
        from fractalsym.symexpr import equal

        a, b = _read("a"), _read("b")
        assert not equal(_op("/", a, b), a)

    def test_division_is_atomic(self):
        """(a/b)/c and a/(b*c) are kept apart."""
        from fractalsym.symexpr import equal

        a, b, c = _read("a"), _read("b"), _read("c")
        assert not equal(_op("/", _op("/", a, b), c), _op("/", a, _op("*", b, c)))

    def test_identical_divisions_match(self):
        """Equal division subtrees are one atom."""
        from fractalsym.symexpr import equal

        a, b = _read("a"), _read("b")
        assert equal(_op("-", _op("/", a, b), _op("/", a, b)), _num(0))

    def test_round_trip_through_canon(self):
        """to_symexpr(canon(e)) has the canonical form of e."""
        from fractalsym.symexpr import canon, to_symexpr

        a, b = _read("a"), _read("b")
        e = _op("*", _op("-", a, b), _op("+", a, b))
        assert canon(to_symexpr(canon(e))) == canon(e)


_LEAVES = ["a", "b", "c"]


def _exprs():
    leaf = st.one_of(st.sampled_from(_LEAVES).map(_read), st.integers(-3, 3).map(_num))
    return st.recursive(
        leaf,
        lambda inner: st.builds(lambda op, x, y: _op(op, x, y), st.sampled_from(["+", "-", "*"]), inner, inner),
        max_leaves=8,
    )


class TestCanonSoundness:
    """Canonical forms agree with evaluation."""

    @given(_exprs(), st.lists(st.integers(-5, 5), min_size=3, max_size=3))
    def test_canon_preserves_value(self, e, values):
        """Evaluating the normal form gives the same number."""
        from fractalsym.symexpr import canon, evaluate, to_symexpr

        cells = {name: Fraction(v) for name, v in zip(_LEAVES, values)}

        def read(name, index):
            return cells[name]

        assert evaluate(to_symexpr(canon(e)), read, {}) == evaluate(e, read, {})

    @given(_exprs(), _exprs())
    def test_equal_is_symmetric(self, e1, e2):
        """equal(e1, e2) == equal(e2, e1)."""
        from fractalsym.symexpr import equal

        assert equal(e1, e2) == equal(e2, e1)
