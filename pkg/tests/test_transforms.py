"""Tests for transformation specs, obligations, rewriting and the dependence baseline."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st


class TestParseTransform:
    """Tests for the transformation surface syntax."""

    @pytest.mark.parametrize(
        "text",
        [
            "reorder(S1,S3)",
            "distribute(j;S1|S2)",
            "fuse(L1,L2)",
            "reverse(i)",
            "interchange(k,i)",
            "linear(i,j;[[1,0],[1,1]])",
            "stripmine(j,B)",
            "split(k,jB+B)",
            "peel(j,last)",
            "tile(i,j;B,4)",
        ],
    )
    def test_format_is_stable(self, text):
        """Formatting a parsed spec reproduces its text."""
        from fractalsym.transforms import format_transform, parse_transform

        assert format_transform(parse_transform(text)) == text

    def test_defaults_and_shorthands(self):
        """peel defaults to the first iteration, skew is a fixed matrix."""
        from fractalsym.transforms import LinearTransform, Peel, parse_transform

        assert parse_transform("peel(j)") == Peel("j", "first")
        assert parse_transform("skew(i,j)") == LinearTransform(("i", "j"), ((1, 0), (1, 1)))

    def test_block_sizes(self):
        """Numeric block sizes become ints, names stay symbolic."""
        from fractalsym.transforms import parse_transform

        assert parse_transform("stripmine(j,4)").block == 4
        assert parse_transform("stripmine(j,B)").block == "B"

    @pytest.mark.parametrize(
        "text",
        ["bogus(x)", "reorder", "reorder(S1)", "distribute(j;S1)", "linear(i,j;[[1,0]])", "peel(j,middle)"],
    )
    def test_malformed(self, text):
        """Malformed specs raise ParseError."""
        from fractalsym.errors import ParseError
        from fractalsym.transforms import parse_transform

        with pytest.raises(ParseError):
            parse_transform(text)


class TestReorderedPairs:
    """Tests for the inversion set of a permutation."""

    def test_identity(self):
        """The identity reorders nothing."""
        from fractalsym.transforms import reordered_pairs

        assert reordered_pairs(3, (1, 2, 3)) == set()

    def test_reversal(self):
        """Reversal reorders every pair."""
        from fractalsym.transforms import reordered_pairs

        assert reordered_pairs(3, (3, 2, 1)) == {(1, 2), (1, 3), (2, 3)}

    def test_single_swap(self):
        """Moving statement 3 to the front reorders it with each predecessor."""
        from fractalsym.transforms import reordered_pairs

        assert reordered_pairs(3, (2, 3, 1)) == {(1, 3), (2, 3)}

    def test_not_a_permutation(self):
        """Repeated positions are rejected."""
        from fractalsym.transforms import reordered_pairs

        with pytest.raises(ValueError):
            reordered_pairs(3, (1, 1, 2))


SCALARS = ("a", "b", "c")

_rhs = st.one_of(
    st.builds(lambda x, k: f"{x} + {k}", st.sampled_from(SCALARS), st.integers(-3, 3)),
    st.builds(lambda x, k: f"{k} * {x}", st.sampled_from(SCALARS), st.integers(-3, 3)),
    st.builds(lambda x, y: f"{x} + {y}", st.sampled_from(SCALARS), st.sampled_from(SCALARS)),
    st.builds(lambda x, y: f"{x} * {y}", st.sampled_from(SCALARS), st.sampled_from(SCALARS)),
)
_assignment = st.builds(lambda lhs, rhs: f"{lhs} = {rhs}", st.sampled_from(SCALARS), _rhs)


def _straight_line(assignments):
    from fractalsym.syntax import parse_program

    body = "\n".join(f"  S{i}: {text};" for i, text in enumerate(assignments, 1))
    return parse_program(f"program s() {{\n  scalar a, b, c;\n  outputs {{a, b, c}};\n{body}\n}}\n")


def _agree(first, second, points):
    from fractalsym.interp import empty_store, evaluate

    for values in points:
        store = empty_store(first, {})
        for name, value in zip(SCALARS, values):
            store.cells[name][()] = Fraction(value)
        if evaluate(first, store).outputs(SCALARS) != evaluate(second, store).outputs(SCALARS):
            return False
    return True


@pytest.mark.slow
class TestReorderByCommutingPairs:
    """A permutation whose reordered pairs all commute preserves the program."""

    @settings(settings.get_profile("thorough"))
    @given(
        st.lists(_assignment, min_size=1, max_size=5).flatmap(
            lambda stmts: st.tuples(st.just(stmts), st.permutations(range(1, len(stmts) + 1)))
        ),
        st.lists(st.tuples(*(st.fractions(-5, 5, max_denominator=4),) * 3), min_size=4, max_size=4),
    )
    def test_commuting_inversions_imply_equivalence(self, case, points):
        """Only inversion pairs need to commute."""
        from fractalsym.transforms import reordered_pairs

        stmts, perm = case
        pairs = reordered_pairs(len(stmts), perm)
        if not all(
            _agree(_straight_line([stmts[i - 1], stmts[j - 1]]), _straight_line([stmts[j - 1], stmts[i - 1]]), points)
            for i, j in pairs
        ):
            return
        order = sorted(range(1, len(stmts) + 1), key=lambda i: perm[i - 1])
        permuted = _straight_line([stmts[i - 1] for i in order])
        assert _agree(_straight_line(stmts), permuted, points)


class TestFindLoop:
    """Tests for loop designators."""

    def test_by_label(self, load):
        """A label designates its loop."""
        from fractalsym.transforms import find_loop

        assert find_loop(load("lu"), "U").var == "k"

    def test_label_and_var(self, load):
        """label/var picks the loop on var inside the labeled statement."""
        from fractalsym.transforms import find_loop

        loop = find_loop(load("lu"), "U/i")
        assert loop.var == "i"

    def test_ambiguous_variable(self, load):
        """A loop variable used by two loops must be qualified."""
        from fractalsym.errors import TransformError
        from fractalsym.transforms import find_loop

        with pytest.raises(TransformError, match="ambiguous"):
            find_loop(load("lu"), "k")

    def test_missing(self, swap_scale):
        """Unknown designators raise TransformError."""
        from fractalsym.errors import TransformError
        from fractalsym.transforms import find_loop

        with pytest.raises(TransformError):
            find_loop(swap_scale, "zz")

    def test_label_of_non_loop(self, swap_scale):
        """A statement label that is not a loop is rejected."""
        from fractalsym.errors import TransformError
        from fractalsym.transforms import find_loop

        with pytest.raises(TransformError, match="not a loop"):
            find_loop(swap_scale, "S1")


class TestObligations:
    """Tests for obligations_for."""

    def test_distribute_has_one_obligation(self, swap_scale):
        """Distributing two groups yields one commutation of later S1 with earlier S2."""
        from fractalsym.transforms import obligations_for, parse_transform

        obligations = obligations_for(swap_scale, parse_transform("distribute(j;S1|S2)"))
        assert len(obligations) == 1
        ob = obligations[0]
        assert ob.left_name.startswith("S1(")
        assert ob.right_name.startswith("S2(")
        assert not ob.left_first
        assert "A" in ob.live

    def test_reorder_reversal_obligations(self, load):
        """Swapping the ends of a three-statement sequence reorders all pairs."""
        from fractalsym.transforms import obligations_for, parse_transform

        obligations = obligations_for(load("scale_sum"), parse_transform("reorder(S1,S3)"))
        assert [(ob.left_name, ob.right_name) for ob in obligations] == [("S1", "S2"), ("S1", "S3"), ("S2", "S3")]

    def test_reorder_outside_one_sequence(self, load):
        """Statements in different sequences cannot be reordered."""
        from fractalsym.errors import TransformError
        from fractalsym.transforms import obligations_for, parse_transform

        with pytest.raises(TransformError):
            obligations_for(load("lu"), parse_transform("reorder(B1.a,J)"))

    @pytest.mark.parametrize("text", ["stripmine(j,B)", "split(J,B)", "peel(J,first)"])
    def test_order_preserving_transforms_have_none(self, load, text):
        """Transformations that keep the execution order impose nothing."""
        from fractalsym.transforms import obligations_for, parse_transform

        assert obligations_for(load("lu"), parse_transform(text)) == []

    def test_distribute_blocked_lu(self, lu_blocked):
        """Distributing J in blocked LU yields a single obligation."""
        from fractalsym.transforms import obligations_for, parse_transform

        obligations = obligations_for(lu_blocked, parse_transform("distribute(J;B1|B2)"))
        assert len(obligations) == 1

    def test_interchange_requires_perfect_nest(self, load):
        """Loops separated by other statements cannot be interchanged."""
        from fractalsym.errors import TransformError
        from fractalsym.transforms import obligations_for, parse_transform

        with pytest.raises(TransformError, match="perfectly nested"):
            obligations_for(load("lu"), parse_transform("interchange(J,U)"))

    def test_linear_requires_unimodular(self, load):
        """A non-unimodular matrix is rejected."""
        from fractalsym.errors import TransformError
        from fractalsym.transforms import obligations_for, parse_transform

        with pytest.raises(TransformError, match="unimodular"):
            obligations_for(load("lu"), parse_transform("linear(U,U/i;[[2,0],[0,1]])"))


BLOCKED_LU = """
program lu(N, B) {
  assume N >= 1;
  assume B >= 1;
  assume forall j in [1, N]: j <= p(j) <= N;
  array A[1..N][1..N]: real inout;
  array p[1..N]: int inout;
  scalar tmp;
  outputs {A, p};
  J: for jB = 1 to N step B {
    for j = jB to min(jB + B - 1, N) {
      B1.a: p(j) = j;
      B1.b: for i = j + 1 to N {
        if (abs(A(i, j)) > abs(A(p(j), j))) {
          p(j) = i;
        }
      }
      B1.c: for k = 1 to N {
        tmp = A(j, k);
        A(j, k) = A(p(j), k);
        A(p(j), k) = tmp;
      }
      B1.d: for i = j + 1 to N {
        A(i, j) = A(i, j) / A(j, j);
      }
      U: for k = j + 1 to min(N, jB + B - 1) {
        for i = j + 1 to N {
          A(i, k) = A(i, k) - A(i, j) * A(j, k);
        }
      }
    }
    for j = jB to min(jB + B - 1, N) {
      U_2: for k = jB + B to N {
        for i = j + 1 to N {
          A(i, k) = A(i, k) - A(i, j) * A(j, k);
        }
      }
    }
  }
}
"""


class TestApply:
    """Tests for apply."""

    def test_distribute_structure(self, swap_scale):
        """Distribution puts one loop per group into the enclosing sequence."""
        from fractalsym.lang import For
        from fractalsym.transforms import apply, parse_transform

        q = apply(swap_scale, parse_transform("distribute(j;S1|S2)"))
        loops = q.body.stmts
        assert len(loops) == 2
        assert all(isinstance(loop, For) and loop.var == "j" for loop in loops)
        assert loops[0].upper == loops[1].upper

    def test_reorder_swaps(self, load):
        """reorder exchanges two statements of a sequence."""
        from fractalsym.transforms import apply, parse_transform

        q = apply(load("scale_sum"), parse_transform("reorder(S1,S3)"))
        assert [s.label for s in q.body.stmts] == ["S3", "S2", "S1"]

    def test_stripmine_reparses(self, load):
        """Stripmined programs print and parse back to the same program."""
        from fractalsym.syntax import parse_program, print_program
        from fractalsym.transforms import apply, parse_transform

        q = apply(load("lu"), parse_transform("stripmine(J,B)"))
        text = print_program(q)
        assert "step B" in text
        assert print_program(parse_program(text)) == text

    def test_stripmine_block_must_be_parameter(self, load):
        """Symbolic block sizes must be program parameters."""
        from fractalsym.errors import TransformError
        from fractalsym.transforms import apply, parse_transform

        with pytest.raises(TransformError, match="not a parameter"):
            apply(load("lu"), parse_transform("stripmine(J,Q)"))

    def test_interchange_swaps_loops(self, load):
        """Interchange puts the inner loop outside."""
        from fractalsym.transforms import apply, find_loop, parse_transform

        q = apply(load("lu"), parse_transform("interchange(U,U/i)"))
        assert find_loop(q, "U").var == "i"

    def test_split_halves_are_siblings(self, load):
        """Both halves of a split loop sit directly in the enclosing loop body."""
        from fractalsym.transforms import apply, find_loop, parse_transform

        q = apply(load("lu"), parse_transform("split(U,j+2)"))
        assert [s.label for s in find_loop(q, "J").body.stmts][-2:] == ["U", "U_2"]

    def test_split_drops_redundant_bound(self, load):
        """A split point the enclosing loops already bound replaces the old start."""
        from fractalsym.affine import AffineExpr
        from fractalsym.transforms import apply, find_loop, parse_transform

        q = apply(load("lu"), parse_transform("split(U,j+2)"))
        assert find_loop(q, "U_2").lower == (AffineExpr.var("j") + 2,)
        assert len(find_loop(q, "U").upper) == 2

    def test_peel_halves_are_siblings(self, load):
        """Peeling leaves the guarded iteration next to the remaining loop."""
        from fractalsym.lang import For, If
        from fractalsym.transforms import apply, find_loop, parse_transform

        q = apply(load("lu"), parse_transform("peel(B1.d,first)"))
        kinds = [type(s) for s in find_loop(q, "J").body.stmts]
        assert kinds[3:5] == [If, For]

    def test_blocked_pipeline_form(self, load):
        """Stripmining, splitting and distributing point LU gives the blocked form."""
        from fractalsym.syntax import parse_program, print_program
        from fractalsym.transforms import apply, parse_transform

        q = load("lu")
        for text in ("stripmine(J,B)", "split(U,jB+B)", "distribute(j;B1.a|U_2)"):
            q = apply(q, parse_transform(text))
        assert print_program(q) == print_program(parse_program(BLOCKED_LU))

    @pytest.mark.slow
    def test_blocked_pipeline_with_tiling_agrees(self, load):
        """The blocked and tiled LU computes exactly what point LU computes."""
        from fractalsym.interp import InstanceSpec, equiv_fuzz
        from fractalsym.transforms import apply, parse_transform

        lu = load("lu")
        q = lu
        for text in ("stripmine(J,B)", "split(U,jB+B)", "distribute(j;B1.a|U_2)", "tile(U_2,U_2/i;B,B)"):
            q = apply(q, parse_transform(text))
        result = equiv_fuzz(lu, q, InstanceSpec(lu, params={"N": 8, "B": 3}), trials=100)
        assert result.equivalent, result.diagnosis

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "text",
        [
            "stripmine(J,B)",
            "stripmine(J,2)",
            "split(U,j+2)",
            "peel(B1.d,first)",
            "peel(B1.d,last)",
            "interchange(U,U/i)",
            "reverse(U/i)",
            "tile(U,U/i;2,B)",
            "skew(U,U/i)",
        ],
    )
    def test_value_preserving_on_lu(self, load, text):
        """Transformations that keep each cell's computation give identical results."""
        from fractalsym.affine import conj
        from fractalsym.interp import InstanceSpec, equiv_fuzz
        from fractalsym.transforms import apply, parse_transform

        lu = load("lu")
        q = apply(lu, parse_transform(text))
        result = equiv_fuzz(lu, q, InstanceSpec(lu, constraint=conj(*lu.assumes)), trials=25)
        assert result.equivalent, result.diagnosis

    @pytest.mark.slow
    def test_distribute_with_pivot_fact(self, swap_scale):
        """Distribution of swap_scale agrees with the original when p(j) >= j."""
        from fractalsym.affine import conj
        from fractalsym.interp import InstanceSpec, equiv_fuzz
        from fractalsym.syntax import parse_formula
        from fractalsym.transforms import apply, parse_transform

        q = apply(swap_scale, parse_transform("distribute(j;S1|S2)"))
        pivot = parse_formula("forall j in [1, N]: j <= p(j) <= N", swap_scale)
        spec = InstanceSpec(swap_scale, constraint=conj(*swap_scale.assumes, pivot))
        assert equiv_fuzz(swap_scale, q, spec, trials=50).equivalent


class TestDependenceLegality:
    """Tests for the memory-dependence baseline."""

    def test_scale_sum_reorder_is_rejected(self, load):
        """Reordering statements that share a scalar has dependences."""
        from fractalsym.transforms import dependence_legality, parse_transform

        report = dependence_legality(load("scale_sum"), parse_transform("reorder(S1,S3)"))
        assert not report.legal
        assert {d.array for d in report.dependences} >= {"a"}

    def test_swap_scale_distribute_is_rejected(self, swap_scale):
        """The pivot swap aliases the scaled elements."""
        from fractalsym.transforms import dependence_legality, parse_transform

        report = dependence_legality(swap_scale, parse_transform("distribute(j;S1|S2)"))
        assert not report.legal
        assert all(d.array in ("A", "tmp") for d in report.dependences)

    def test_update_interchange_is_accepted(self, load):
        """The update nest has no dependences between distinct cells."""
        from fractalsym.transforms import dependence_legality, parse_transform

        report = dependence_legality(load("lu"), parse_transform("interchange(U,U/i)"))
        assert report.legal
        assert report.to_dict()["dependences"] == []

    def test_blocked_witness_names_block_origin(self, lu_blocked):
        """Witnesses bind the enclosing block loop variable as well as the instances."""
        from fractalsym.transforms import dependence_legality, parse_transform

        report = dependence_legality(lu_blocked, parse_transform("distribute(J;B1|B2)"))
        assert not report.legal
        witnesses = [d.witness for d in report.dependences if d.witness]
        assert witnesses
        assert all("jB" in w for w in witnesses)
        assert all(1 <= w["jB"] <= w["N"] for w in witnesses)

    def test_report_dict(self, swap_scale):
        """Dependences serialize with kind and witness."""
        from fractalsym.transforms import dependence_legality, parse_transform

        out = dependence_legality(swap_scale, parse_transform("distribute(j;S1|S2)")).to_dict()
        assert out["transform"] == "distribute(j;S1|S2)"
        assert out["legal"] is False
        assert out["dependences"][0]["kind"] in ("flow", "anti", "output")
