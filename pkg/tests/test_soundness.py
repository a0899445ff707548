"""Proven verdicts checked against random execution."""

import pytest

PIVOT = "forall j in [1, N]: j <= p(j) <= N"

pytestmark = pytest.mark.slow


def _spec(program, *extra):
    from fractalsym.affine import conj
    from fractalsym.interp import InstanceSpec
    from fractalsym.syntax import parse_formula

    facts = [parse_formula(text, program) for text in extra]
    return InstanceSpec(program, constraint=conj(*program.assumes, *facts))


class TestCompareSoundness:
    """Programs that compare equal agree on every sampled instance."""

    @pytest.mark.parametrize(
        "pair",
        [("scale_sum", "scale_sum_reordered"), ("swap_update", "update_swap"), ("panel_update_swap", "panel_swap_update")],
    )
    def test_equal_pairs_agree(self, load, pair):
        """Symbolically equal pairs have no counterexample."""
        from fractalsym.gse import compare_programs
        from fractalsym.interp import equiv_fuzz

        p1, p2 = (load(name) for name in pair)
        report = compare_programs(p1.body, p2.body, p1.bindings(), p1.outputs or None, p1)
        assert report.equal
        assert equiv_fuzz(p1, p2, _spec(p1), trials=60).equivalent

    def test_unproven_pair_really_differs(self, load):
        """The pair Compare rejects does differ on some instance."""
        from fractalsym.gse import compare_programs
        from fractalsym.interp import equiv_fuzz

        p1, p2 = load("swap_update_cell"), load("update_cell_swap")
        assert not compare_programs(p1.body, p2.body, p1.bindings(), p1.outputs or None, p1).equal
        assert not equiv_fuzz(p1, p2, _spec(p1)).equivalent


class TestLegalitySoundness:
    """Transformations proven legal preserve the program's outputs."""

    @pytest.mark.parametrize(
        "name,transform,facts",
        [
            ("swap_scale", "distribute(j;S1|S2)", (PIVOT,)),
            ("lu", "interchange(U,U/i)", ()),
            ("lu", "stripmine(J,B)", ()),
            ("lu_blocked", "distribute(J;B1|B2)", ()),
        ],
    )
    def test_legal_transforms_agree(self, load, config, name, transform, facts):
        """Legal verdicts survive fuzzing of the transformed program."""
        from fractalsym.affine import Bindings
        from fractalsym.analyzer import check_transformation
        from fractalsym.interp import equiv_fuzz
        from fractalsym.syntax import parse_formula
        from fractalsym.transforms import apply, parse_transform

        p = load(name)
        t = parse_transform(transform)
        extra = Bindings.from_formulas(parse_formula(text, p) for text in facts)
        assert check_transformation(p, t, extra, config).legal
        result = equiv_fuzz(p, apply(p, t), _spec(p, *facts), trials=40)
        assert result.equivalent, result.diagnosis

    def test_unproven_distribution_is_wrong_without_fact(self, swap_scale, config):
        """Without p(j) >= j distributing swap_scale changes the result on some instance."""
        from fractalsym.analyzer import check_transformation
        from fractalsym.interp import equiv_fuzz
        from fractalsym.transforms import apply, parse_transform

        t = parse_transform("distribute(j;S1|S2)")
        assert not check_transformation(swap_scale, t, None, config).legal
        assert not equiv_fuzz(swap_scale, apply(swap_scale, t), _spec(swap_scale)).equivalent
