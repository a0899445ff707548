"""Tests for footprints, commute and check_transformation."""

import re
from dataclasses import replace

import pytest

TRACE_LINE = re.compile(r"^\s*\[depth \d+\] [A-Z]+\(.*\) -> (Legal|Unknown|descend)(  # .*)?$")


def _stmts(program, *labels):
    from fractalsym.transforms import find_stmt

    return [find_stmt(program, label) for label in labels]


class TestFootprint:
    """Tests for footprint-based disjointness."""

    def test_scalars_disjoint(self, load):
        """Statements on different scalars commute by footprint alone."""
        from fractalsym.affine import Bindings
        from fractalsym.analyzer import disjoint_commute

        scale_sum = load("scale_sum")
        s1, s2 = _stmts(scale_sum, "S1", "S2")
        assert disjoint_commute(s1, s2, Bindings(), scale_sum)

    def test_shared_scalar_conflicts(self, load):
        """A write and a read of the same scalar conflict."""
        from fractalsym.affine import Bindings
        from fractalsym.analyzer import footprint_conflict

        scale_sum = load("scale_sum")
        s1, s3 = _stmts(scale_sum, "S1", "S3")
        assert "meets" in footprint_conflict(s1, s3, Bindings(), scale_sum)

    def test_regions_carry_loop_predicates(self, load):
        """Regions keep their affine indices and enclosing loop bounds."""
        from fractalsym.analyzer import footprint

        swap_update = load("swap_update")
        (s2,) = _stmts(swap_update, "S2")
        fp = footprint(s2, swap_update)
        assert {r.array for r in fp.writes} == {"A"}
        assert all(r.index is not None for r in fp.reads)
        assert "m + 1 <= i" in str(fp.writes[0])


class TestCommute:
    """Tests for the commute procedure."""

    def test_fast_path(self, load, config):
        """Disjoint statements are settled without comparison."""
        from fractalsym.affine import Bindings
        from fractalsym.analyzer import commute

        scale_sum = load("scale_sum")
        s1, s2 = _stmts(scale_sum, "S1", "S2")
        verdict = commute(s1, s2, Bindings(), {"a", "b"}, scale_sum, config)
        assert verdict.legal
        assert verdict.trace[0].rule == "FASTPATH"

    def test_empty_sequence(self, load, config):
        """An empty statement commutes with anything."""
        from fractalsym.affine import Bindings
        from fractalsym.analyzer import commute
        from fractalsym.lang import Seq

        scale_sum = load("scale_sum")
        (s1,) = _stmts(scale_sum, "S1")
        verdict = commute(Seq(()), s1, Bindings(), {"a"}, scale_sum, config)
        assert verdict.legal
        assert verdict.trace[0].rule == "EMPTY"

    def test_swap_and_update_commute(self, load, config):
        """The swap of a later step commutes with an earlier update."""
        from fractalsym.analyzer import commute

        swap_update = load("swap_update")
        s1, s2 = _stmts(swap_update, "S1", "S2")
        verdict = commute(s1, s2, swap_update.bindings(), {"A"}, swap_update, config)
        assert verdict.legal
        assert verdict.trace[0].rule == "COMPARE"
        assert verdict.max_depth == 0

    def test_commute_is_symmetric(self, load, config):
        """Swapping the operands does not change the outcome."""
        from fractalsym.analyzer import commute

        for name in ("swap_update", "swap_update_cell"):
            p = load(name)
            s1, s2 = _stmts(p, "S1", "S2")
            forward = commute(s1, s2, p.bindings(), {"A"}, p, config)
            backward = commute(s2, s1, p.bindings(), {"A"}, p, config)
            assert forward.outcome == backward.outcome

    def test_single_update_does_not_commute(self, load, config):
        """An update of the swapped element is not proven to commute."""
        from fractalsym.analyzer import UNKNOWN, commute

        swap_update_cell = load("swap_update_cell")
        s1, s2 = _stmts(swap_update_cell, "S1", "S2")
        verdict = commute(s2, s1, swap_update_cell.bindings(), {"A"}, swap_update_cell, config)
        assert verdict.outcome == UNKNOWN
        assert verdict.failure is not None
        assert verdict.failure.rule == "COMPARE"

    def test_budget_exhausted(self, load, config):
        """Forcing simplification with no depth budget gives Unknown."""
        from fractalsym.analyzer import UNKNOWN, commute

        swap_update = load("swap_update")
        s1, s2 = _stmts(swap_update, "S1", "S2")
        tight = replace(config, max_depth=0, fast_path=False, force_simplify=2)
        verdict = commute(s1, s2, swap_update.bindings(), {"A"}, swap_update, tight)
        assert verdict.outcome == UNKNOWN
        assert verdict.failure.rule == "BUDGET"

    def test_forced_simplification_loses_precision(self, load, config):
        """Splitting the swap into single assignments fails where comparing it whole succeeds."""
        from fractalsym.analyzer import UNKNOWN, commute

        swap_update = load("swap_update")
        s1, s2 = _stmts(swap_update, "S1", "S2")
        forced = replace(config, fast_path=False, force_simplify=1)
        verdict = commute(s1, s2, swap_update.bindings(), {"A"}, swap_update, forced)
        assert verdict.outcome == UNKNOWN
        assert verdict.trace[0].rule == "SEQ"
        assert verdict.max_depth == 1

    def test_trace_lines(self, load, config):
        """Every trace line has the documented shape."""
        from fractalsym.analyzer import commute

        swap_update = load("swap_update")
        s1, s2 = _stmts(swap_update, "S1", "S2")
        forced = replace(config, fast_path=False, force_simplify=1)
        lines = commute(s1, s2, swap_update.bindings(), {"A"}, swap_update, forced).lines()
        assert lines
        for line in lines:
            assert TRACE_LINE.match(line), line
        assert lines[0].startswith("[depth 0] SEQ(")
        assert lines[1].startswith("  [depth 1] ")


class TestCheckTransformation:
    """Tests for check_transformation."""

    def test_distribution_needs_pivot_fact(self, swap_scale, config, pivot_fact):
        """Distributing the swap and the scaling is proven only when p(j) >= j."""
        from fractalsym.analyzer import LEGAL, UNKNOWN, check_transformation
        from fractalsym.transforms import parse_transform

        t = parse_transform("distribute(j;S1|S2)")
        assert check_transformation(swap_scale, t, pivot_fact, config).outcome == LEGAL
        assert check_transformation(swap_scale, t, None, config).outcome == UNKNOWN

    def test_verdict_dict(self, swap_scale, config, pivot_fact):
        """The report carries each obligation with its own verdict."""
        from fractalsym.analyzer import check_transformation
        from fractalsym.transforms import parse_transform

        out = check_transformation(swap_scale, parse_transform("distribute(j;S1|S2)"), pivot_fact, config).to_dict()
        assert out["outcome"] == "Legal"
        assert len(out["obligations"]) == 1
        ob = out["obligations"][0]
        assert ob["provenance"] == "distribute(j;S1|S2)"
        assert ob["verdict"]["outcome"] == "Legal"
        assert "failure" not in out

    def test_failure_reported(self, swap_scale, config):
        """An Unknown verdict names the first failing step."""
        from fractalsym.analyzer import check_transformation
        from fractalsym.transforms import parse_transform

        out = check_transformation(swap_scale, parse_transform("distribute(j;S1|S2)"), None, config).to_dict()
        assert out["outcome"] == "Unknown"
        assert out["failure"].startswith("[depth ")

    def test_order_preserving_is_trivially_legal(self, load, config):
        """Transformations without obligations are legal."""
        from fractalsym.analyzer import check_transformation
        from fractalsym.transforms import parse_transform

        verdict = check_transformation(load("lu"), parse_transform("stripmine(J,B)"), None, config)
        assert verdict.legal
        assert verdict.obligations == []

    def test_update_interchange_by_fast_path(self, load, config):
        """Interchanging the update nest is settled by footprints."""
        from fractalsym.analyzer import check_transformation
        from fractalsym.transforms import parse_transform

        verdict = check_transformation(load("lu"), parse_transform("interchange(U,U/i)"), None, config)
        assert verdict.legal
        assert verdict.max_depth == 0

    def test_atom_budget_applies(self, swap_scale, pivot_fact, caplog):
        """A tiny elimination budget blocks the proof and is restored afterwards."""
        from fractalsym.analyzer import UNKNOWN, check_transformation
        from fractalsym.config import AnalysisConfig, analysis_config
        from fractalsym.transforms import parse_transform

        before = analysis_config.atom_budget
        t = parse_transform("distribute(j;S1|S2)")
        with caplog.at_level("WARNING", logger="fractalsym.omega"):
            verdict = check_transformation(swap_scale, t, pivot_fact, AnalysisConfig(atom_budget=1))
        assert verdict.outcome == UNKNOWN
        assert "elimination too large" in caplog.text
        assert analysis_config.atom_budget == before

    @pytest.mark.slow
    def test_blocked_lu_distribution(self, lu_blocked, config):
        """Distributing the panel factorization from the trailing update is legal."""
        from fractalsym.analyzer import check_transformation
        from fractalsym.transforms import parse_transform

        verdict = check_transformation(lu_blocked, parse_transform("distribute(J;B1|B2)"), None, config)
        assert verdict.legal
        assert verdict.max_depth == 1

    @pytest.mark.slow
    def test_parallel_obligations_agree(self, load, config):
        """Checking obligations on a worker pool gives the serial verdict."""
        from fractalsym.analyzer import check_transformation
        from fractalsym.transforms import parse_transform

        scale_sum = load("scale_sum")
        t = parse_transform("reorder(S1,S3)")
        serial = check_transformation(scale_sum, t, None, config)
        pooled = check_transformation(scale_sum, t, None, replace(config, max_workers=3))
        assert serial.outcome == pooled.outcome
        assert len(pooled.obligations) == 3
