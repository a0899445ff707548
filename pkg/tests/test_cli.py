"""Tests for the fsa command line."""

import json

import pytest

PIVOT = "forall j in [1, N]: j <= p(j) <= N"


def _run(capsys, *argv):
    from fractalsym.cli import run

    code = run(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestUsage:
    """Tests for argument handling and exit codes."""

    def test_unknown_command(self, capsys):
        """Unknown subcommands are usage errors."""
        code, _, err = _run(capsys, "bogus")
        assert code == 2
        assert err.startswith("fsa: ")

    def test_missing_required_flag(self, capsys):
        """check needs --transform."""
        code, _, _ = _run(capsys, "check", "swap_scale")
        assert code == 2

    def test_missing_program(self, capsys):
        """A name that is neither a file nor a corpus program is an input error."""
        code, _, err = _run(capsys, "parse", "no-such-program")
        assert code == 2
        assert "no such file or corpus program" in err

    def test_bad_transform(self, capsys):
        """Malformed transformation specs exit with 2."""
        code, _, err = _run(capsys, "check", "swap_scale", "--transform", "sideways(j)")
        assert code == 2
        assert "unknown transformation" in err

    def test_bad_config(self, capsys, tmp_path):
        """An invalid configuration value exits with 2."""
        config = tmp_path / "fsa.toml"
        config.write_text('[tool.fsa]\nmax_depth = "deep"\n')
        code, _, err = _run(capsys, "--config", str(config), "parse", "scale_sum")
        assert code == 2
        assert "max_depth" in err


class TestParseCommand:
    """Tests for fsa parse."""

    def test_corpus_name(self, capsys):
        """Corpus programs can be named directly."""
        code, out, _ = _run(capsys, "parse", "scale_sum")
        assert code == 0
        assert out.startswith("program scale_sum()")

    def test_file_path(self, capsys, tmp_path):
        """Program files are read from disk."""
        from fractalsym import corpus

        path = tmp_path / "prog.fsa"
        path.write_text(corpus.source("swap"))
        code, out, _ = _run(capsys, "parse", str(path))
        assert code == 0
        assert "program swap(N, l)" in out

    def test_syntax_error(self, capsys, tmp_path):
        """Syntax errors report the line and exit with 2."""
        path = tmp_path / "broken.fsa"
        path.write_text("program broken() {\n  scalar a;\n  a = ;\n}\n")
        code, _, err = _run(capsys, "parse", str(path))
        assert code == 2
        assert "line 3" in err


class TestCheckCommand:
    """Tests for fsa check."""

    def test_unknown_without_fact(self, capsys):
        """Without the pivot fact distribution is not proven."""
        code, out, _ = _run(capsys, "check", "swap_scale", "--transform", "distribute(j;S1|S2)")
        assert code == 1
        assert out.startswith("distribute(j;S1|S2): Unknown")

    def test_legal_with_fact(self, capsys):
        """--assume supplies the pivot fact."""
        code, out, _ = _run(capsys, "check", "swap_scale", "--transform", "distribute(j;S1|S2)", "--assume", PIVOT)
        assert code == 0
        assert "[depth 0]" in out

    def test_json_report(self, capsys):
        """--json prints one object with sorted keys and timings."""
        argv = ["check", "swap_scale", "--transform", "distribute(j;S1|S2)", "--assume", PIVOT, "--json"]
        code, out, _ = _run(capsys, *argv)
        assert code == 0
        report = json.loads(out)
        assert report["command"] == argv
        assert report["outcome"] == "Legal"
        assert "check_transformation" in report["timings"]
        assert list(report) == sorted(report)

    def test_budget_flags(self, capsys):
        """Flags override the analysis configuration."""
        argv = ["check", "swap_scale", "--transform", "distribute(j;S1|S2)", "--assume", PIVOT]
        code, out, _ = _run(capsys, *argv, "--no-fast-path", "--force-simplify", "1", "--max-depth", "0")
        assert code == 1
        assert "BUDGET" in out

    def test_over_simplified_trace(self, capsys):
        """Forcing two simplification levels loses the proof; trace and JSON both carry the witness."""
        argv = ["check", "swap_scale", "--transform", "distribute(j;S1|S2)", "--assume", PIVOT]
        argv += ["--force-simplify", "2"]
        code, out, _ = _run(capsys, *argv)
        assert code == 1
        lines = out.splitlines()
        assert lines[0] == "distribute(j;S1|S2): Unknown"
        assert lines[2].startswith("[depth 0] ")
        witnesses = [line.strip() for line in lines if ": where " in line]
        assert witnesses
        assert all(w.startswith("A: where ") for w in witnesses)

        code, out, _ = _run(capsys, *argv, "--json")
        assert code == 1

        def regions(step):
            for a in step.get("compare", {}).get("arrays", []):
                if "witness" in a:
                    yield a["witness"]["region"]
            for child in step.get("children", []):
                yield from regions(child)

        verdict = json.loads(out)["obligations"][0]["verdict"]
        found = [r for step in verdict["trace"] for r in regions(step)]
        assert len(found) == len(witnesses)
        for region in found:
            parts = region.split(" and ")
            assert len(parts) == len(set(parts))
            assert any(w.startswith(f"A: where {region}: ") for w in witnesses)

    def test_atom_budget_from_environment(self, capsys, caplog, monkeypatch):
        """FSA_ATOM_BUDGET reaches the solver."""
        monkeypatch.setenv("FSA_ATOM_BUDGET", "1")
        with caplog.at_level("WARNING"):
            code, out, _ = _run(capsys, "check", "swap_scale", "--transform", "distribute(j;S1|S2)", "--assume", PIVOT)
        assert code == 1
        assert out.startswith("distribute(j;S1|S2): Unknown")
        assert "elimination too large" in caplog.text

    def test_atom_budget_from_config_file(self, capsys, caplog, tmp_path):
        """--config files set the elimination budget too."""
        path = tmp_path / "fsa.toml"
        path.write_text("[tool.fsa]\natom_budget = 1\n")
        argv = ["check", "swap_scale", "--transform", "distribute(j;S1|S2)", "--assume", PIVOT]
        with caplog.at_level("WARNING"):
            code, _, _ = _run(capsys, "--config", str(path), *argv)
        assert code == 1
        assert "elimination too large" in caplog.text

    @pytest.mark.slow
    def test_verify(self, capsys):
        """--verify fuzzes the transformed program when the verdict is Legal."""
        argv = ["check", "swap_scale", "--transform", "distribute(j;S1|S2)", "--assume", PIVOT]
        code, out, _ = _run(capsys, *argv, "--verify", "--trials", "20", "--json")
        assert code == 0
        assert json.loads(out)["verify"]["outcome"] == "no-counterexample"


class TestOtherCommands:
    """Tests for apply, compare, gse, fuzz and deps."""

    def test_apply(self, capsys):
        """apply prints the rewritten program."""
        code, out, _ = _run(capsys, "apply", "scale_sum", "--transform", "reorder(S1,S3)")
        assert code == 0
        assert out.index("S3:") < out.index("S1:")

    def test_compare_equal(self, capsys):
        """The swap and the earlier update commute."""
        code, out, _ = _run(capsys, "compare", "swap_update", "update_swap")
        assert code == 0
        assert out.startswith("equal")

    def test_compare_not_proven(self, capsys):
        """Over-simplified orders differ and a witness is shown."""
        code, out, _ = _run(capsys, "compare", "swap_update_cell", "update_cell_swap")
        assert code == 1
        assert out.startswith("not proven")
        assert "where" in out

    def test_gse(self, capsys):
        """gse dumps one line per case."""
        code, out, _ = _run(capsys, "gse", "swap", "--array", "A")
        assert code == 0
        assert out.startswith("A(k): 3 case(s)")

    def test_gse_json(self, capsys):
        """gse --json lists the guarded cases."""
        code, out, _ = _run(capsys, "gse", "swap", "--array", "A", "--json")
        assert code == 0
        report = json.loads(out)
        assert report["index"] == ["k"]
        assert len(report["cases"]) == 3

    def test_gse_not_simple(self, capsys):
        """Programs outside the simple class are input errors."""
        code, _, _ = _run(capsys, "gse", "swap_scale", "--array", "A")
        assert code == 2

    def test_fuzz(self, capsys):
        """fuzz finds a cell where the orders differ."""
        code, out, _ = _run(capsys, "fuzz", "swap_update_cell", "update_cell_swap", "--seed", "1")
        assert code == 1
        assert out.startswith("counterexample: A(")

    def test_fuzz_agree(self, capsys):
        """fuzz reports agreement with the trial count."""
        code, out, _ = _run(capsys, "fuzz", "scale_sum", "scale_sum_reordered", "--trials", "10")
        assert code == 0
        assert out.strip() == "no counterexample in 10 trial(s)"

    def test_deps(self, capsys):
        """deps lists the dependences that block a transformation."""
        code, out, _ = _run(capsys, "deps", "swap_scale", "--transform", "distribute(j;S1|S2)")
        assert code == 1
        assert out.startswith("distribute(j;S1|S2): illegal")
        assert "dependence" in out

    def test_deps_blocked_witness(self, capsys):
        """deps prints the block origin with each blocked dependence."""
        code, out, _ = _run(capsys, "deps", "lu_blocked", "--transform", "distribute(J;B1|B2)")
        assert code == 1
        assert "jB=" in out
