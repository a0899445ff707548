"""Tests for the loop-language parser and printer."""

import pytest


class TestParseProgram:
    """Tests for parse_program."""

    def test_declarations(self, swap_scale):
        """Parameters, arrays and outputs are recorded."""
        assert swap_scale.name == "swap_scale"
        assert swap_scale.params == ("N",)
        assert [a.name for a in swap_scale.arrays] == ["A", "p", "tmp"]
        assert swap_scale.decl("p").kind == "int"
        assert swap_scale.decl("tmp").rank == 0
        assert swap_scale.outputs == ("A",)

    def test_int_array_index_is_opaque(self, swap_scale):
        """p(j) inside an index becomes an opaque term, not a read."""
        from fractalsym.affine import Opaque
        from fractalsym.lang import Assign, iter_stmts

        writes = [s for s in iter_stmts(swap_scale.body) if isinstance(s, Assign) and s.lhs.name == "A"]
        opaque = [s for s in writes if any(isinstance(sym, Opaque) for sym in s.lhs.indices[0].symbols())]
        assert len(writes) == 3
        assert len(opaque) == 1
        assert {sym.fn for sym in opaque[0].lhs.indices[0].symbols() if isinstance(sym, Opaque)} == {"p"}
        assert opaque[0] is writes[1]

    def test_value_condition(self, load):
        """A comparison of real values parses as a ValueCond."""
        from fractalsym.lang import If, ValueCond, iter_stmts

        lu = load("lu")
        ifs = [s for s in iter_stmts(lu.body) if isinstance(s, If)]
        assert len(ifs) == 1
        assert isinstance(ifs[0].cond, ValueCond)
        assert ifs[0].cond.op == ">"

    def test_min_upper_bound(self, lu_blocked):
        """min(...) in an upper bound keeps every argument."""
        from fractalsym.transforms import find_loop

        loop = find_loop(lu_blocked, "J")
        assert len(loop.upper) == 2
        assert find_loop(lu_blocked, "jB").step == "B"

    def test_labels_with_dots(self, lu_blocked):
        """Dotted labels address nested statements."""
        from fractalsym.transforms import find_stmt

        assert find_stmt(lu_blocked, "B1.c").label == "B1.c"

    def test_syntax_error_has_position(self):
        """Malformed text raises ParseError with a line number."""
        from fractalsym.errors import ParseError
        from fractalsym.syntax import parse_program

        with pytest.raises(ParseError) as exc:
            parse_program("program bad(N) {\n  array A[1..N]: real;\n  A(1) = ;\n}")
        assert exc.value.line == 3

    def test_duplicate_declaration(self):
        """Declaring a name twice is rejected."""
        from fractalsym.errors import ParseError
        from fractalsym.syntax import parse_program

        with pytest.raises(ParseError, match="duplicate declaration"):
            parse_program("program d(N) { scalar x; scalar x; x = 1; }")

    def test_forall_only_in_assume(self):
        """Quantifiers are rejected in statement conditions."""
        from fractalsym.errors import ParseError
        from fractalsym.syntax import parse_program

        with pytest.raises(ParseError):
            parse_program("program q(N) { scalar x; if (forall j in [1, N]: j > 0) { x = 1; } }")


class TestParseFormula:
    """Tests for parse_formula and parse_affine."""

    def test_chain_is_conjunction(self):
        """a <= b < c means a <= b and b < c."""
        from fractalsym.affine import And, Cmp
        from fractalsym.syntax import parse_formula

        f = parse_formula("1 <= m < l")
        assert isinstance(f, And)
        assert [a.op for a in f.args if isinstance(a, Cmp)] == ["<=", "<"]

    def test_forall(self):
        """A quantified fact keeps its range."""
        from fractalsym.affine import Forall
        from fractalsym.syntax import parse_formula

        f = parse_formula("forall j in [1, N]: j <= p(j) <= N")
        assert isinstance(f, Forall)
        assert f.var == "j"

    def test_affine_collects_terms(self):
        """Like terms combine."""
        from fractalsym.syntax import parse_affine

        e = parse_affine("jB + B - 1 + jB")
        assert e.coeff("jB") == 2
        assert e.coeff("B") == 1
        assert e.const == -1

    def test_product_of_symbols_is_rejected(self):
        """i * j is not affine."""
        from fractalsym.errors import ParseError
        from fractalsym.syntax import parse_affine

        with pytest.raises(ParseError):
            parse_affine("i * j")

    def test_formula_printing_reparses(self):
        """format_formula output parses back to an equivalent formula."""
        from fractalsym.affine import format_formula
        from fractalsym.omega import implies
        from fractalsym.syntax import parse_formula

        f = parse_formula("1 <= k and (k = l or k mod 2 = 1) and not k > N")
        g = parse_formula(format_formula(f))
        assert implies(f, g) and implies(g, f)


class TestPrintProgram:
    """Tests for print_program."""

    @pytest.mark.parametrize(
        "name",
        [
            "scale_sum",
            "swap_scale",
            "swap_scale_distributed",
            "swap_update",
            "swap_update_cell",
            "swap",
            "lu",
            "lu_blocked",
            "panel_update_swap",
        ],
    )
    def test_print_is_a_fixed_point(self, load, name):
        """Printing, parsing and printing again gives the same text."""
        from fractalsym.syntax import parse_program, print_program

        text = print_program(load(name))
        assert print_program(parse_program(text)) == text

    def test_labels_survive(self, lu_blocked):
        """Labels are printed."""
        from fractalsym.syntax import print_program

        text = print_program(lu_blocked)
        for label in ("B1:", "B1.a:", "B1.c:", "B2:"):
            assert label in text


class TestWellFormedness:
    """Tests for the structural checks on parsed programs."""

    def test_duplicate_label(self):
        """Labels must be unique within a program."""
        from fractalsym.lang import check_well_formed
        from fractalsym.syntax import parse_program

        p = parse_program("program d() {\n  scalar a, b;\n  S1: a = 1;\n  S1: b = 2;\n}\n")
        assert "duplicate label 'S1'" in check_well_formed(p)

    def test_division_name_reserved(self):
        """div names the integer quotient of strided writes and cannot be declared."""
        from fractalsym.lang import check_well_formed
        from fractalsym.syntax import parse_program

        p = parse_program("program r() {\n  scalar div;\n  div = 1;\n}\n")
        assert "'div' is reserved for integer division" in check_well_formed(p)

    def test_altered_vars(self, swap_scale):
        """The swap alters the array and the temporary, the scaling only the array."""
        from fractalsym.lang import altered_vars
        from fractalsym.transforms import find_stmt

        assert altered_vars(find_stmt(swap_scale, "S1")) == {"A", "tmp"}
        assert altered_vars(find_stmt(swap_scale, "S2")) == {"A"}
        assert altered_vars(swap_scale.body) == {"A", "tmp"}
