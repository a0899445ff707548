"""
Concrete syntax of the loop language.

    program lu(N) {
      assume N >= 1;
      assume forall j in [1, N]: j <= p(j) and p(j) <= N;
      array A[1..N][1..N]: real inout;
      array p[1..N]: int inout;
      scalar tmp;
      outputs {A, p};
      for j = 1 to N {
        B1: { p(j) = j; ... }
      }
    }

Parsing is two-phase: lark builds a declaration-agnostic tree, then
elaboration resolves names against the declarations (p(j) is an opaque index
term when p is an int array, a read when used as a value).
"""

from __future__ import annotations

import logging
from dataclasses import replace
from fractions import Fraction
from typing import NoReturn

from lark import Lark, Transformer, v_args
from lark.exceptions import LarkError, UnexpectedInput, VisitError

from .affine import (
    FALSE,
    TRUE,
    AffineExpr,
    Cmp,
    Exists,
    Forall,
    Formula,
    Mod,
    Opaque,
    conj,
    disj,
    neg,
)
from .errors import ParseError
from .lang import (
    Apply,
    ArrayDecl,
    Assign,
    Condition,
    Const,
    For,
    If,
    Index,
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
    check_well_formed,
    mark_private,
)

logger = logging.getLogger("fractalsym.syntax")

GRAMMAR = r"""
program: "program" NAME "(" [names] ")" "{" decl* stmt* "}"
names: NAME ("," NAME)*

?decl: "assume" bexpr ";"                              -> assume
     | "array" NAME dim+ ":" KIND [ROLE] ";"           -> array
     | "scalar" names [":" KIND] ";"                   -> scalar
     | "function" names ";"                            -> function
     | "outputs" "{" [names] "}" [";"]                 -> outputs
dim: "[" sum ".." sum "]"

?stmt: LABEL ":" stmt                                  -> labeled
     | "for" NAME "=" sum "to" sum ["step" step] block -> for_stmt
     | "if" "(" bexpr ")" block ["else" block]         -> if_stmt
     | NAME ["(" args ")"] "=" sum ";"                 -> assign
     | block
block: "{" stmt* "}"
?step: SIGNED_INT                                      -> int_step
     | NAME                                            -> name_step

?bexpr: bor
      | "exists" names ":" bexpr                       -> exists
      | "forall" NAME "in" "[" sum "," sum "]" ":" bexpr -> forall
?bor: band
    | bor "or" band                                    -> or_
?band: bnot
     | band "and" bnot                                 -> and_
?bnot: "not" bnot                                      -> not_
     | bcmp
?bcmp: sum
     | sum (COMPOP sum)+                               -> chain
     | sum "mod" INT "=" INT                           -> modatom

?sum: product
    | sum "+" product                                  -> add
    | sum "-" product                                  -> sub
?product: unary
        | product "*" unary                            -> mul
        | product "/" unary                            -> div
?unary: "-" unary                                      -> neg
      | atom
?atom: INT                                             -> int
     | DECIMAL                                         -> decimal
     | "true"                                          -> true
     | "false"                                         -> false
     | NAME "(" [args] ")"                             -> call
     | NAME                                            -> name
     | "(" bexpr ")"
args: bexpr ("," bexpr)*

KIND: "real" | "int"
ROLE: "inout" | "in" | "out"
COMPOP: "<=" | ">=" | "!=" | "<" | ">" | "="
LABEL.2: /[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z0-9_]+)*(?=\s*:(?!=))/
NAME: /(?!(program|assume|array|scalar|function|outputs|for|to|step|if|else|exists|forall|in|and|or|not|mod|true|false|real|int|inout|out)\b)[A-Za-z_][A-Za-z0-9_]*/
DECIMAL: /\d+\.\d+/

%import common.INT
%import common.SIGNED_INT
%import common.WS
%ignore WS
%ignore /\/\/[^\n]*/
"""

_parser = Lark(
    GRAMMAR,
    parser="lalr",
    start=["program", "bexpr", "sum"],
    propagate_positions=True,
)


class _NotAffine(Exception):
    pass


@v_args(inline=True)
class _TreeBuilder(Transformer):
    """lark tree to declaration-agnostic tuples"""

    def names(self, *items):
        return [str(t) for t in items]

    def args(self, *items):
        return list(items)

    def int(self, tok):
        return ("int", int(tok))

    def decimal(self, tok):
        return ("num", Fraction(str(tok)))

    def true(self):
        return ("bool", True)

    def false(self):
        return ("bool", False)

    def name(self, tok):
        return ("name", str(tok))

    def call(self, tok, args=None):
        return ("call", str(tok), args or [])

    def add(self, a, b):
        return ("+", a, b)

    def sub(self, a, b):
        return ("-", a, b)

    def mul(self, a, b):
        return ("*", a, b)

    def div(self, a, b):
        return ("/", a, b)

    def neg(self, a):
        return ("neg", a)

    def chain(self, *items):
        return ("chain", [items[0]] + [x if i % 2 else str(x) for i, x in enumerate(items[1:])])

    def modatom(self, e, m, r):
        return ("mod", e, int(m), int(r))

    def and_(self, a, b):
        return ("and", a, b)

    def or_(self, a, b):
        return ("or", a, b)

    def not_(self, a):
        return ("not", a)

    def exists(self, names, body):
        return ("exists", names, body)

    def forall(self, var, lo, hi, body):
        return ("forall", str(var), lo, hi, body)

    # declarations and statements

    def dim(self, lo, hi):
        return (lo, hi)

    def assume(self, f):
        return ("decl_assume", f)

    def array(self, name, *rest):
        dims = [r for r in rest if isinstance(r, tuple)]
        kind = next(str(r) for r in rest if getattr(r, "type", None) == "KIND")
        role = next((str(r) for r in rest if getattr(r, "type", None) == "ROLE"), "inout")
        return ("decl_array", str(name), dims, kind, role)

    def scalar(self, names, kind=None):
        return ("decl_scalar", names, str(kind) if kind is not None else "real")

    def function(self, names):
        return ("decl_function", names)

    def outputs(self, *items):
        names = next((i for i in items if isinstance(i, list)), [])
        return ("decl_outputs", names)

    def block(self, *stmts):
        return ("block", list(stmts))

    def labeled(self, label, stmt):
        return ("labeled", str(label), stmt)

    def int_step(self, tok):
        return int(tok)

    def name_step(self, tok):
        return str(tok)

    def for_stmt(self, var, lo, hi, step, body):
        return ("for", str(var), lo, hi, 1 if step is None else step, body)

    def if_stmt(self, cond, then, orelse=None):
        return ("if", cond, then, orelse)

    def assign(self, name, args, rhs):
        return ("assign", str(name), args, rhs)

    def program(self, name, params, *items):
        return ("program", str(name), params or [], list(items))


# ---------------------------------------------------------------------------
# Elaboration
# ---------------------------------------------------------------------------


class _Elaborator:
    """Resolve names against declarations and build AST nodes"""

    def __init__(
        self,
        params: set[str] | None = None,
        arrays: dict[str, ArrayDecl] | None = None,
        functions: set[str] | None = None,
    ):
        self.params = params or set()
        self.arrays = arrays or {}
        self.functions = functions or set()

    # -- affine

    def affine(self, node, scope: frozenset[str] = frozenset()) -> AffineExpr:
        tag = node[0]
        if tag == "int":
            return AffineExpr.constant(node[1])
        if tag == "name":
            decl = self.arrays.get(node[1])
            if decl is not None and decl.kind == "real":
                raise _NotAffine(node[1])
            if decl is not None and decl.rank == 0:
                raise _NotAffine(node[1])
            return AffineExpr.var(node[1])
        if tag == "call":
            fn, args = node[1], node[2]
            if fn in ("min", "max") or fn in self.functions or fn == "abs":
                raise _NotAffine(fn)
            decl = self.arrays.get(fn)
            if decl is not None and decl.kind != "int":
                raise _NotAffine(fn)
            return AffineExpr.var(Opaque(fn, tuple(self.affine(a, scope) for a in args)))
        if tag == "+":
            return self.affine(node[1], scope) + self.affine(node[2], scope)
        if tag == "-":
            return self.affine(node[1], scope) - self.affine(node[2], scope)
        if tag == "neg":
            return -self.affine(node[1], scope)
        if tag == "*":
            a, b = self.affine(node[1], scope), self.affine(node[2], scope)
            if a.is_constant:
                return b * a.const
            if b.is_constant:
                return a * b.const
            raise _NotAffine("product")
        raise _NotAffine(tag)

    def bounds(self, node, ascending: bool, which: str) -> tuple[AffineExpr, ...]:
        combine = "max" if (which == "start") == ascending else "min"
        if node[0] == "call" and node[1] in ("min", "max"):
            if node[1] != combine:
                raise ParseError(f"loop {which} must use {combine}(...), not {node[1]}(...)")
            out: list[AffineExpr] = []
            for a in node[2]:
                out.extend(self.bounds(a, ascending, which))
            return tuple(out)
        try:
            return (self.affine(node),)
        except _NotAffine as e:
            raise ParseError(f"non-affine loop {which}: {e}") from None

    # -- formulas

    def formula(self, node, scope: frozenset[str] = frozenset(), allow_forall: bool = True) -> Formula:
        tag = node[0]
        if tag == "bool":
            return TRUE if node[1] else FALSE
        if tag == "chain":
            items = node[1]
            parts: list[Formula] = []
            for i in range(1, len(items), 2):
                lhs = self.affine(items[i - 1], scope)
                rhs = self.affine(items[i + 1], scope)
                parts.append(Cmp(items[i], lhs, rhs))
            return conj(*parts)
        if tag == "mod":
            if node[2] <= 0:
                raise ParseError(f"modulus must be positive, got {node[2]}")
            return Mod(self.affine(node[1], scope), node[2], node[3] % node[2])
        if tag == "and":
            return conj(self.formula(node[1], scope, allow_forall), self.formula(node[2], scope, allow_forall))
        if tag == "or":
            return disj(self.formula(node[1], scope, allow_forall), self.formula(node[2], scope, allow_forall))
        if tag == "not":
            return neg(self.formula(node[1], scope, allow_forall))
        if tag == "exists":
            names = tuple(node[1])
            return Exists(names, self.formula(node[2], scope | set(names), allow_forall))
        if tag == "forall":
            if not allow_forall:
                raise ParseError("forall is only allowed in assume clauses")
            var = node[1]
            return Forall(
                var,
                self.affine(node[2], scope),
                self.affine(node[3], scope),
                self.formula(node[4], scope | {var}, allow_forall),
            )
        raise ParseError(f"expected a condition, found an expression ({tag})")

    def condition(self, node, scope: frozenset[str]) -> Condition:
        try:
            return self.formula(node, scope, allow_forall=False)
        except _NotAffine:
            pass
        if node[0] == "chain" and len(node[1]) == 3:
            lhs, op, rhs = node[1]
            return ValueCond(op, self.value(lhs, scope), self.value(rhs, scope))
        raise ParseError("value comparisons cannot be combined with and/or/not")

    # -- values

    def _index_value(self, node, scope: frozenset[str]) -> bool:
        """Integer affine over loop variables and parameters, mentioning at least one"""
        tag = node[0]
        if tag == "name":
            return node[1] in scope or node[1] in self.params
        if tag in ("+", "-"):
            left, right = node[1], node[2]
            ok_l = self._index_value(left, scope) or left[0] == "int"
            ok_r = self._index_value(right, scope) or right[0] == "int"
            return ok_l and ok_r and (self._index_value(left, scope) or self._index_value(right, scope))
        if tag == "neg":
            return self._index_value(node[1], scope)
        if tag == "*":
            left, right = node[1], node[2]
            return (left[0] == "int" and self._index_value(right, scope)) or (
                right[0] == "int" and self._index_value(left, scope)
            )
        return False

    def index(self, node, scope: frozenset[str]) -> Index:
        try:
            return self.affine(node, scope)
        except _NotAffine:
            return NonAffineIndex(self.value(node, scope))

    def value(self, node, scope: frozenset[str]) -> ValExpr:
        if self._index_value(node, scope):
            return IndexValue(self.affine(node, scope))
        tag = node[0]
        if tag == "int":
            return Const(Fraction(node[1]))
        if tag == "num":
            return Const(node[1])
        if tag == "name":
            return Read(Ref(node[1]))
        if tag == "call":
            fn, args = node[1], node[2]
            if fn in self.arrays:
                return Read(Ref(fn, tuple(self.index(a, scope) for a in args)))
            return Apply(fn, tuple(self.value(a, scope) for a in args))
        if tag == "neg":
            inner = self.value(node[1], scope)
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Op("neg", (inner,))
        if tag in ("+", "-", "*", "/"):
            left, right = self.value(node[1], scope), self.value(node[2], scope)
            if tag == "/" and isinstance(left, Const) and isinstance(right, Const) and right.value != 0:
                return Const(left.value / right.value)
            return Op(tag, (left, right))
        raise ParseError(f"expected a value expression, found a condition ({tag})")

    # -- statements

    def stmt(self, node, scope: frozenset[str]) -> Stmt:
        tag = node[0]
        if tag == "labeled":
            inner = self.stmt(node[2], scope)
            if inner.label is not None:
                raise ParseError(f"statement labeled twice: {node[1]} and {inner.label}")
            return _with_label(inner, node[1])
        if tag == "block":
            return Seq(tuple(self.stmt(s, scope) for s in node[1]))
        if tag == "assign":
            name, args, rhs = node[1], node[2], node[3]
            indices = tuple(self.index(a, scope) for a in (args or []))
            return Assign(Ref(name, indices), self.value(rhs, scope))
        if tag == "for":
            var, lo, hi, step, body = node[1:]
            ascending = isinstance(step, str) or step > 0
            lower = self.bounds(lo, ascending, "start")
            upper = self.bounds(hi, ascending, "end")
            return For(var, lower, upper, self.stmt(body, scope | {var}), step)
        if tag == "if":
            cond = self.condition(node[1], scope)
            then = self.stmt(node[2], scope)
            orelse = None if node[3] is None else self.stmt(node[3], scope)
            return If(cond, then, orelse)
        raise ParseError(f"unexpected statement node {tag}")


def _with_label(s: Stmt, label: str) -> Stmt:
    return replace(s, label=label)


def _raise_parse_error(e: Exception, text: str) -> NoReturn:
    if isinstance(e, UnexpectedInput):
        line = getattr(e, "line", None)
        column = getattr(e, "column", None)
        context = e.get_context(text, span=30).strip().splitlines()[0] if line else ""
        raise ParseError(f"syntax error near '{context}'", line, column) from None
    if isinstance(e, VisitError):
        if isinstance(e.orig_exc, ParseError):
            raise e.orig_exc from None
        raise ParseError(str(e.orig_exc)) from None
    raise ParseError(str(e)) from None


def _elaborate_program(tree) -> Program:
    _, name, params, items = tree
    decls = [i for i in items if i[0].startswith("decl_")]
    stmts = [i for i in items if not i[0].startswith("decl_")]

    elab = _Elaborator(params=set(params))
    arrays: list[ArrayDecl] = []
    functions: list[str] = []
    outputs: list[str] = []
    assumes_raw = []
    for d in decls:
        if d[0] == "decl_array":
            _, aname, dims, kind, role = d
            bounds = tuple((elab.affine(lo), elab.affine(hi)) for lo, hi in dims)
            arrays.append(ArrayDecl(aname, bounds, kind, role))
        elif d[0] == "decl_scalar":
            for sname in d[1]:
                arrays.append(ArrayDecl(sname, (), d[2], "inout"))
        elif d[0] == "decl_function":
            functions.extend(d[1])
        elif d[0] == "decl_outputs":
            outputs.extend(d[1])
        else:
            assumes_raw.append(d[1])

    elab.arrays = {a.name: a for a in arrays}
    elab.functions = set(functions)
    assumes = tuple(elab.formula(f) for f in assumes_raw)
    body = Seq(tuple(elab.stmt(s, frozenset()) for s in stmts))
    return Program(
        name=name,
        params=tuple(params),
        assumes=assumes,
        arrays=tuple(arrays),
        functions=tuple(functions),
        body=body,
        outputs=tuple(outputs),
    )


def parse_program(text: str) -> Program:
    """Parse program text; raises ParseError on syntax, duplicate-declaration or arity errors"""
    try:
        tree = _TreeBuilder().transform(_parser.parse(text, start="program"))
    except (LarkError, VisitError) as e:
        _raise_parse_error(e, text)
    try:
        program = _elaborate_program(tree)
    except _NotAffine as e:
        raise ParseError(f"non-affine expression where an affine one is required: {e}") from None

    fatal = [
        d for d in check_well_formed(program)
        if d.startswith("duplicate declaration") or d.startswith("arity mismatch")
    ]
    if fatal:
        raise ParseError("; ".join(fatal))
    logger.debug(f"Parsed program {program.name} with {len(program.body.stmts)} top-level statements")
    return mark_private(program)


def parse_formula(text: str, program: Program | None = None) -> Formula:
    """Parse a formula in the surface syntax (assume clauses, --assume flags)"""
    try:
        tree = _TreeBuilder().transform(_parser.parse(text, start="bexpr"))
    except (LarkError, VisitError) as e:
        _raise_parse_error(e, text)
    elab = _elaborator_for(program)
    try:
        return elab.formula(tree)
    except _NotAffine as e:
        raise ParseError(f"non-affine term in formula: {e}") from None


def parse_affine(text: str, program: Program | None = None) -> AffineExpr:
    try:
        tree = _TreeBuilder().transform(_parser.parse(text, start="sum"))
    except (LarkError, VisitError) as e:
        _raise_parse_error(e, text)
    try:
        return _elaborator_for(program).affine(tree)
    except _NotAffine as e:
        raise ParseError(f"not an affine expression: {text!r} ({e})") from None


def _elaborator_for(program: Program | None) -> _Elaborator:
    if program is None:
        return _Elaborator()
    return _Elaborator(
        params=set(program.params),
        arrays={a.name: a for a in program.arrays},
        functions=set(program.functions),
    )


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

INDENT = "  "


def _bound_text(exprs: tuple[AffineExpr, ...], fn: str) -> str:
    if len(exprs) == 1:
        return str(exprs[0])
    return f"{fn}({', '.join(str(e) for e in exprs)})"


def _block_lines(s: Stmt, depth: int) -> list[str]:
    """Statements of a block body, one level deeper"""
    if isinstance(s, Seq) and s.label is None:
        lines: list[str] = []
        for c in s.stmts:
            lines.extend(_stmt_lines(c, depth))
        return lines
    return _stmt_lines(s, depth)


def _stmt_lines(s: Stmt, depth: int) -> list[str]:
    pad = INDENT * depth
    prefix = f"{s.label}: " if s.label else ""
    if isinstance(s, Assign):
        return [f"{pad}{prefix}{s.lhs} = {s.rhs};"]
    if isinstance(s, Seq):
        return [f"{pad}{prefix}{{", *_block_lines(Seq(s.stmts), depth + 1), f"{pad}}}"]
    if isinstance(s, For):
        start = _bound_text(s.lower, "max" if s.ascending else "min")
        end = _bound_text(s.upper, "min" if s.ascending else "max")
        step = "" if s.step == 1 else f" step {s.step}"
        return [
            f"{pad}{prefix}for {s.var} = {start} to {end}{step} {{",
            *_block_lines(s.body, depth + 1),
            f"{pad}}}",
        ]
    if isinstance(s, If):
        lines = [f"{pad}{prefix}if ({s.cond}) {{", *_block_lines(s.then, depth + 1)]
        if s.orelse is not None:
            lines += [f"{pad}}} else {{", *_block_lines(s.orelse, depth + 1)]
        return [*lines, f"{pad}}}"]
    raise TypeError(f"Unknown statement {type(s).__name__}")


def print_program(p: Program) -> str:
    """Render p in the surface syntax; parse_program inverts it"""
    lines = [f"program {p.name}({', '.join(p.params)}) {{"]
    for f in p.assumes:
        lines.append(f"{INDENT}assume {f};")
    for a in p.arrays:
        if a.rank == 0:
            kind = "" if a.kind == "real" else f": {a.kind}"
            lines.append(f"{INDENT}scalar {a.name}{kind};")
        else:
            dims = "".join(f"[{lo}..{hi}]" for lo, hi in a.bounds)
            lines.append(f"{INDENT}array {a.name}{dims}: {a.kind} {a.role};")
    if p.functions:
        lines.append(f"{INDENT}function {', '.join(p.functions)};")
    lines.append(f"{INDENT}outputs {{{', '.join(p.outputs)}}};")
    lines.extend(_block_lines(p.body, 1))
    lines.append("}")
    return "\n".join(lines) + "\n"
