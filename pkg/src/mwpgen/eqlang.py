"""Parsing and symbolic-graph construction for two-variable linear systems.

Accepted surface grammar (whitespace-insensitive, ASCII):

    system   = equation ";" equation
    equation = ["-"] term op term "=" rhs
             | term "=" rhs                      (single-term extension, e.g. "x=2y")
    term     = [number] var
    rhs      = number [("+" | "-") number] | [number] var
    op       = "+" | "-" | "*" | "/"
    var      = "x" | "y"
    number   = digits ["." digits]

At most one minus may appear on the left-hand side, and all stated
quantities must be positive. Quantities are carried as exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .graph import LabeledGraph

REL_MUL = "Mul"
REL_DIV = "Div"
REL_ADD_RES = "Add to res"
REL_MINUEND = "Minuend to res"
REL_SUBTRAHEND = "Subtrahend to res"
REL_ADD_DUMMY = "Add to dummy"
REL_SUB_DUMMY = "Sub to dummy"

RELATION_VOCABULARY = (
    REL_MUL,
    REL_DIV,
    REL_ADD_RES,
    REL_MINUEND,
    REL_SUBTRAHEND,
    REL_ADD_DUMMY,
    REL_SUB_DUMMY,
)

# slot tokens by equation index: (coeff0, coeff1, rhs, rhs2)
SLOT_TOKENS = (("<a>", "<b>", "<m>", "<m2>"), ("<c>", "<d>", "<n>", "<n2>"))


class EquationSyntaxError(ValueError):
    """Token outside the grammar; carries the 1-based column."""

    def __init__(self, message, column):
        super().__init__(f"{message} (column {column})")
        self.column = column


class ConstraintViolation(ValueError):
    """Violation of the sign/positivity constraints on the left-hand side."""


class SingularSystem(ValueError):
    """Zero determinant: the system has no unique solution."""


class NotLinearError(ValueError):
    """The surface form does not normalize to a linear equation."""


@dataclass(frozen=True)
class EquationAst:
    lead_sign: str = "+"
    coeff0: Optional[Fraction] = None  # None means implicit 1
    var0: str = "x"
    op: Optional[str] = None  # operator between the two terms
    coeff1: Optional[Fraction] = None
    var1: Optional[str] = None
    rhs_value: Optional[Fraction] = None
    rhs_op: Optional[str] = None
    rhs_value2: Optional[Fraction] = None
    rhs_coeff: Optional[Fraction] = None  # single-term extension right side
    rhs_var: Optional[str] = None

    @property
    def composite_rhs(self):
        return self.rhs_op is not None


@dataclass
class Solution:
    x: Fraction
    y: Fraction

    @property
    def positive_integers(self):
        return (
            self.x > 0
            and self.y > 0
            and self.x.denominator == 1
            and self.y.denominator == 1
        )


@dataclass
class LinearSystem:
    eq1: EquationAst
    eq2: EquationAst
    text: str = ""
    solution: Optional[Solution] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# tokenizer / parser


def _tokenize(text):
    tokens = []  # (kind, value, column)
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        col = i + 1
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == ".":
                j += 1
                if j >= n or not text[j].isdigit():
                    raise EquationSyntaxError("digits expected after decimal point", j)
                while j < n and text[j].isdigit():
                    j += 1
            tokens.append(("NUM", _number(text[i:j]), col))
            i = j
        elif ch in "xy":
            tokens.append(("VAR", ch, col))
            i += 1
        elif ch in "+-*/":
            tokens.append(("OP", ch, col))
            i += 1
        elif ch == "=":
            tokens.append(("EQ", "=", col))
            i += 1
        else:
            raise EquationSyntaxError(f"unexpected character {ch!r}", col)
    tokens.append(("END", "", n + 1))
    return tokens


def _number(literal):
    if "." in literal:
        whole, frac = literal.split(".")
        return Fraction(int(whole + frac), 10 ** len(frac))
    return Fraction(int(literal))


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind):
        tok = self.tokens[self.pos]
        if tok[0] != kind:
            raise EquationSyntaxError(f"expected {kind}, found {tok[1]!r}", tok[2])
        self.pos += 1
        return tok

    def parse(self):
        lead_sign = "+"
        if self.peek()[0] == "OP" and self.peek()[1] in "+-":
            lead_sign = self.take("OP")[1]
        coeff0, var0 = self._term()
        op = coeff1 = var1 = None
        if self.peek()[0] == "OP":
            op = self.take("OP")[1]
            coeff1, var1 = self._term()
        self.take("EQ")
        ast = self._rhs(lead_sign, coeff0, var0, op, coeff1, var1)
        self.take("END")
        _validate(ast)
        return ast

    def _term(self):
        coeff = None
        if self.peek()[0] == "NUM":
            coeff = self.take("NUM")[1]
        var = self.take("VAR")[1]
        return coeff, var

    def _rhs(self, lead_sign, coeff0, var0, op, coeff1, var1):
        base = dict(
            lead_sign=lead_sign, coeff0=coeff0, var0=var0, op=op, coeff1=coeff1, var1=var1
        )
        tok = self.peek()
        if tok[0] == "VAR" or (tok[0] == "NUM" and self.tokens[self.pos + 1][0] == "VAR"):
            rhs_coeff, rhs_var = self._term()
            return EquationAst(rhs_coeff=rhs_coeff, rhs_var=rhs_var, **base)
        value = self.take("NUM")[1]
        if self.peek()[0] == "OP":
            rhs_op = self.take("OP")[1]
            if rhs_op not in "+-":
                raise EquationSyntaxError(
                    "only + or - is supported on the right-hand side", self.tokens[self.pos - 1][2]
                )
            value2 = self.take("NUM")[1]
            return EquationAst(rhs_value=value, rhs_op=rhs_op, rhs_value2=value2, **base)
        return EquationAst(rhs_value=value, **base)


def _validate(ast):
    minus_count = (ast.lead_sign == "-") + (ast.op == "-")
    if minus_count > 1:
        raise ConstraintViolation(
            "at most one minus operator may appear on the left-hand side"
        )
    for q in (ast.coeff0, ast.coeff1, ast.rhs_value, ast.rhs_value2, ast.rhs_coeff):
        if q is not None and q <= 0:
            raise ConstraintViolation(f"quantities must be positive, got {q}")
    if ast.op is None and ast.rhs_var is None:
        raise ConstraintViolation("single-term left side requires a variable right side")
    if ast.rhs_var is not None and ast.rhs_var == ast.var0:
        raise ConstraintViolation("right-side variable must differ from the left-side variable")


def parse_equation(text):
    """Parse one equation string into its AST."""
    return _Parser(text).parse()


def parse_system(text):
    """Parse a ';'-separated pair of equations."""
    parts = [p for p in text.split(";") if p.strip()]
    if len(parts) != 2:
        raise EquationSyntaxError(
            f"expected two ';'-separated equations, found {len(parts)}", 1
        )
    return LinearSystem(parse_equation(parts[0]), parse_equation(parts[1]), text=text.strip())


def reserialize(ast):
    """Canonical string form of an AST (implicit 1 coefficients omitted)."""

    def num(q):
        if q.denominator == 1:
            return str(q.numerator)
        f = float(q)
        s = repr(f)
        return s

    out = []
    if ast.lead_sign == "-":
        out.append("-")
    if ast.coeff0 is not None:
        out.append(num(ast.coeff0))
    out.append(ast.var0)
    if ast.op is not None:
        out.append(ast.op)
        if ast.coeff1 is not None:
            out.append(num(ast.coeff1))
        out.append(ast.var1)
    out.append("=")
    if ast.rhs_var is not None:
        if ast.rhs_coeff is not None:
            out.append(num(ast.rhs_coeff))
        out.append(ast.rhs_var)
    else:
        out.append(num(ast.rhs_value))
        if ast.rhs_op is not None:
            out.append(ast.rhs_op)
            out.append(num(ast.rhs_value2))
    return "".join(out)


# ---------------------------------------------------------------------------
# solving


def normalize_equation(ast):
    """Coefficients (alpha, beta, gamma) with alpha*x + beta*y = gamma."""
    if ast.op in ("*", "/"):
        raise NotLinearError(f"operator {ast.op!r} between terms is not linear")
    coeffs = {"x": Fraction(0), "y": Fraction(0)}
    c0 = ast.coeff0 if ast.coeff0 is not None else Fraction(1)
    coeffs[ast.var0] += -c0 if ast.lead_sign == "-" else c0
    if ast.op is not None:
        c1 = ast.coeff1 if ast.coeff1 is not None else Fraction(1)
        coeffs[ast.var1] += -c1 if ast.op == "-" else c1
    if ast.rhs_var is not None:
        rc = ast.rhs_coeff if ast.rhs_coeff is not None else Fraction(1)
        coeffs[ast.rhs_var] -= rc
        gamma = Fraction(0)
    else:
        gamma = ast.rhs_value
        if ast.rhs_op == "+":
            gamma = gamma + ast.rhs_value2
        elif ast.rhs_op == "-":
            gamma = gamma - ast.rhs_value2
    return coeffs["x"], coeffs["y"], gamma


def solve_system(system):
    """Exact rational solution by elimination; caches it on the system."""
    a1, b1, c1 = normalize_equation(system.eq1)
    a2, b2, c2 = normalize_equation(system.eq2)
    det = a1 * b2 - a2 * b1
    if det == 0:
        raise SingularSystem(f"zero determinant for system {system.text!r}")
    x = (c1 * b2 - c2 * b1) / det
    y = (a1 * c2 - a2 * c1) / det
    system.solution = Solution(x, y)
    return system.solution


def check_solution(system, solution):
    """Substitute back in exact arithmetic; True iff both equations hold."""
    for eq in (system.eq1, system.eq2):
        a, b, c = normalize_equation(eq)
        if a * solution.x + b * solution.y != c:
            return False
    return True


# ---------------------------------------------------------------------------
# symbolic graph construction


@dataclass
class SymbolicGraph:
    graph: LabeledGraph
    slot_values: dict  # slot token -> Fraction


def _normalized_for_graph(ast):
    """Fold the 'x=2y' extension into standard two-term form (phi2 = 0)."""
    if ast.rhs_var is None:
        return ast
    return EquationAst(
        lead_sign=ast.lead_sign,
        coeff0=ast.coeff0,
        var0=ast.var0,
        op="-",
        coeff1=ast.rhs_coeff,
        var1=ast.rhs_var,
        rhs_value=Fraction(0),
    )


def build_symbolic_graph(system):
    """Deterministic relation-labeled graph for a parsed system.

    Construction rules: one node per variable, per stated quantity slot and
    per equation result; coefficient->variable edges are labeled Mul (Div for
    a '/'-connected second term); term->result edges are "Add to res" for '+'
    and Minuend/Subtrahend for '-'; a composite right side routes through a
    dummy node that feeds the result node.
    """
    nodes = ["x", "y"]
    edges = []
    slot_values = {}

    for idx, raw in enumerate((system.eq1, system.eq2)):
        ast = _normalized_for_graph(raw)
        s_c0, s_c1, s_rhs, s_rhs2 = SLOT_TOKENS[idx]

        if ast.coeff0 is not None:
            nodes.append(s_c0)
            slot_values[s_c0] = ast.coeff0
            edges.append((s_c0, REL_MUL, ast.var0))
        if ast.coeff1 is not None:
            nodes.append(s_c1)
            slot_values[s_c1] = ast.coeff1
            rel = REL_DIV if ast.op == "/" else REL_MUL
            edges.append((s_c1, rel, ast.var1))

        if ast.composite_rhs:
            result = f"res{idx + 1}"
            dummy = f"dum{idx + 1}"
            nodes.append(s_rhs)
            slot_values[s_rhs] = ast.rhs_value
            nodes.append(s_rhs2)
            slot_values[s_rhs2] = ast.rhs_value2
            nodes.append(dummy)
            nodes.append(result)
            edges.append((s_rhs, REL_ADD_DUMMY, dummy))
            rel2 = REL_SUB_DUMMY if ast.rhs_op == "-" else REL_ADD_DUMMY
            edges.append((s_rhs2, rel2, dummy))
            edges.append((dummy, REL_ADD_RES, result))
        else:
            result = s_rhs
            nodes.append(s_rhs)
            slot_values[s_rhs] = ast.rhs_value

        if ast.lead_sign == "-":
            edges.append((ast.var0, REL_SUBTRAHEND, result))
            edges.append((ast.var1, REL_MINUEND, result))
        elif ast.op == "-":
            edges.append((ast.var0, REL_MINUEND, result))
            edges.append((ast.var1, REL_SUBTRAHEND, result))
        else:
            edges.append((ast.var0, REL_ADD_RES, result))
            if ast.var1 is not None:
                edges.append((ast.var1, REL_ADD_RES, result))

    return SymbolicGraph(LabeledGraph(nodes, edges), slot_values)
