"""Text form of expressions.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' integer)?
    atom   := number | 't' | 'y1'..'y9' | 'pi'
            | ('sin' | 'cos' | 'exp') '(' expr ')'
            | 'bump' '(' point ',' expr ')'
            | 'cutoff' '(' point ',' expr ',' expr ')'
            | 'J' [digits] '[' int ',' '(' int (',' int)* ')' ']'     (PDE context only)
            | '(' expr ')'
    point  := '(' expr (',' expr)* ')' | expr        (constant expressions)

Integer and ratio literals are kept exact (``Fraction``); decimals become floats.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction

from . import expr as E
from .errors import ParseError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),\[\]]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[start]!r}", pos=start)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, dim=None, allow_jets=False):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.dim = dim
        self.allow_jets = allow_jets

    @property
    def tok(self):
        return self.tokens[self.i]

    def fail(self, message, tok=None):
        tok = tok or self.tok
        raise ParseError(message, pos=tok[2])

    def accept(self, value):
        if self.tok[1] == value and self.tok[0] in ("op", "name"):
            self.i += 1
            return True
        return False

    def expect(self, value):
        if not self.accept(value):
            found = self.tok[1] or "end of input"
            self.fail(f"expected {value!r}, found {found!r}")

    def parse(self):
        e = self.expr()
        if self.tok[0] != "end":
            self.fail(f"unexpected {self.tok[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.tok[1]
            self.i += 1
            rhs = self.term()
            e = E.Add(e, rhs) if op == "+" else E.Sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self.tok[1]
            self.i += 1
            rhs = self.unary()
            if op == "*":
                e = E.Mul(e, rhs)
            elif (isinstance(e, E.Const) and isinstance(rhs, E.Const)
                  and isinstance(e.value, Fraction) and isinstance(rhs.value, Fraction)):
                if rhs.value == 0:
                    self.fail("zero denominator in ratio literal")
                e = E.Const(E._fold(e.value / rhs.value))
            else:
                e = E.Div(e, rhs)
        return e

    def unary(self):
        if self.tok == ("op", "-", self.tok[2]):
            self.i += 1
            arg = self.unary()
            if isinstance(arg, E.Const):
                return E.Const(-arg.value)
            return E.Neg(arg)
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            tok = self.tok
            negative = False
            paren = self.accept("(")
            if paren and self.accept("-"):
                negative = True
            if self.tok[0] != "num" or not self.tok[1].isdigit():
                self.fail("exponent must be an integer literal")
            n = int(self.tok[1])
            self.i += 1
            if paren:
                self.expect(")")
            n = -n if negative else n
            if n == 0 and isinstance(base, E.Const) and base.value == 0:
                self.fail("0^0 is undefined", tok)
            return E.Pow(base, n)
        return base

    def number(self, text):
        if re.fullmatch(r"\d+", text):
            return E.Const(Fraction(int(text)))
        return E.Const(float(text))

    def atom(self):
        kind, value, pos = self.tok
        if kind == "num":
            self.i += 1
            return self.number(value)
        if kind == "op" and value == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            self.i += 1
            if value == "t":
                return self.var(0)
            m = re.fullmatch(r"y([1-9])", value)
            if m:
                return self.var(int(m.group(1)))
            if value == "pi":
                return E.Const(math.pi)
            if value in E.Func.NAMES:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return E.Func(value, arg)
            if value == "bump":
                self.expect("(")
                center = self.point()
                self.expect(",")
                radius = self.constant(self.expr())
                self.expect(")")
                if not radius > 0:
                    self.fail("bump radius must be positive", (kind, value, pos))
                return E.Cutoff(center, radius, E.ONE)
            if value == "cutoff":
                self.expect("(")
                center = self.point()
                self.expect(",")
                radius = self.constant(self.expr())
                self.expect(",")
                inner = self.expr()
                self.expect(")")
                return E.Cutoff(center, radius, inner)
            m = re.fullmatch(r"J(\d*)", value)
            if m and self.tok[1] == "[":
                if not self.allow_jets:
                    self.fail("jet symbols are only valid in PDE specifications", (kind, value, pos))
                return self.jet(int(m.group(1) or 0))
            if value == "U" or value.startswith("J"):
                self.fail(f"PDE symbol {value!r} is only valid in PDE specifications",
                          (kind, value, pos))
            self.fail(f"unknown identifier {value!r}", (kind, value, pos))
        self.fail(f"unexpected {value or 'end of input'!r}")

    def var(self, index):
        if self.dim is not None and index >= self.dim:
            self.fail(f"variable index {index} exceeds dimension {self.dim}",
                      self.tokens[self.i - 1])
        return E.Var(index)

    def constant(self, e):
        if E.free_vars(e):
            self.fail("expected a constant expression")
        return float(E.evaluate(e, ()))

    def point(self):
        if self.tok[1] == "(":
            save = self.i
            self.i += 1
            coords = [self.constant(self.expr())]
            while self.accept(","):
                coords.append(self.constant(self.expr()))
            if self.accept(")"):
                return tuple(coords)
            self.i = save
        return (self.constant(self.expr()),)

    def integer(self):
        negative = self.accept("-")
        if self.tok[0] != "num" or not self.tok[1].isdigit():
            self.fail("expected an integer")
        v = int(self.tok[1])
        self.i += 1
        return -v if negative else v

    def jet(self, component):
        self.expect("[")
        p = self.integer()
        self.expect(",")
        self.expect("(")
        q = []
        if not self.accept(")"):
            q.append(self.integer())
            while self.accept(","):
                q.append(self.integer())
            self.expect(")")
        self.expect("]")
        return E.Jet(p, tuple(q), component)


def parse_expr(text, dim=None, allow_jets=False):
    """Parse ``text`` into an expression tree (no simplification beyond literal folding)."""
    return _Parser(text, dim=dim, allow_jets=allow_jets).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {E.Add: 1, E.Sub: 1, E.Sum: 1, E.Mul: 2, E.Div: 2, E.Neg: 3, E.Pow: 4}


def _num(v):
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator) if v >= 0 else f"({v.numerator})"
        return f"({v.numerator}/{v.denominator})"
    s = repr(float(v))
    if s in ("inf", "-inf", "nan"):
        raise ValueError(f"non-finite constant {s}")
    return s if math.copysign(1.0, float(v)) > 0 else f"({s})"


def _var(i):
    return "t" if i == 0 else f"y{i}"


def _point(c):
    return "(" + ", ".join(_num(float(v)) for v in c) + ")"


def _wrap(e, prec, right=False):
    s = to_text(e)
    p = _PREC.get(type(e), 5)
    if p < prec or (right and p == prec and prec in (1, 2)):
        return f"({s})"
    return s


def to_text(e):
    if isinstance(e, E.Const):
        return _num(e.value)
    if isinstance(e, E.Var):
        return _var(e.index)
    if isinstance(e, E.Add):
        return f"{_wrap(e.left, 1)} + {_wrap(e.right, 1, True)}"
    if isinstance(e, E.Sub):
        return f"{_wrap(e.left, 1)} - {_wrap(e.right, 1, True)}"
    if isinstance(e, E.Sum):
        return " + ".join(_wrap(t, 2) for t in e.terms)
    if isinstance(e, E.Mul):
        return f"{_wrap(e.left, 2)} * {_wrap(e.right, 2, True)}"
    if isinstance(e, E.Div):
        return f"{_wrap(e.left, 2)} / {_wrap(e.right, 2, True)}"
    if isinstance(e, E.Neg):
        return f"-{_wrap(e.arg, 4)}"
    if isinstance(e, E.Pow):
        n = e.exponent
        exp = str(n) if n >= 0 else f"(-{-n})"
        return f"{_wrap(e.base, 5)}^{exp}"
    if isinstance(e, E.Func):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, E.Cutoff):
        if E.is_const(e.inner, 1) and isinstance(e.inner.value, Fraction):
            return f"bump({_point(e.center)}, {_num(e.radius)})"
        return f"cutoff({_point(e.center)}, {_num(e.radius)}, {to_text(e.inner)})"
    if isinstance(e, E.Extension):
        return e.text()
    if isinstance(e, E.Jet):
        comp = str(e.component) if e.component else ""
        return f"J{comp}[{e.p},(" + ",".join(str(v) for v in e.q) + ")]"
    raise TypeError(f"unknown node {type(e).__name__}")
