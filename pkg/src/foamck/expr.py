"""Smooth closed-form expressions with exact symbolic derivatives.

Expressions are immutable trees.  Every node knows how to evaluate itself at a
real point, how to differentiate itself along one axis, and which closed boxes
contain its support (``None`` meaning "could be all of the domain").

Axis 0 is ``t``; axes 1..n-1 are ``y1 .. y{n-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import PreconditionError, SupportBoundaryError

_EMPTY = np.empty((0, 0, 2))


@dataclass(frozen=True)
class DomainBox:
    """Product of open intervals ``(lower[i], upper[i])``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise PreconditionError("domain box needs matching, nonempty bounds")
        if any(not a < b for a, b in zip(lo, hi)):
            raise PreconditionError(f"degenerate domain box {lo} {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lengths(self):
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    def contains(self, x):
        return all(a < v < b for a, v, b in zip(self.lower, x, self.upper))

    def contains_closed_ball(self, center, radius):
        return all(a < c - radius and c + radius < b
                   for a, c, b in zip(self.lower, center, self.upper))

    def as_pairs(self):
        return list(zip(self.lower, self.upper))


def check_multi_index(p, dim):
    p = tuple(int(v) for v in p)
    if len(p) != dim or any(v < 0 for v in p):
        raise PreconditionError(f"multi-index {p} invalid for dimension {dim}")
    return p


# ---------------------------------------------------------------------------
# support arrays: shape (k, n, 2) of closed boxes, or None for "unknown"

def _concat(*arrays):
    parts = [a for a in arrays if a.shape[0]]
    if not parts:
        return _EMPTY
    return parts[0] if len(parts) == 1 else np.concatenate(parts)


def _intersect(a, b):
    if a.shape[0] == 0 or b.shape[0] == 0:
        return _EMPTY
    lo = np.maximum(a[:, None, :, 0], b[None, :, :, 0])
    hi = np.minimum(a[:, None, :, 1], b[None, :, :, 1])
    keep = np.all(lo <= hi, axis=-1)
    out = np.stack([lo[keep], hi[keep]], axis=-1)
    return out if out.shape[0] else _EMPTY


def _support_product(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if a.shape[0] * b.shape[0] > 4096:
        return a if a.shape[0] <= b.shape[0] else b
    return _intersect(a, b)


def _support_sum(*parts):
    if any(p is None for p in parts):
        return None
    return _concat(*parts)


# ---------------------------------------------------------------------------
# node types

class Expr:
    """Base class; subclasses are frozen dataclasses."""

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return power(self, n)

    def __str__(self):
        from .parser import to_text
        return to_text(self)

    @cached_property
    def support(self):
        return None

    def children(self):
        return ()


class Extension(Expr):
    """Leaf node defined outside this module.

    Subclasses provide ``value(x)``, ``derivative(axis)``, ``axes()`` (the
    coordinates they depend on) and ``text()``.
    """

    def value(self, x):
        raise NotImplementedError

    def derivative(self, axis):
        raise NotImplementedError

    def axes(self):
        raise NotImplementedError

    def text(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: object

    @cached_property
    def support(self):
        return _EMPTY if self.value == 0 else None


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr

    @cached_property
    def support(self):
        return _support_sum(self.left.support, self.right.support)

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr

    @cached_property
    def support(self):
        return _support_sum(self.left.support, self.right.support)

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Sum(Expr):
    """n-ary sum; used for large bump superpositions."""

    terms: tuple

    @cached_property
    def support(self):
        return _support_sum(*(t.support for t in self.terms))

    def children(self):
        return self.terms


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr

    @cached_property
    def support(self):
        return _support_product(self.left.support, self.right.support)

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr

    @cached_property
    def support(self):
        return self.left.support

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    @cached_property
    def support(self):
        return self.arg.support

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int

    @cached_property
    def support(self):
        return self.base.support if self.exponent > 0 else None

    def children(self):
        return (self.base,)


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    @cached_property
    def support(self):
        # sin(0) = 0; exp and cos do not vanish with their argument
        return self.arg.support if self.name == "sin" else None

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Cutoff(Expr):
    """``inner(x) * exp(-1/s(x))`` where ``s = 1 - |x-center|^2/radius^2``; zero for s <= 0.

    With ``inner == 1`` this is the standard bump kernel.  Derivatives of a
    cutoff are again cutoffs with a modified inner factor.
    """

    center: tuple
    radius: float
    inner: Expr

    @cached_property
    def box(self):
        return np.array([[[c - self.radius, c + self.radius] for c in self.center]], dtype=float)

    @cached_property
    def support(self):
        return _support_product(self.box, self.inner.support)

    def children(self):
        return (self.inner,)


@dataclass(frozen=True, eq=True)
class Jet(Expr):
    """Placeholder for ``D_t^p D_y^q U_component`` inside a PDE right-hand side."""

    p: int
    q: tuple
    component: int = 0


Func.NAMES = ("exp", "sin", "cos")
ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def as_expr(value):
    if isinstance(value, Expr):
        return value
    if isinstance(value, int):
        return Const(Fraction(value))
    if isinstance(value, (float, Fraction)):
        return Const(value)
    raise TypeError(f"cannot convert {value!r} to an expression")


def is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def _fold(v):
    if isinstance(v, Fraction) and v.denominator == 1:
        return Fraction(v.numerator)
    return v


# smart constructors: shallow constant folding and 0/1 absorption only

def add(a, b):
    if is_const(a, 0):
        return b
    if is_const(b, 0):
        return a
    if is_const(a) and is_const(b):
        return Const(_fold(a.value + b.value))
    return Add(a, b)


def sub(a, b):
    if is_const(b, 0):
        return a
    if is_const(a, 0):
        return neg(b)
    if is_const(a) and is_const(b):
        return Const(_fold(a.value - b.value))
    return Sub(a, b)


def mul(a, b):
    if is_const(a, 0) or is_const(b, 0):
        return ZERO
    if is_const(a, 1):
        return b
    if is_const(b, 1):
        return a
    if is_const(a) and is_const(b):
        return Const(_fold(a.value * b.value))
    return Mul(a, b)


def div(a, b):
    if is_const(b, 0):
        raise ZeroDivisionError("division by constant zero")
    if is_const(a, 0):
        return ZERO
    if is_const(b, 1):
        return a
    if is_const(a) and is_const(b):
        if isinstance(a.value, Fraction) and isinstance(b.value, Fraction):
            return Const(_fold(a.value / b.value))
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a):
    if is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a, n):
    if not isinstance(n, int):
        raise PreconditionError("only integer powers are supported")
    if n == 0:
        return ONE
    if n == 1:
        return a
    if is_const(a) and isinstance(a.value, Fraction) and (n > 0 or a.value != 0):
        return Const(_fold(a.value ** n))
    return Pow(a, n)


def func(name, a):
    if name not in Func.NAMES:
        raise PreconditionError(f"unknown function {name}")
    return Func(name, a)


def sum_of(terms):
    terms = tuple(t for t in terms if not is_const(t, 0))
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Sum(terms)


def variable(index):
    return Var(index)


def bump(center, radius, domain=None):
    """Bump kernel ``exp(-1/(1-|x-c|^2/r^2))`` extended by zero outside the ball."""
    if isinstance(center, (int, float, Fraction)):
        center = (center,)
    center = tuple(float(c) for c in center)
    radius = float(radius)
    if not radius > 0 or not math.isfinite(radius):
        raise PreconditionError(f"bump radius must be positive, got {radius}")
    if domain is not None:
        if domain.dim != len(center):
            raise PreconditionError("bump center dimension does not match the domain")
        if not domain.contains_closed_ball(center, radius):
            raise PreconditionError(f"closed ball({center}, {radius}) leaves the domain box")
    return Cutoff(center, radius, ONE)


# ---------------------------------------------------------------------------
# evaluation

def _cutoff_s_value(c, x):
    r2 = 0.0
    for ci, xi in zip(c.center, x):
        d = (xi - ci) / c.radius
        r2 += d * d
    return 1.0 - r2


def evaluate(e, x, jets=None):
    """Numeric value of ``e`` at the point ``x`` (a sequence of floats).

    ``jets`` maps ``(component, p, q)`` to values when ``e`` contains jet symbols.
    """
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        return float(x[e.index])
    if isinstance(e, Add):
        return evaluate(e.left, x, jets) + evaluate(e.right, x, jets)
    if isinstance(e, Sub):
        return evaluate(e.left, x, jets) - evaluate(e.right, x, jets)
    if isinstance(e, Sum):
        return math.fsum(evaluate(t, x, jets) for t in e.terms)
    if isinstance(e, Mul):
        # a vanishing factor (typically a cutoff) annihilates the product
        left = evaluate(e.left, x, jets)
        return 0.0 if left == 0.0 else left * evaluate(e.right, x, jets)
    if isinstance(e, Div):
        return evaluate(e.left, x, jets) / evaluate(e.right, x, jets)
    if isinstance(e, Neg):
        return -evaluate(e.arg, x, jets)
    if isinstance(e, Pow):
        return evaluate(e.base, x, jets) ** e.exponent
    if isinstance(e, Func):
        return getattr(math, e.name)(evaluate(e.arg, x, jets))
    if isinstance(e, Cutoff):
        s = _cutoff_s_value(e, x)
        if s <= 0.0:
            return 0.0
        kernel = math.exp(-1.0 / s)
        if kernel == 0.0:
            return 0.0
        try:
            value = evaluate(e.inner, x, jets) * kernel
        except (ZeroDivisionError, OverflowError) as exc:
            raise SupportBoundaryError(f"evaluation at support boundary (s={s:.3e})") from exc
        if not math.isfinite(value):
            raise SupportBoundaryError(f"evaluation at support boundary (s={s:.3e})")
        return value
    if isinstance(e, Extension):
        return float(e.value(x))
    if isinstance(e, Jet):
        if jets is None:
            raise PreconditionError("jet symbol evaluated without jet values")
        return float(jets[(e.component, e.p, e.q)])
    raise TypeError(f"unknown node {type(e).__name__}")


# ---------------------------------------------------------------------------
# differentiation

def _cutoff_s(c):
    s = ONE
    for i, ci in enumerate(c.center):
        d = div(sub(Var(i), Const(ci)), Const(c.radius))
        s = sub(s, power(d, 2))
    return s


def derive_axis(e, axis):
    """First partial derivative along ``axis``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == axis else ZERO
    if isinstance(e, Add):
        return add(derive_axis(e.left, axis), derive_axis(e.right, axis))
    if isinstance(e, Sub):
        return sub(derive_axis(e.left, axis), derive_axis(e.right, axis))
    if isinstance(e, Sum):
        return sum_of(derive_axis(t, axis) for t in e.terms)
    if isinstance(e, Neg):
        return neg(derive_axis(e.arg, axis))
    if isinstance(e, Mul):
        return add(mul(derive_axis(e.left, axis), e.right),
                   mul(e.left, derive_axis(e.right, axis)))
    if isinstance(e, Div):
        da = derive_axis(e.left, axis)
        db = derive_axis(e.right, axis)
        if is_const(db, 0):
            return div(da, e.right)
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, 2))
    if isinstance(e, Pow):
        db = derive_axis(e.base, axis)
        return mul(mul(Const(Fraction(e.exponent)), power(e.base, e.exponent - 1)), db)
    if isinstance(e, Func):
        du = derive_axis(e.arg, axis)
        if is_const(du, 0):
            return ZERO
        if e.name == "exp":
            outer = e
        elif e.name == "sin":
            outer = Func("cos", e.arg)
        else:
            outer = neg(Func("sin", e.arg))
        return mul(outer, du)
    if isinstance(e, Cutoff):
        if axis >= len(e.center):
            return ZERO
        # d/dx exp(-1/s) = exp(-1/s) * s'/s^2, s' = -2 (x_a - c_a)/r^2
        ds = mul(Const(-2.0 / (e.radius * e.radius)), sub(Var(axis), Const(e.center[axis])))
        factor = div(ds, power(_cutoff_s(e), 2))
        inner = add(derive_axis(e.inner, axis), mul(e.inner, factor))
        return Cutoff(e.center, e.radius, inner) if not is_const(inner, 0) else ZERO
    if isinstance(e, Extension):
        return e.derivative(axis)
    if isinstance(e, Jet):
        raise PreconditionError("jet symbols cannot be differentiated symbolically")
    raise TypeError(f"unknown node {type(e).__name__}")


def differentiate(e, p):
    """Mixed partial ``D^p e``; axes are processed in increasing order."""
    p = tuple(int(v) for v in p)
    if any(v < 0 for v in p):
        raise PreconditionError(f"negative multi-index {p}")
    out = e
    for axis, count in enumerate(p):
        for _ in range(count):
            out = derive_axis(out, axis)
    return out


# ---------------------------------------------------------------------------
# support

def support_array(e):
    """Support boxes as an array of shape (k, n, 2), or None when unknown."""
    return e.support


def support_box(e):
    """Closed boxes whose union contains supp(e); ``None`` means the whole domain."""
    arr = e.support
    if arr is None:
        return None
    return tuple(tuple((float(lo), float(hi)) for lo, hi in box) for box in arr)


def outside_support(e, x):
    """Gap > 0 when ``x`` is strictly outside every support box, else 0.

    The gap is the L-infinity distance from ``x`` to the nearest support box,
    so the open cube of that half-width around ``x`` carries no support.
    Returns 0.0 when the support is unknown.
    """
    arr = e.support
    if arr is None:
        return 0.0
    if arr.shape[0] == 0:
        return math.inf
    x = np.asarray(x, dtype=float)
    below = arr[:, :, 0] - x
    above = x - arr[:, :, 1]
    per_axis = np.maximum(below, above)
    dist = per_axis.max(axis=1)
    gap = float(dist.min())
    return gap if gap > 0 else 0.0


def free_vars(e):
    seen = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            seen.add(node.index)
        elif isinstance(node, Extension):
            seen.update(node.axes())
        elif isinstance(node, Cutoff):
            seen.update(range(len(node.center)))
        stack.extend(node.children())
    return seen


def jets_in(e):
    found = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Jet):
            found.add(node)
        stack.extend(node.children())
    return found
