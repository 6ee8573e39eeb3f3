"""Truncated multivariate Taylor series and the Cauchy-Kovalevskaia recursion.

A :class:`TruncatedSeries` stores a dense coefficient array of shape
``(N+1,)*n`` with entries of total degree above ``N`` held at zero.  Products
are truncated Cauchy products; transcendental functions are applied by
composing their univariate Taylor expansion with the nilpotent part.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal

from . import expr as E
from .errors import PreconditionError, RadiusCollapse

OVERFLOW_GUARD = 1e150


class ExtrapolationWarning(UserWarning):
    """A series was evaluated outside its validity box."""


def _degree_grid(n, N):
    grids = np.indices((N + 1,) * n)
    return grids.sum(axis=0)


_MASKS = {}


def degree_mask(n, N):
    key = (n, N)
    if key not in _MASKS:
        _MASKS[key] = _degree_grid(n, N) <= N
    return _MASKS[key]


@dataclass(frozen=True, eq=False)
class TruncatedSeries:
    center: tuple
    order: int
    coeffs: np.ndarray
    validity: tuple = field(default=None)  # ((lo, hi), ...) per axis, or None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        n = len(self.center)
        if c.shape != (self.order + 1,) * n:
            raise PreconditionError(f"coefficient shape {c.shape} does not match order/dimension")
        c = np.where(degree_mask(n, self.order), c, 0.0)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def dim(self):
        return len(self.center)

    # constructors ---------------------------------------------------------
    @classmethod
    def zeros(cls, center, order):
        return cls(center, order, np.zeros((order + 1,) * len(center)))

    @classmethod
    def constant(cls, value, center, order):
        c = np.zeros((order + 1,) * len(center))
        c[(0,) * len(center)] = float(value)
        return cls(center, order, c)

    @classmethod
    def variable(cls, axis, center, order):
        """The coordinate function ``x_axis`` expanded at ``center``."""
        n = len(center)
        c = np.zeros((order + 1,) * n)
        c[(0,) * n] = float(center[axis])
        if order >= 1:
            idx = [0] * n
            idx[axis] = 1
            c[tuple(idx)] = 1.0
        return cls(center, order, c)

    @classmethod
    def from_dict(cls, mapping, center, order):
        c = np.zeros((order + 1,) * len(center))
        for alpha, v in mapping.items():
            if sum(alpha) > order:
                raise PreconditionError(f"multi-index {alpha} exceeds order {order}")
            c[tuple(alpha)] = float(v)
        return cls(center, order, c)

    # access ---------------------------------------------------------------
    def coeff(self, alpha):
        alpha = tuple(alpha)
        if sum(alpha) > self.order or any(a < 0 for a in alpha):
            return 0.0
        return float(self.coeffs[alpha])

    def items(self):
        """Nonzero ``(multi_index, coefficient)`` pairs in lexicographic order."""
        for alpha in itertools.product(range(self.order + 1), repeat=self.dim):
            if sum(alpha) <= self.order:
                v = self.coeffs[alpha]
                if v != 0.0:
                    yield alpha, float(v)

    def to_rows(self):
        return [(alpha, v) for alpha, v in self.items()]

    def is_zero(self):
        return not np.any(self.coeffs)

    def with_validity(self, validity):
        return TruncatedSeries(self.center, self.order, self.coeffs, validity)

    def _like(self, coeffs):
        return TruncatedSeries(self.center, self.order, coeffs, self.validity)

    def _check(self, other):
        if not isinstance(other, TruncatedSeries):
            raise TypeError("expected a TruncatedSeries")
        if other.center != self.center or other.order != self.order:
            raise PreconditionError("series centers or orders differ")

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (int, float, Fraction)):
            c = self.coeffs.copy()
            c[(0,) * self.dim] += float(other)
            return self._like(c)
        self._check(other)
        return self._like(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, Fraction)):
            return self._like(self.coeffs * float(other))
        self._check(other)
        return self._like(_cauchy_product(self.coeffs, other.coeffs, self.order))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, Fraction)):
            return self._like(self.coeffs / float(other))
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * float(other)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise PreconditionError("integer powers only")
        if n < 0:
            return reciprocal(self) ** (-n)
        result = TruncatedSeries.constant(1.0, self.center, self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # calculus -------------------------------------------------------------
    def derivative(self, alpha):
        """``D^alpha`` of the series, kept at the same order (top entries become zero)."""
        c = self.coeffs
        for axis, k in enumerate(alpha):
            for _ in range(k):
                idx = np.arange(1, self.order + 1, dtype=float)
                shape = [1] * self.dim
                shape[axis] = self.order
                moved = np.take(c, range(1, self.order + 1), axis=axis) * idx.reshape(shape)
                pad = [(0, 0)] * self.dim
                pad[axis] = (0, 1)
                c = np.pad(moved, pad)
        return self._like(c)

    def shift_axis(self, axis, delta):
        """Re-expand along one axis: coefficients of ``s(x + delta e_axis)`` at the same center.

        Exact for the stored polynomial (a finite binomial re-expansion).
        """
        N = self.order
        out = np.zeros_like(self.coeffs)
        c = np.moveaxis(self.coeffs, axis, 0)
        o = np.moveaxis(out, axis, 0)
        for k in range(N + 1):
            for j in range(k + 1):
                o[j] += math.comb(k, j) * delta ** (k - j) * c[k]
        out = np.moveaxis(o, 0, axis)
        return self._like(out)


def _cauchy_product(a, b, N):
    """Product of coefficient arrays, cropped to indices ``<= N`` per axis.

    Up to two variables the arrays are packed into one dimension with stride
    ``2N+1`` per trailing axis (no index can carry over), so a single 1-D
    direct convolution computes the exact product.
    """
    n = a.ndim
    if n > 2:
        full = signal.convolve(a, b, method="direct")
        return full[(slice(0, N + 1),) * n]
    B = 2 * N + 1
    if n == 1:
        return np.convolve(a, b)[:N + 1]
    pad = ((0, 0), (0, B - (N + 1)))
    flat = np.convolve(np.pad(a, pad).ravel(), np.pad(b, pad).ravel())
    return flat[:(N + 1) * B].reshape(N + 1, B)[:, :N + 1]


def series_add(a, b):
    return a + b


def series_mul(a, b):
    """Truncated Cauchy product."""
    return a * b


def series_compose_scalar(a, taylor):
    """``f(a)`` where ``taylor[k] = f^(k)(a_0)/k!`` is the expansion of ``f`` at ``a``'s constant term."""
    a0 = float(a.coeffs[(0,) * a.dim])
    h = a - a0
    top = min(a.order, len(taylor) - 1)
    result = TruncatedSeries.constant(float(taylor[top]), a.center, a.order)
    for k in range(top - 1, -1, -1):
        result = result * h + float(taylor[k])
    return result


def reciprocal(a):
    a0 = float(a.coeffs[(0,) * a.dim])
    if a0 == 0.0:
        raise ZeroDivisionError("reciprocal of a series with zero constant term")
    taylor = [(-1) ** k / a0 ** (k + 1) for k in range(a.order + 1)]
    return series_compose_scalar(a, taylor)


def _func_taylor(name, a0, order):
    if name == "exp":
        e = math.exp(a0)
        return [e / math.factorial(k) for k in range(order + 1)]
    s, c = math.sin(a0), math.cos(a0)
    cycle = [s, c, -s, -c] if name == "sin" else [c, -s, -c, s]
    return [cycle[k % 4] / math.factorial(k) for k in range(order + 1)]


def expand(e, center, order, jets=None):
    """Taylor series of expression ``e`` at ``center`` to total degree ``order``.

    ``jets`` maps :class:`~foamck.expr.Jet` nodes to series.  Bump kernels are not
    expandable this way.
    """
    center = tuple(float(v) for v in center)
    cache = {}

    def go(node):
        key = id(node)
        if key in cache:
            return cache[key][1]
        out = _go(node)
        cache[key] = (node, out)
        return out

    def _go(node):
        if isinstance(node, E.Const):
            return TruncatedSeries.constant(float(node.value), center, order)
        if isinstance(node, E.Var):
            if node.index >= len(center):
                raise PreconditionError(f"variable index {node.index} outside dimension")
            return TruncatedSeries.variable(node.index, center, order)
        if isinstance(node, E.Add):
            return go(node.left) + go(node.right)
        if isinstance(node, E.Sub):
            return go(node.left) - go(node.right)
        if isinstance(node, E.Sum):
            out = TruncatedSeries.zeros(center, order)
            for t in node.terms:
                out = out + go(t)
            return out
        if isinstance(node, E.Mul):
            return go(node.left) * go(node.right)
        if isinstance(node, E.Div):
            return go(node.left) * reciprocal(go(node.right))
        if isinstance(node, E.Neg):
            return -go(node.arg)
        if isinstance(node, E.Pow):
            return go(node.base) ** node.exponent
        if isinstance(node, E.Func):
            arg = go(node.arg)
            a0 = float(arg.coeffs[(0,) * arg.dim])
            return series_compose_scalar(arg, _func_taylor(node.name, a0, order))
        if isinstance(node, E.Jet):
            if jets is None or node not in jets:
                raise PreconditionError(f"no series supplied for jet {node}")
            return jets[node]
        if isinstance(node, E.Cutoff):
            raise PreconditionError("bump kernels cannot be expanded as analytic series")
        raise TypeError(f"unknown node {type(node).__name__}")

    return go(e)


# ---------------------------------------------------------------------------
# evaluation

def _in_validity(s, x):
    if s.validity is None:
        return True
    return all(lo <= v <= hi for v, (lo, hi) in zip(x, s.validity))


def evaluate_series(s, x):
    """Value of ``s`` at ``x`` by nested Horner evaluation."""
    x = tuple(float(v) for v in x)
    if not _in_validity(s, x):
        warnings.warn(f"series evaluated outside its validity box at {x}",
                      ExtrapolationWarning, stacklevel=2)
    dx = [v - c for v, c in zip(x, s.center)]
    c = s.coeffs
    for v in dx:
        # polyval contracts the leading axis
        c = np.polynomial.polynomial.polyval(v, c)
    return float(c)


def evaluate_many(s, points):
    """Vectorised evaluation at an ``(m, n)`` array of points (no validity warning)."""
    P = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(s.center)
    N = s.order
    powers = [P[:, i, None] ** np.arange(N + 1) for i in range(s.dim)]
    T = np.tensordot(powers[0], s.coeffs, axes=([1], [0]))  # (m, N+1, ...)
    for i in range(1, s.dim):
        T = np.einsum("mk,mk...->m...", powers[i], T)
    return T


# ---------------------------------------------------------------------------
# radius estimation

def _axis_sequence(s, axis):
    idx = [0] * s.dim
    out = []
    for k in range(s.order + 1):
        idx[axis] = k
        out.append(abs(float(s.coeffs[tuple(idx)])))
    return out


def root_test_radius(s, axis):
    """Unscaled root-test radius along ``axis``.

    Uses the two highest nonzero pure-axis coefficients in the upper half of
    the degrees (two, so that series with vanishing odd or even terms still
    get a fair reading).
    """
    seq = _axis_sequence(s, axis)
    N = s.order
    roots = [seq[k] ** (1.0 / k) for k in range(N, max(1, (N + 1) // 2) - 1, -1) if seq[k] > 0.0]
    best = max(roots[:2], default=0.0)
    return math.inf if best == 0.0 else 1.0 / best


def ratio_distance(s, axis):
    """Ratio-test distance ``|c_{N-1}/c_N|`` along ``axis`` (inf when undefined)."""
    seq = _axis_sequence(s, axis)
    N = s.order
    for k in range(N, 1, -1):
        if seq[k] > 0.0 and seq[k - 1] > 0.0:
            return seq[k - 1] / seq[k]
    return math.inf


def estimate_radius(s, sigma=0.8, domain=None):
    """Per-axis convergence radius estimate scaled by the safety factor ``sigma``.

    Infinite estimates (finitely many terms) are clipped to the farthest domain
    boundary when a domain is given.
    """
    if not 0.0 < sigma < 1.0:
        raise PreconditionError("safety factor must lie in (0, 1)")
    if s.order < 4:
        raise PreconditionError("radius estimation needs order >= 4")
    radii = []
    for axis in range(s.dim):
        r = sigma * root_test_radius(s, axis)
        if math.isinf(r) and domain is not None:
            lo, hi = domain.lower[axis], domain.upper[axis]
            r = max(s.center[axis] - lo, hi - s.center[axis])
        radii.append(r)
    return tuple(radii)


def validity_box(s, radii, domain=None):
    box = []
    for axis, r in enumerate(radii):
        lo, hi = s.center[axis] - r, s.center[axis] + r
        if domain is not None:
            lo, hi = max(lo, domain.lower[axis]), min(hi, domain.upper[axis])
        box.append((lo, hi))
    return tuple(box)


# ---------------------------------------------------------------------------
# Cauchy-Kovalevskaia recursion

@dataclass(frozen=True)
class InitialData:
    """Data ``D_t^p U(t0, y) = g[p](y)``; with systems, ``g[k][p]`` per component."""

    g: tuple
    t0: float

    def __post_init__(self):
        g = tuple(self.g)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "t0", float(self.t0))
        flat = [e for comp in g for e in (comp if isinstance(comp, tuple) else (comp,))]
        for e in flat:
            if 0 in E.free_vars(e):
                raise PreconditionError("initial data must not depend on t")

    def components(self):
        if self.g and isinstance(self.g[0], tuple):
            return self.g
        return (self.g,)


def _rhs_list(pde):
    rhs = pde.rhs
    return tuple(rhs) if isinstance(rhs, (list, tuple)) else (rhs,)


def validate_jets(rhs, m, n, components):
    """Enforce ``0 <= p < m``, ``p + |q| <= m`` and component range on every jet."""
    for g in rhs:
        for j in E.jets_in(g):
            if len(j.q) != n - 1:
                raise PreconditionError(f"jet {j} needs {n - 1} y-derivative orders")
            if not 0 <= j.p < m:
                raise PreconditionError(f"jet {j} violates 0 <= p < m (m={m})")
            if any(v < 0 for v in j.q) or j.p + sum(j.q) > m:
                raise PreconditionError(f"jet {j} violates p + |q| <= m (m={m})")
            if not 0 <= j.component < components:
                raise PreconditionError(f"jet {j} refers to a missing component")


def data_coefficients(data, center, order, m):
    """Per component, per ``p < m``, the y-Taylor array of ``g_p`` (an n-dim array with t-degree 0)."""
    out = []
    for comp in data.components():
        if len(comp) != m:
            raise PreconditionError(f"expected {m} initial functions, got {len(comp)}")
        arrays = []
        for p, g in enumerate(comp):
            s = expand(g, center, order)
            arrays.append(np.take(s.coeffs, [0], axis=0)[0])
        out.append(arrays)
    return out


def ck_recursion(rhs, m, center, order, data_arrays):
    """Degree-by-degree solve of ``D_t^m U_k = G_k(...)`` given y-Taylor data arrays.

    ``data_arrays[k][p]`` is an (n-1)-dim array of Taylor coefficients of
    ``D_t^p U_k(t0, .)`` about ``center[1:]``.  Returns one series per component.
    """
    n = len(center)
    N = order
    K = len(rhs)
    coeffs = [np.zeros((N + 1,) * n) for _ in range(K)]
    for k in range(K):
        for p in range(m):
            if p > N:
                break
            arr = np.asarray(data_arrays[k][p], dtype=float)
            coeffs[k][p] = arr / math.factorial(p)
    mask = degree_mask(n, N)
    for k in range(K):
        coeffs[k] = np.where(mask, coeffs[k], 0.0)

    jets = sorted({j for g in rhs for j in E.jets_in(g)}, key=lambda j: (j.component, j.p, j.q))
    ydeg = _degree_grid(n - 1, N) if n > 1 else np.zeros((), dtype=int)
    for j in range(0, N - m + 1):
        current = [TruncatedSeries(center, N, c) for c in coeffs]
        jet_series = {jt: current[jt.component].derivative((jt.p,) + tuple(jt.q)) for jt in jets}
        scale = math.factorial(j) / math.factorial(j + m)
        for k, g in enumerate(rhs):
            try:
                gs = expand(g, center, N, jet_series)
            except (ZeroDivisionError, OverflowError, FloatingPointError) as exc:
                raise RadiusCollapse(j + m, "singular right-hand side") from exc
            layer = gs.coeffs[j] * scale
            keep = ydeg <= N - j - m
            new = np.where(keep, layer, 0.0)
            if not np.all(np.isfinite(new)) or np.max(np.abs(new), initial=0.0) > OVERFLOW_GUARD:
                raise RadiusCollapse(j + m)
            coeffs[k][j + m] = new
    return [TruncatedSeries(center, N, c) for c in coeffs]


def ck_solve_local(pde, data, center, order):
    """Local analytic solution of ``D_t^m U = G`` with data on ``t = t0`` as a Taylor polynomial.

    ``pde`` needs ``order`` (m), ``rhs`` (one expression or a list for
    systems) and ``dim``.  Returns a single series for scalar problems and a
    list for systems.
    """
    m = pde.order
    rhs = _rhs_list(pde)
    n = len(center)
    if n != pde.dim:
        raise PreconditionError("center dimension does not match the PDE")
    if abs(center[0] - data.t0) > 1e-12:
        raise PreconditionError("expansion center must lie on the hypersurface t = t0")
    validate_jets(rhs, m, n, len(rhs))
    comps = data.components()
    if len(comps) != len(rhs):
        raise PreconditionError("number of data components does not match the system")
    try:
        arrays = data_coefficients(data, center, order, m)
    except (ZeroDivisionError, OverflowError) as exc:
        raise RadiusCollapse(0, "singular initial data") from exc
    out = ck_recursion(rhs, m, tuple(float(v) for v in center), order, arrays)
    return out[0] if not isinstance(pde.rhs, (list, tuple)) else out


def residual_series(pde, s):
    """``D_t^m s - G(jets of s)`` as a series (scalar problems)."""
    m = pde.order
    g = _rhs_list(pde)[0]
    jets = {jt: s.derivative((jt.p,) + tuple(jt.q)) for jt in E.jets_in(g)}
    lhs = s.derivative((m,) + (0,) * (s.dim - 1))
    return lhs - expand(g, s.center, s.order, jets)


def induced_data(s, m, t_new):
    """y-Taylor arrays of ``D_t^p s`` restricted to ``t = t_new``, ``p < m``."""
    dt = t_new - s.center[0]
    out = []
    for p in range(m):
        d = s.derivative((p,) + (0,) * (s.dim - 1)).shift_axis(0, dt)
        out.append(np.array(d.coeffs[0]))
    return out


def series_rows(s):
    """CSV-ready rows ``(i_0, ..., i_{n-1}, coefficient)``."""
    return [tuple(alpha) + (repr(v),) for alpha, v in s.items()]
