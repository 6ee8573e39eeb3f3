"""Smooth windows and polynomial leaves used to glue local series into one smooth function."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import expit

from . import expr as E
from .errors import PreconditionError
from .series import TruncatedSeries, evaluate_many, evaluate_series


@lru_cache(maxsize=None)
def _logistic_polys(kmax):
    """``P_k`` with ``d^k/dz^k L(z) = P_k(L)`` for the logistic ``L(z) = 1/(1+e^z)``."""
    P = [np.polynomial.Polynomial([0.0, 1.0])]
    dL = np.polynomial.Polynomial([0.0, -1.0, 1.0])  # L' = L^2 - L
    for _ in range(kmax):
        P.append(P[-1].deriv() * dL)
    return tuple(P)


def smooth_step_derivatives(u, kmax):
    """Values ``S^(k)(u)``, ``k = 0..kmax``, of the C-infinity step.

    ``S(u) = f(u) / (f(u) + f(1-u))`` with ``f(u) = exp(-1/u)`` for ``u > 0``,
    so ``S = 0`` for ``u <= 0`` and ``S = 1`` for ``u >= 1``.  Inside, ``S`` is
    the logistic of ``z(u) = 1/u - 1/(1-u)``; derivatives come from composing
    truncated Taylor series, which stays finite where the direct formula would
    overflow.
    """
    out = np.zeros(kmax + 1)
    if u <= 0.0:
        return out
    if u >= 1.0:
        out[0] = 1.0
        return out
    z0 = 1.0 / u - 1.0 / (1.0 - u)
    L0 = float(expit(-z0))
    out[0] = L0
    if kmax == 0 or L0 == 0.0 or L0 == 1.0:
        return out
    j = np.arange(1, kmax + 1)
    delta = np.zeros(kmax + 1)
    delta[1:] = (-1.0) ** j / u ** (j + 1) - 1.0 / (1.0 - u) ** (j + 1)
    P = _logistic_polys(kmax)
    taylor = [P[k](L0) / math.factorial(k) for k in range(kmax + 1)]
    res = np.zeros(kmax + 1)
    for c in reversed(taylor):
        res = np.convolve(res, delta)[:kmax + 1]
        res[0] += c
    for k in range(kmax + 1):
        out[k] = res[k] * math.factorial(k)
    out[0] = L0
    return out


@dataclass(frozen=True)
class Window(E.Extension):
    """Smooth 0-1-0 profile along one axis.

    Rises from 0 to 1 across ``rise = (a, b)``, stays 1 until the fall
    ``(c, d)``, then returns to 0.  Either edge may be ``None`` (no edge on that
    side).  ``order`` is the derivative order along ``axis``.
    """

    axis: int
    dim: int
    rise: tuple = None
    fall: tuple = None
    order: int = 0

    def __post_init__(self):
        ok = all(e is None or e[0] < e[1] for e in (self.rise, self.fall))
        if self.rise is not None and self.fall is not None:
            ok = ok and self.rise[1] <= self.fall[0]
        if not ok:
            raise PreconditionError(f"window edges out of order: {self.rise} {self.fall}")

    def value(self, x):
        v = float(x[self.axis])
        k = self.order
        if self.rise is not None:
            a, b = self.rise
            if v <= a:
                return 0.0
            if v < b:
                return smooth_step_derivatives((v - a) / (b - a), k)[k] / (b - a) ** k
        if self.fall is not None:
            c, d = self.fall
            if v >= d:
                return 0.0
            if v > c:
                s = smooth_step_derivatives((v - c) / (d - c), k)[k] / (d - c) ** k
                return (1.0 - s) if k == 0 else -s
        return 1.0 if k == 0 else 0.0

    def values(self, v):
        """Vectorised ``value`` over a 1-D array of coordinates along ``axis``."""
        return np.array([self.value({self.axis: u}) for u in np.asarray(v, dtype=float)])

    def derivative(self, axis):
        if axis != self.axis:
            return E.ZERO
        return Window(self.axis, self.dim, self.rise, self.fall, self.order + 1)

    def axes(self):
        return (self.axis,)

    @cached_property
    def support(self):
        lo = self.rise[0] if self.rise else -math.inf
        hi = self.fall[1] if self.fall else math.inf
        box = np.tile(np.array([-math.inf, math.inf]), (1, self.dim, 1))
        box[0, self.axis] = (lo, hi)
        return box

    def text(self):
        var = "t" if self.axis == 0 else f"y{self.axis}"
        return f"window[{self.order}]({var}; {self.rise}, {self.fall})"


@dataclass(frozen=True)
class TilePoly(E.Extension):
    """A Taylor polynomial leaf; equality is equality of center, order and coefficients."""

    center: tuple
    order: int
    data: bytes
    shape: tuple
    validity: tuple = None

    @classmethod
    def from_series(cls, s):
        c = np.ascontiguousarray(s.coeffs, dtype=float)
        return cls(tuple(s.center), s.order, c.tobytes(), c.shape, s.validity)

    @cached_property
    def series(self):
        c = np.frombuffer(self.data, dtype=float).reshape(self.shape)
        return TruncatedSeries(self.center, self.order, c.copy())

    @cached_property
    def digest(self):
        return hashlib.sha256(self.data).hexdigest()[:12]

    def value(self, x):
        return evaluate_series(self.series, x)

    def values(self, points):
        return evaluate_many(self.series, points)

    def derivative(self, axis):
        alpha = [0] * len(self.center)
        alpha[axis] = 1
        d = self.series.derivative(tuple(alpha))
        return TilePoly.from_series(d.with_validity(self.validity))

    def axes(self):
        return tuple(range(len(self.center)))

    def text(self):
        c = ", ".join(repr(v) for v in self.center)
        return f"poly[{self.order}]@({c})#{self.digest}"
