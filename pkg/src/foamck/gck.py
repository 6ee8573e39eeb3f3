"""Global solutions of ``D_t^m U = G(t, y, jets of U)`` off a closed nowhere dense set.

Pipeline: seed a local series on ``t = t0`` at each y-column center, march in
``t`` by re-expansion, record blow-ups as degenerate slabs of the singular set,
glue all local polynomials with smooth windows, and emit the sequence
``psi_nu = chi_nu * Psi`` whose cutoff ``chi_nu`` removes a shrinking
neighbourhood of the singular set.  On each compact ``K_mu`` the terms with
``nu >= mu`` are identical.
"""

from __future__ import annotations

import bisect
import itertools
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .config import RunConfig
from .errors import (BudgetViolation, CoverageLoss, NoSeed, ParseError, PreconditionError,
                     RadiusCollapse)
from .glue import TilePoly, Window, smooth_step_derivatives
from .nets import GenFunction, IdealSpec, Net, retag
from .parser import parse_expr
from .posets import NaturalPoset
from .series import (InitialData, TruncatedSeries, ck_recursion, ck_solve_local,
                     induced_data, ratio_distance, root_test_radius, validate_jets)
from .sets import (SingPrimitive, SingularitySet, Tag, constant_family, is_complement_dense_at,
                   measure_bound)


# ---------------------------------------------------------------------------
# problem statement

@dataclass(frozen=True, eq=False)
class PdeSystem:
    """``D_t^m U = G``; ``rhs`` is one expression or a tuple (systems)."""

    dim: int
    domain: E.DomainBox
    order: int
    t0: float
    rhs: object
    oracle: object = None
    config: dict = field(default_factory=dict)
    text: str = ""

    @property
    def rhs_list(self):
        return tuple(self.rhs) if isinstance(self.rhs, tuple) else (self.rhs,)


_STATEMENT = re.compile(r"^\s*([A-Za-z_][A-Za-z_0-9.]*)\s*(?:=\s*|\s+)(.*?)\s*$")


def _statements(text):
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0]
        for part in line.split(";"):
            if part.strip():
                yield no, part.strip()


def parse_pde(text):
    """Read a problem file into ``(PdeSystem, InitialData)``.

    Statements (one per line or ``;``-separated): ``dim n``, ``domain l1 u1 ...``,
    ``order m`` (or ``m``), ``t0 v``, ``G expr`` (``G<k>`` for system
    components), ``g<p> expr`` (``g<p>.<k>`` for component ``k``),
    ``oracle expr`` and ``config key value``.
    """
    values = {}
    lines = {}
    rhs = {}
    data = {}
    config = {}
    for no, stmt in _statements(text):
        m = _STATEMENT.match(stmt)
        if not m:
            raise ParseError(f"cannot read statement {stmt!r}", line=no)
        key, rest = m.group(1), m.group(2)
        if key == "m":
            key = "order"
        if key in ("dim", "domain", "order", "t0", "oracle"):
            values[key] = rest
            lines[key] = no
        elif key == "config":
            k, _, v = rest.partition(" ")
            if not v.strip():
                raise ParseError("config needs a key and a value", line=no)
            config[k.strip()] = v.strip()
        elif re.fullmatch(r"G\d*", key):
            rhs[int(key[1:] or 0)] = (rest, no)
        elif re.fullmatch(r"g\d+(\.\d+)?", key):
            p, _, comp = key[1:].partition(".")
            data[(int(comp or 0), int(p))] = (rest, no)
        else:
            raise ParseError(f"unknown statement {key!r}", line=no)

    def number(key, cast=float, default=None):
        if key not in values:
            if default is not None:
                return default
            raise ParseError(f"missing {key!r} statement", line=0)
        try:
            return cast(values[key])
        except ValueError as exc:
            raise ParseError(f"bad {key} value {values[key]!r}", line=lines[key]) from exc

    if "domain" not in values:
        raise ParseError("missing 'domain' statement", line=0)
    try:
        bounds = [float(E.evaluate(parse_expr(v), ())) for v in values["domain"].split()]
    except (ParseError, ValueError, IndexError) as exc:
        raise ParseError(f"bad domain: {exc}", line=lines["domain"]) from exc
    if len(bounds) % 2 or not bounds:
        raise ParseError("domain needs lower/upper pairs", line=lines["domain"])
    try:
        domain = E.DomainBox(tuple(bounds[0::2]), tuple(bounds[1::2]))
    except PreconditionError as exc:
        raise ParseError(str(exc), line=lines["domain"]) from exc
    dim = number("dim", int, domain.dim)
    if dim != domain.dim or dim < 1:
        raise ParseError("dim does not match the domain", line=lines.get("dim", 0))
    m = number("order", int)
    if m < 1:
        raise ParseError("order must be at least 1", line=lines["order"])
    t0 = number("t0", float, domain.lower[0])
    if not domain.lower[0] <= t0 <= domain.upper[0]:
        raise ParseError("t0 outside the domain", line=lines.get("t0", 0))
    if not rhs:
        raise ParseError("missing 'G' statement", line=0)
    K = max(rhs) + 1
    if sorted(rhs) != list(range(K)):
        raise ParseError("system components must be numbered 0..K-1", line=0)
    exprs = []
    for k in range(K):
        src, no = rhs[k]
        try:
            g = parse_expr(src, dim=dim, allow_jets=True)
            validate_jets((g,), m, dim, K)
        except ParseError as exc:
            raise ParseError(exc.message, pos=exc.pos, line=no) from exc
        except PreconditionError as exc:
            raise ParseError(str(exc), line=no) from exc
        exprs.append(g)
    comps = []
    for k in range(K):
        fns = []
        for p in range(m):
            if (k, p) not in data:
                raise ParseError(f"missing initial function g{p}" + (f".{k}" if k else ""), line=0)
            src, no = data[(k, p)]
            try:
                fns.append(parse_expr(src, dim=dim))
            except ParseError as exc:
                raise ParseError(exc.message, pos=exc.pos, line=no) from exc
        comps.append(tuple(fns))
    oracle = None
    if "oracle" in values:
        try:
            oracle = parse_expr(values["oracle"], dim=dim)
        except ParseError as exc:
            raise ParseError(exc.message, pos=exc.pos, line=lines["oracle"]) from exc
    try:
        init = InitialData(comps[0] if K == 1 else tuple(comps), t0)
    except PreconditionError as exc:
        raise ParseError(str(exc), line=0) from exc
    pde = PdeSystem(dim, domain, m, t0, exprs[0] if K == 1 else tuple(exprs), oracle,
                    config, text)
    return pde, init


# ---------------------------------------------------------------------------
# local continuation

def continue_solution(pde, s, t_new, sigma=None):
    """Re-expand ``s`` at ``(t_new, y_c)`` by re-running the recursion on induced data.

    When ``sigma`` is given the step must stay within ``sigma`` times the
    root-test radius along ``t``.  Raises ``RadiusCollapse`` on overflow.
    """
    step = abs(t_new - s.center[0])
    if sigma is not None:
        r = root_test_radius(s, 0)
        if step > sigma * r * (1 + 1e-12):
            raise PreconditionError(f"step {step:.3g} exceeds {sigma} x radius {r:.3g}")
    center = (float(t_new),) + tuple(s.center[1:])
    series = s if isinstance(s, (list, tuple)) else [s]
    arrays = [induced_data(c, pde.order, t_new) for c in series]
    out = ck_recursion(pde.rhs_list, pde.order, center, s.order if not isinstance(s, list)
                       else s[0].order, arrays)
    return out if isinstance(s, (list, tuple)) else out[0]


# ---------------------------------------------------------------------------
# column marching

@dataclass
class Tile:
    t_lo: float
    t_hi: float
    series: TruncatedSeries
    lo_edge: str        # 'domain', 'smooth' or 'sigma'
    hi_edge: str


@dataclass
class ColumnResult:
    index: tuple
    box: tuple          # y ranges
    tiles: list
    poles: list         # t positions of blow-ups
    slabs: list         # (t_a, t_b) gaps that could not be restarted
    steps: int = 0


def _seed(pde, data, center, N):
    s = ck_solve_local(pde, data, center, N)
    return s if not isinstance(s, list) else s[0]


def _march(pde, s, t_end, d, cfg):
    """March from ``s`` toward ``t_end`` (direction ``d``); tiles come in march order."""
    h = cfg.h
    m = pde.order
    rhs = pde.rhs_list
    ycen = tuple(s.center[1:])
    tiles, poles, slabs = [], [], []
    bound, edge = s.center[0], "seed"
    steps = 0

    def close(t_at, kind):
        a, b = sorted((bound, t_at))
        lo_e, hi_e = (edge, kind) if d > 0 else (kind, edge)
        tiles.append(Tile(a, b, s, lo_e, hi_e))

    while True:
        c = s.center[0]
        r = root_test_radius(s, 0)
        blown = r < h / 8 or steps >= cfg.max_steps
        s_next = None
        if not blown:
            step = min(cfg.tile_t, cfg.sigma * r)
            if d * (t_end - c) <= step:
                close(t_end, "domain")
                return tiles, poles, slabs, steps
            t_next = c + d * step
            try:
                s_next = continue_solution(pde, s, t_next, cfg.sigma)
                steps += 1
            except RadiusCollapse:
                blown = True
        if not blown:
            close(c + d * step / 2, "smooth")
            bound, edge = c + d * step / 2, "smooth"
            s = s_next
            continue
        dist = ratio_distance(s, 0)
        if not math.isfinite(dist) or dist > 4 * max(r, h):
            dist = r if math.isfinite(r) else h
        pole = c + d * dist
        if d * (t_end - pole) <= h / 8:
            close(t_end, "domain")
            return tiles, poles, slabs, steps
        close(pole, "sigma")
        poles.append(pole)
        restarted = False
        for j in range(cfg.restart_attempts):
            tr = pole + d * j * h / 4
            if d * (t_end - tr) <= h / 8:
                break
            zeros = [np.zeros((s.order + 1,) * (s.dim - 1)) for _ in range(m)]
            try:
                cand = ck_recursion(rhs, m, (tr,) + ycen, s.order, [zeros])[0]
            except RadiusCollapse:
                continue
            if root_test_radius(cand, 0) < h / 8:
                continue
            if j > 0:
                slabs.append(tuple(sorted((pole, tr))))
            s, bound, edge = cand, tr, "sigma"
            restarted = True
            break
        if not restarted:
            slabs.append(tuple(sorted((pole, t_end))))
            return tiles, poles, slabs, steps


def march_column(pde, data, index, box, cfg):
    """Seed at ``(t0, column center)`` and march both ways through the domain."""
    ycen = tuple((a + b) / 2 for a, b in box)
    center = (pde.t0,) + ycen
    try:
        seed = _seed(pde, data, center, cfg.order)
    except (RadiusCollapse, ZeroDivisionError, OverflowError) as exc:
        raise NoSeed(f"column {index}: seed at {center} diverges ({exc})") from exc
    lo, hi = pde.domain.lower[0], pde.domain.upper[0]
    fwd = _march(pde, seed, hi, +1, cfg) if pde.t0 < hi else ([], [], [], 0)
    bwd = _march(pde, seed, lo, -1, cfg) if pde.t0 > lo else ([], [], [], 0)
    tiles_f, tiles_b = fwd[0], list(reversed(bwd[0]))
    if tiles_f and tiles_b:
        first, last = tiles_f[0], tiles_b[-1]
        merged = Tile(last.t_lo, first.t_hi, seed, last.lo_edge, first.hi_edge)
        tiles = tiles_b[:-1] + [merged] + tiles_f[1:]
    else:
        tiles = tiles_b + tiles_f
    for t in tiles:
        if t.lo_edge == "seed":
            t.lo_edge = "domain"
        if t.hi_edge == "seed":
            t.hi_edge = "domain"
    poles = sorted(bwd[1] + fwd[1])
    slabs = sorted(bwd[2] + fwd[2])
    return ColumnResult(index, box, tiles, poles, slabs, fwd[3] + bwd[3])


def column_boxes(domain, tile_y):
    axes = []
    for lo, hi in domain.as_pairs()[1:]:
        count = max(1, math.ceil((hi - lo) / tile_y - 1e-12))
        w = (hi - lo) / count
        axes.append([(lo + i * w, lo + (i + 1) * w if i < count - 1 else hi)
                     for i in range(count)])
    out = []
    for idx in itertools.product(*(range(len(a)) for a in axes)):
        out.append((idx, tuple(axes[k][i] for k, i in enumerate(idx))))
    return out, [len(a) for a in axes]


# ---------------------------------------------------------------------------
# singular set assembly

def _sigma_from_columns(domain, columns, counts):
    prims = []
    for col in columns:
        for pole in col.poles:
            lo = (pole,) + tuple(a for a, _ in col.box)
            hi = (pole,) + tuple(b for _, b in col.box)
            prims.append(SingPrimitive.box(lo, hi))
        for a, b in col.slabs:
            lo = (a,) + tuple(u for u, _ in col.box)
            hi = (b,) + tuple(v for _, v in col.box)
            prims.append(SingPrimitive.box(lo, hi, core=b - a))
    # connectors across column faces join matching poles of neighbours
    by_index = {col.index: col for col in columns}
    for col in columns:
        for axis in range(len(counts)):
            nb = list(col.index)
            nb[axis] += 1
            other = by_index.get(tuple(nb))
            if other is None:
                continue
            face = col.box[axis][1]
            for p, q in zip(col.poles, other.poles):
                lo = [min(p, q)]
                hi = [max(p, q)]
                for k, (a, b) in enumerate(col.box):
                    if k == axis:
                        lo.append(face)
                        hi.append(face)
                    else:
                        lo.append(max(a, other.box[k][0]))
                        hi.append(min(b, other.box[k][1]))
                prims.append(SingPrimitive.box(lo, hi))
    return SingularitySet.finite(domain, prims, Tag.ND)


def shrink_measure(sigma, epsilon):
    """Rescale slab thicknesses to ``epsilon / 2^k`` (k = 1, 2, ...) along their thinnest axis.

    Degenerate primitives are kept.  A slab whose new thickness would drop
    below its ``core`` (the gap it must cover) raises ``CoverageLoss``.
    """
    if epsilon < 0:
        raise PreconditionError("measure budget must be nonnegative")
    out = []
    k = 0
    for p in sigma.all_primitives():
        if p.is_degenerate:
            out.append(p)
            continue
        k += 1
        widths = p.widths
        axis = min(range(len(widths)), key=lambda a: (widths[a], a))
        cross = math.prod(w for a, w in enumerate(widths) if a != axis)
        new = epsilon / 2 ** k / cross
        if new < p.core * (1 - 1e-12):
            raise CoverageLoss(f"slab {p.lower}-{p.upper} needs thickness {p.core:.3g} "
                               f"but the budget allows {new:.3g}")
        mid = (p.lower[axis] + p.upper[axis]) / 2
        lo, hi = list(p.lower), list(p.upper)
        lo[axis], hi[axis] = mid - new / 2, mid + new / 2
        out.append(SingPrimitive.box(lo, hi, p.core))
    return SingularitySet(sigma.domain, sigma.tag, tuple(out), epsilon=epsilon)


# ---------------------------------------------------------------------------
# compacts

@dataclass(frozen=True, eq=False)
class CompactExhaustion:
    """``K_mu = {x : dist(x, Sigma) >= delta_mu, dist(x, boundary) >= delta_mu}`` (L-infinity).

    ``deltas`` decrease, so the compacts increase.
    """

    domain: E.DomainBox
    sigma: SingularitySet
    deltas: tuple

    def distance(self, x):
        return self.sigma.linf_distance(x)

    def boundary_distance(self, x):
        return min(min(v - a, b - v) for v, (a, b) in zip(x, self.domain.as_pairs()))

    def level(self, x):
        """Smallest ``mu`` with ``x`` in ``K_mu``, or None."""
        d = min(self.distance(x), self.boundary_distance(x))
        for mu, delta in enumerate(self.deltas):
            if d >= delta:
                return mu
        return None

    def contains(self, mu, x):
        lvl = self.level(x)
        return lvl is not None and lvl <= mu

    def disjoint_from_sigma(self):
        return all(dl > 0 for dl in self.deltas)


def cutoff_deltas(h, levels):
    return tuple(h / 4 * 2 ** (levels - 1 - nu) for nu in range(levels))


# ---------------------------------------------------------------------------
# glued representative

def _balanced_product(factors):
    factors = list(factors)
    if not factors:
        return E.ONE
    while len(factors) > 1:
        nxt = [E.mul(factors[i], factors[i + 1]) for i in range(0, len(factors) - 1, 2)]
        if len(factors) % 2:
            nxt.append(factors[-1])
        factors = nxt
    return factors[0]


def _balanced_sum(terms):
    terms = [t for t in terms if not E.is_const(t, 0)]
    return E.sum_of(terms)


def _plateau_edges(lo, hi, delta):
    return (lo - delta, lo - delta / 2), (hi + delta / 2, hi + delta)


@dataclass
class TileWindow:
    """Blend edges of one tile along t."""

    t_rise: tuple
    t_fall: tuple


def _tile_windows(col, delta_min):
    out = []
    tiles = col.tiles
    for i, t in enumerate(tiles):
        lo_band = hi_band = None
        if t.lo_edge == "smooth":
            lo_band = 0.25 * min(t.t_hi - t.t_lo, tiles[i - 1].t_hi - tiles[i - 1].t_lo)
        elif t.lo_edge == "sigma":
            lo_band = min(delta_min / 4, 0.25 * (t.t_hi - t.t_lo))
        if t.hi_edge == "smooth":
            hi_band = 0.25 * min(t.t_hi - t.t_lo, tiles[i + 1].t_hi - tiles[i + 1].t_lo)
        elif t.hi_edge == "sigma":
            hi_band = min(delta_min / 4, 0.25 * (t.t_hi - t.t_lo))
        rise = (t.t_lo - lo_band, t.t_lo + lo_band) if lo_band else None
        fall = (t.t_hi - hi_band, t.t_hi + hi_band) if hi_band else None
        out.append(TileWindow(rise, fall))
    return out


def _window_taylor(rise, fall, v, kmax):
    """Taylor coefficients ``D^k w(v) / k!`` of a window profile."""
    out = np.zeros(kmax + 1)
    if rise is not None:
        a, b = rise
        if v <= a:
            return out
        if v < b:
            d = smooth_step_derivatives((v - a) / (b - a), kmax)
            return np.array([d[k] / (b - a) ** k / math.factorial(k) for k in range(kmax + 1)])
    if fall is not None:
        c, dd = fall
        if v >= dd:
            return out
        if v > c:
            s = smooth_step_derivatives((v - c) / (dd - c), kmax)
            res = np.array([-s[k] / (dd - c) ** k / math.factorial(k) for k in range(kmax + 1)])
            res[0] += 1.0
            return res
    out[0] = 1.0
    return out


def _axis_series(vals, axis, center, order):
    n = len(center)
    c = np.zeros((order + 1,) * n)
    idx = [0] * n
    for k, v in enumerate(vals):
        idx[axis] = k
        c[tuple(idx)] = v
    return TruncatedSeries(center, order, c)


def _shift_matrix(N, delta, order):
    """Rows ``j <= order`` of the re-expansion map ``c_k -> sum_k C(k, j) delta^(k-j) c_k``."""
    k = np.arange(N + 1)
    M = np.zeros((order + 1, N + 1))
    for j in range(order + 1):
        M[j, j:] = [math.comb(int(kk), j) * delta ** (kk - j) for kk in k[j:]]
    return M


def _taylor_at(s, x, order):
    """Taylor polynomial of the stored polynomial ``s`` about ``x``, cut to ``order``."""
    c = s.coeffs
    for axis in range(s.dim):
        M = _shift_matrix(s.order, x[axis] - s.center[axis], order)
        c = np.moveaxis(np.tensordot(M, c, axes=([1], [axis])), 0, axis)
    return TruncatedSeries(tuple(x), order, np.array(c))


class GlobalSolution:
    """Columns of tiles, the singular set, its compacts, and the cutoff-glued sequence."""

    def __init__(self, pde, data, cfg, columns, counts, sigma, notes=()):
        self.pde = pde
        self.data = data
        self.cfg = cfg
        self.columns = columns
        self.counts = counts
        self.sigma = sigma
        self.notes = list(notes)
        self.deltas = cutoff_deltas(cfg.h, cfg.levels)
        self.compacts = CompactExhaustion(pde.domain, sigma, self.deltas)
        self._windows = [_tile_windows(c, self.deltas[-1]) for c in columns]
        self._tstarts = [[t.t_lo for t in c.tiles] for c in columns]
        self._prim_lo, self._prim_hi = sigma.arrays()
        self._col_by_index = {c.index: i for i, c in enumerate(columns)}
        self._terms = {}
        self._psi = None

    # -- geometry ---------------------------------------------------------
    def _y_band(self, col, axis):
        a, b = col.box[axis]
        return 0.25 * (b - a)

    def _column_window(self, col, axis):
        lo, hi = self.pde.domain.as_pairs()[axis + 1]
        a, b = col.box[axis]
        beta = self._y_band(col, axis)
        rise = None if a <= lo else (a - beta, a + beta)
        fall = None if b >= hi else (b - beta, b + beta)
        return rise, fall

    def _near_columns(self, y):
        cand = []
        for axis, count in enumerate(self.counts):
            lo, hi = self.pde.domain.as_pairs()[axis + 1]
            w = (hi - lo) / count
            i = int(min(max((y[axis] - lo) // w, 0), count - 1))
            cand.append([j for j in (i - 1, i, i + 1) if 0 <= j < count])
        out = []
        for idx in itertools.product(*cand):
            ci = self._col_by_index[idx]
            col = self.columns[ci]
            if all(self._in_window(*self._column_window(col, a), y[a]) for a in range(len(y))):
                out.append(ci)
        return out

    @staticmethod
    def _in_window(rise, fall, v):
        lo = rise[0] if rise else -math.inf
        hi = fall[1] if fall else math.inf
        return lo < v < hi

    def _near_tiles(self, ci, t):
        starts = self._tstarts[ci]
        i = bisect.bisect_right(starts, t) - 1
        out = []
        for j in (i - 1, i, i + 1):
            if 0 <= j < len(starts):
                w = self._windows[ci][j]
                if self._in_window(w.t_rise, w.t_fall, t):
                    out.append(j)
        return out

    def locate(self, x):
        """``(column position, tile number, (t_lo, t_hi))`` of the tile containing ``x``."""
        for ci in self._near_columns(x[1:]):
            if not all(a <= v <= b for v, (a, b) in zip(x[1:], self.columns[ci].box)):
                continue
            for j in self._near_tiles(ci, x[0]):
                tile = self.columns[ci].tiles[j]
                if tile.t_lo <= x[0] <= tile.t_hi:
                    return ci, j, (tile.t_lo, tile.t_hi)
        return None

    # -- expressions --------------------------------------------------------
    def psi(self):
        """The glued function ``Psi`` (independent of ``nu``) as an expression."""
        if self._psi is None:
            n = self.pde.dim
            col_terms = []
            for ci, col in enumerate(self.columns):
                tile_terms = []
                for tile, w in zip(col.tiles, self._windows[ci]):
                    poly = TilePoly.from_series(tile.series)
                    win = Window(0, n, w.t_rise, w.t_fall)
                    tile_terms.append(E.mul(win, poly))
                phis = []
                for axis in range(n - 1):
                    rise, fall = self._column_window(col, axis)
                    if rise or fall:
                        phis.append(Window(axis + 1, n, rise, fall))
                col_terms.append(E.mul(_balanced_product(phis), _balanced_sum(tile_terms)))
            self._psi = _balanced_sum(col_terms)
        return self._psi

    def chi_factors(self, nu):
        delta = self.deltas[min(nu, len(self.deltas) - 1)]
        n = self.pde.dim
        out = []
        for p in self.sigma.all_primitives():
            wins = []
            for axis in range(n):
                rise, fall = _plateau_edges(p.lower[axis], p.upper[axis], delta)
                wins.append(Window(axis, n, rise, fall))
            out.append(E.sub(E.ONE, _balanced_product(wins)))
        return out

    def term(self, nu):
        """``psi_nu``; constant for ``nu`` beyond the last cutoff level."""
        nu = min(nu, len(self.deltas) - 1)
        got = self._terms.get(nu)
        if got is None:
            got = E.mul(_balanced_product(self.chi_factors(nu)), self.psi())
            self._terms[nu] = got
        return got

    def net(self):
        return Net(NaturalPoset(), self.term, name="psi")

    # -- restriction and stabilisation ----------------------------------------
    def _misses_compact(self, support, mu):
        """Every support box lies in the closed delta_mu-neighbourhood of one primitive."""
        if support is None or support.shape[0] == 0:
            return support is not None
        delta = self.deltas[mu]
        lo, hi = self._prim_lo, self._prim_hi
        if lo.shape[0] == 0:
            return False
        for box in support:
            inside = np.all((box[:, 0] >= lo - delta - 1e-15) & (box[:, 1] <= hi + delta + 1e-15),
                            axis=1)
            if not inside.any():
                return False
        return True

    def restrict(self, e, mu):
        """Canonical form of ``e`` on ``K_mu``: factors ``1 - w`` with ``w = 0`` there become 1."""
        if isinstance(e, E.Sub) and E.is_const(e.left, 1) and self._misses_compact(
                e.right.support, mu):
            return E.ONE
        if isinstance(e, E.Mul):
            left = self.restrict(e.left, mu)
            right = self.restrict(e.right, mu)
            if left is e.left and right is e.right:
                return e
            return E.mul(left, right)
        return e

    def stabilization_table(self):
        """For each compact, the first index from which restricted terms coincide."""
        V = len(self.deltas)
        table = []
        for mu in range(V):
            final = self.restrict(self.term(V - 1), mu)
            idx = V - 1
            for nu in range(V - 2, -1, -1):
                if self.restrict(self.term(nu), mu) == final:
                    idx = nu
                else:
                    break
            table.append(idx)
        return table

    # -- numeric evaluation -------------------------------------------------
    def _base_jet(self, x, order):
        n = self.pde.dim
        x = tuple(float(v) for v in x)
        total = TruncatedSeries.zeros(x, order)
        for ci in self._near_columns(x[1:]):
            col = self.columns[ci]
            phi = TruncatedSeries.constant(1.0, x, order)
            for axis in range(n - 1):
                rise, fall = self._column_window(col, axis)
                phi = phi * _axis_series(_window_taylor(rise, fall, x[axis + 1], order),
                                         axis + 1, x, order)
            for j in self._near_tiles(ci, x[0]):
                w = self._windows[ci][j]
                tw = _axis_series(_window_taylor(w.t_rise, w.t_fall, x[0], order), 0, x, order)
                total = total + phi * tw * _taylor_at(col.tiles[j].series, x, order)
        return total

    def _chi_jet(self, x, nu, order):
        delta = self.deltas[min(nu, len(self.deltas) - 1)]
        lo, hi = self._prim_lo, self._prim_hi
        chi = TruncatedSeries.constant(1.0, x, order)
        if lo.shape[0] == 0:
            return chi
        xa = np.asarray(x)
        dist = np.maximum(np.maximum(lo - xa, xa - hi), 0.0).max(axis=1)
        for k in np.nonzero(dist < delta)[0]:
            plateau = TruncatedSeries.constant(1.0, x, order)
            for axis in range(len(x)):
                rise, fall = _plateau_edges(lo[k, axis], hi[k, axis], delta)
                plateau = plateau * _axis_series(_window_taylor(rise, fall, x[axis], order),
                                                 axis, x, order)
            chi = chi * (TruncatedSeries.constant(1.0, x, order) - plateau)
        return chi

    def jet(self, x, nu, order=None):
        """Taylor polynomial of ``psi_nu`` about ``x`` to the given order (default ``m``)."""
        order = self.pde.order if order is None else order
        return self._chi_jet(tuple(x), nu, order) * self._base_jet(tuple(x), order)

    def value(self, x, nu):
        return float(self.jet(x, nu, 0).coeffs[(0,) * self.pde.dim])

    def residuals_at(self, x):
        """``D_t^m psi_nu - G(jets of psi_nu)`` at ``x`` for every cutoff level ``nu``."""
        m = self.pde.order
        x = tuple(float(v) for v in x)
        base = self._base_jet(x, m)
        d = self.sigma.linf_distance(x)
        out = []
        cached = None
        for nu, delta in enumerate(self.deltas):
            if d >= delta:
                # no cutoff factor reaches x: the term is Psi itself
                if cached is None:
                    cached = self._residual_from_jet(base, x)
                out.append(cached)
            else:
                out.append(self._residual_from_jet(self._chi_jet(x, nu, m) * base, x))
        return out

    def residual_at(self, x, nu):
        return self.residuals_at(x)[min(nu, len(self.deltas) - 1)]

    def _residual_from_jet(self, J, x):
        m = self.pde.order
        g = self.pde.rhs_list[0]
        vals = {}
        for jt in E.jets_in(g):
            alpha = (jt.p,) + tuple(jt.q)
            vals[(jt.component, jt.p, jt.q)] = J.coeff(alpha) * math.prod(
                math.factorial(a) for a in alpha)
        lhs = J.coeff((m,) + (0,) * (self.pde.dim - 1)) * math.factorial(m)
        return lhs - E.evaluate(g, x, vals)

    # -- tags ---------------------------------------------------------------
    def gen_functions(self):
        """Values in the nowhere-dense special algebra and its images up the ladder."""
        poset = NaturalPoset()
        fam = constant_family(self.sigma, poset)
        a_nd = IdealSpec.I_family(Tag.ND, poset, [(self.sigma, fam)])
        a_b1 = IdealSpec.I_family(Tag.BAIRE_I, poset, [(self.sigma, fam)])
        b_b1 = IdealSpec.J_family(Tag.BAIRE_I, poset, [(self.sigma, None)])
        u = GenFunction(Net(poset, self.term, name="psi"), a_nd)
        u1 = retag(u, a_b1)
        u2 = retag(u1, b_b1)
        return {"A_nd": u, "A_BaireI": u1, "B_BaireI": u2}

    # -- serialisation --------------------------------------------------------
    def to_dict(self):
        cols = []
        for col in self.columns:
            cols.append({
                "index": list(col.index),
                "box": [list(b) for b in col.box],
                "poles": col.poles,
                "slabs": [list(s) for s in col.slabs],
                "steps": col.steps,
                "tiles": [{
                    "t": [t.t_lo, t.t_hi],
                    "edges": [t.lo_edge, t.hi_edge],
                    "center": list(t.series.center),
                    "coeffs": [[list(a), v] for a, v in t.series.items()],
                } for t in col.tiles],
            })
        config = self.cfg.to_dict()
        config.pop("workers")   # results do not depend on it
        return {"counts": self.counts, "columns": cols, "config": config,
                "sigma": [[list(p.lower), list(p.upper), p.core]
                          for p in self.sigma.all_primitives()]}

    @classmethod
    def from_dict(cls, pde, data, payload):
        cfg = RunConfig().updated(payload["config"])
        N = cfg.order
        columns = []
        for c in payload["columns"]:
            tiles = []
            for t in c["tiles"]:
                mapping = {tuple(a): v for a, v in t["coeffs"]}
                s = TruncatedSeries.from_dict(mapping, tuple(t["center"]), N)
                tiles.append(Tile(t["t"][0], t["t"][1], s, t["edges"][0], t["edges"][1]))
            columns.append(ColumnResult(tuple(c["index"]), tuple(tuple(b) for b in c["box"]),
                                        tiles, c["poles"], [tuple(s) for s in c["slabs"]],
                                        c["steps"]))
        prims = [SingPrimitive.box(lo, hi, core) for lo, hi, core in payload["sigma"]]
        sigma = SingularitySet(pde.domain, Tag.ND, tuple(prims), epsilon=cfg.epsilon)
        return cls(pde, data, cfg, columns, payload["counts"], sigma)


# ---------------------------------------------------------------------------
# construction

def construct_global_solution(pde, data, cfg=None):
    cfg = (cfg or RunConfig()).validate(pde.domain)
    if pde.dim < 2:
        raise PreconditionError("the constructor needs at least one y axis")
    if len(pde.rhs_list) != 1:
        raise PreconditionError("global construction handles scalar equations")
    boxes, counts = column_boxes(pde.domain, cfg.tile_y)
    work = lambda item: march_column(pde, data, item[0], item[1], cfg)
    failures = []

    def guarded(item):
        try:
            return work(item)
        except NoSeed as exc:
            failures.append(str(exc))
            return None

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(guarded, boxes))
    else:
        results = [guarded(b) for b in boxes]
    if all(r is None for r in results):
        raise NoSeed("no column admits a convergent seed: " + "; ".join(sorted(failures)[:3]))
    if failures:
        raise NoSeed("columns without a convergent seed: " + "; ".join(sorted(failures)[:3]))
    sigma = _sigma_from_columns(pde.domain, results, counts)
    notes = []
    if any(not p.is_degenerate for p in sigma.all_primitives()):
        try:
            sigma = shrink_measure(sigma, cfg.epsilon)
        except CoverageLoss as exc:
            raise BudgetViolation(f"singular set cannot fit measure budget {cfg.epsilon}: "
                                  f"{exc}") from exc
    bound = measure_bound(sigma).value
    if bound > cfg.epsilon:
        raise BudgetViolation(f"measure bound {bound:.3g} exceeds budget {cfg.epsilon}")
    sigma = SingularitySet(pde.domain, Tag.ND, sigma.all_primitives(), epsilon=cfg.epsilon)
    if sigma.all_primitives():
        dense = is_complement_dense_at(sigma, cfg.h, seed=cfg.seed)
        if dense.outcome is not True:
            raise BudgetViolation(f"complement not dense at resolution {cfg.h} "
                                  f"(cell {dense.cell})")
    return GlobalSolution(pde, data, cfg, results, counts, sigma, notes)


# ---------------------------------------------------------------------------
# verification

def grid_points(domain, count):
    """Cell-center grid with ``count`` points per axis (avoids the boundary)."""
    axes = [np.linspace(a, b, count + 1)[:-1] + (b - a) / (2 * count) for a, b in domain.as_pairs()]
    return [tuple(float(v) for v in p) for p in itertools.product(*axes)]


def verify_residual(sol, points=None, tol=None, margin=None):
    """Residual sup per compact and per level, eventual-constancy check, and the verdict.

    The tolerance applies on the verification region: points of ``K_0`` at
    distance at least ``margin`` from the singular set.
    """
    cfg = sol.cfg
    tol = cfg.tol if tol is None else tol
    margin = cfg.verify_margin if margin is None else margin
    points = grid_points(sol.pde.domain, cfg.grid) if points is None else points
    V = len(sol.deltas)
    table = sol.stabilization_table()
    sup = [[0.0] * V for _ in range(V)]
    skipped = 0
    region_sup = 0.0
    region_count = 0
    constancy = True
    rows = []
    for x in points:
        lvl = sol.compacts.level(x)
        if lvl is None:
            skipped += 1
            continue
        res = sol.residuals_at(x)
        for mu in range(lvl, V):
            for nu in range(V):
                sup[mu][nu] = max(sup[mu][nu], abs(res[nu]))
            if any(res[nu] != res[table[mu]] for nu in range(table[mu], V)):
                constancy = False
        dist = sol.compacts.distance(x)
        in_region = lvl == 0 and dist >= margin
        if in_region:
            region_sup = max(region_sup, abs(res[-1]))
            region_count += 1
        rows.append((x, lvl, dist, res[-1], in_region))
    ok = constancy and region_sup <= tol and region_count > 0
    return {
        "passed": ok,
        "tol": tol,
        "margin": margin,
        "region_sup": region_sup,
        "region_points": region_count,
        "skipped_points": skipped,
        "eventually_constant": constancy,
        "stabilization": table,
        "sup_residual": sup,
        "rows": rows,
    }
