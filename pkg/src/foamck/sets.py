"""Singularity sets, their families, and finite-resolution decision procedures.

Sets are unions of closed axis-aligned boxes.  Points and boxes with a
zero-width axis are closed and nowhere dense, so a finite union of them is
nowhere dense by construction; countable unions are handled by restartable
enumerations with a budget.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from .errors import ComplementNotDense, PreconditionError
from .expr import DomainBox
from .posets import FiniteSubsetPoset


class Tag(str, enum.Enum):
    ND = "ND"
    BAIRE_I = "BAIRE_I"
    DENSE_COMPLEMENT = "DENSE_COMPLEMENT"

    @property
    def rank(self):
        return ("ND", "BAIRE_I", "DENSE_COMPLEMENT").index(self.value)

    def __le__(self, other):
        return self.rank <= Tag(other).rank

    def join(self, other):
        return self if self.rank >= Tag(other).rank else Tag(other)


@dataclass(frozen=True)
class SingPrimitive:
    """Closed box ``[lower, upper]``; a point when the bounds coincide.

    ``core`` is the thickness a thin slab must keep to cover its blow-up locus
    (zero for points and degenerate boxes).
    """

    lower: tuple
    upper: tuple
    core: float = 0.0

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise PreconditionError(f"invalid primitive bounds {lo} {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, coords):
        if isinstance(coords, (int, float, Fraction)):
            coords = (coords,)
        return cls(tuple(coords), tuple(coords))

    @classmethod
    def box(cls, lower, upper, core=0.0):
        return cls(tuple(lower), tuple(upper), core)

    @property
    def is_point(self):
        return self.lower == self.upper

    @property
    def is_degenerate(self):
        return any(a == b for a, b in zip(self.lower, self.upper))

    @property
    def widths(self):
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def volume(self):
        return math.prod(self.widths)

    def contains(self, x):
        return all(a <= v <= b for a, v, b in zip(self.lower, x, self.upper))

    def contains_box(self, other):
        return all(a <= c and d <= b for a, b, c, d in
                   zip(self.lower, self.upper, other.lower, other.upper))

    def to_line(self):
        if self.is_point:
            return "point " + " ".join(repr(v) for v in self.lower)
        body = " ".join(f"{a!r} {b!r}" for a, b in zip(self.lower, self.upper))
        return f"box {body}" + (f" core {self.core!r}" if self.core else "")


def _arrays(prims, n):
    if not prims:
        return np.empty((0, n)), np.empty((0, n))
    lo = np.array([p.lower for p in prims], dtype=float)
    hi = np.array([p.upper for p in prims], dtype=float)
    return lo, hi


@dataclass(frozen=True, eq=False)
class SingularitySet:
    """A singularity set with class tag.

    ``primitives`` holds the explicit finite part.  ``enumerate_from`` (a
    zero-argument factory returning a fresh iterator) describes countable sets;
    only the first ``budget`` primitives are ever materialised.  ``complete``
    records whether those cover the whole set.
    """

    domain: DomainBox
    tag: Tag = Tag.ND
    primitives: tuple = ()
    enumerate_from: Callable = None
    budget: int = 0
    complete: bool = True
    epsilon: float = None
    member: Callable = None

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(self.tag))
        object.__setattr__(self, "primitives", tuple(self.primitives))
        for p in self.primitives:
            if len(p.lower) != self.domain.dim:
                raise PreconditionError("primitive dimension does not match the domain")

    # construction helpers ---------------------------------------------------
    @classmethod
    def empty(cls, domain):
        return cls(domain, Tag.ND, ())

    @classmethod
    def finite(cls, domain, prims, tag=Tag.ND):
        return cls(domain, tag, tuple(prims))

    @classmethod
    def points(cls, domain, pts, tag=Tag.ND):
        return cls(domain, tag, tuple(SingPrimitive.point(p) for p in pts))

    @classmethod
    def enumerated(cls, domain, factory, budget, tag=Tag.BAIRE_I, complete=False):
        return cls(domain, tag, (), factory, budget, complete)

    def retag(self, tag):
        return SingularitySet(self.domain, tag, self.primitives, self.enumerate_from,
                              self.budget, self.complete, self.epsilon, self.member)

    # access -------------------------------------------------------------------
    def all_primitives(self):
        cached = self.__dict__.get("_all")
        if cached is None:
            extra = ()
            if self.enumerate_from is not None:
                extra = tuple(itertools.islice(self.enumerate_from(), self.budget))
            cached = self.primitives + extra
            self.__dict__["_all"] = cached
        return cached

    def arrays(self):
        cached = self.__dict__.get("_arr")
        if cached is None:
            cached = _arrays(self.all_primitives(), self.domain.dim)
            self.__dict__["_arr"] = cached
        return cached

    @property
    def is_empty(self):
        return not self.all_primitives() and self.complete

    @property
    def nowhere_dense_by_construction(self):
        return all(p.is_degenerate for p in self.all_primitives())

    def point_list(self):
        prims = self.all_primitives()
        if not all(p.is_point for p in prims):
            raise PreconditionError("set is not enumerable as points")
        return [p.lower for p in prims]

    def contains_many(self, X):
        """Boolean membership for an ``(m, n)`` array against the enumerated primitives."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = self.arrays()
        out = np.zeros(X.shape[0], dtype=bool)
        if lo.shape[0] == 0:
            return out
        chunk = max(1, 2_000_000 // max(1, lo.shape[0] * X.shape[1]))
        for s in range(0, X.shape[0], chunk):
            Y = X[s:s + chunk, None, :]
            inside = np.all((lo[None] <= Y) & (Y <= hi[None]), axis=-1)
            out[s:s + chunk] = inside.any(axis=1)
        return out

    @property
    def decidable(self):
        return self.complete or self.member is not None

    def contains(self, x):
        """True/False, or None when ``x`` avoids the enumerated part of an undecidable set."""
        if self.member is not None:
            return bool(self.member(tuple(float(v) for v in x)))
        hit = bool(self.contains_many([x])[0])
        if hit:
            return True
        return False if self.complete else None

    def linf_distance(self, x):
        """L-infinity distance from ``x`` to the enumerated primitives (inf if none)."""
        lo, hi = self.arrays()
        if lo.shape[0] == 0:
            return math.inf
        x = np.asarray(x, dtype=float)
        per = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        return float(per.max(axis=1).min())


# ---------------------------------------------------------------------------
# standard enumerations on an interval

def dyadic_points(lo=0.0, hi=1.0, max_level=None):
    """Factory enumerating dyadic rationals of the interval by level (1/2, 1/4, 3/4, ...)."""
    def gen():
        level = 1
        while max_level is None or level <= max_level:
            den = 2 ** level
            for k in range(1, den, 2):
                r = k / den
                yield SingPrimitive.point((lo + (hi - lo) * r,))
            level += 1
    return gen


def rational_points(max_den, lo=0.0, hi=1.0):
    """Factory enumerating reduced fractions p/q of the interval with 2 <= q <= max_den."""
    def gen():
        for q in range(2, max_den + 1):
            for p in range(1, q):
                if math.gcd(p, q) == 1:
                    yield SingPrimitive.point((lo + (hi - lo) * p / q,))
    return gen


DYADIC_LEVEL_CAP = 40


def is_dyadic(value, lo=0.0, hi=1.0, max_level=DYADIC_LEVEL_CAP):
    """Exact test for ``lo + (hi-lo) k/2^j`` with ``j <= max_level``, strictly inside."""
    r = (Fraction(value) - Fraction(lo)) / (Fraction(hi) - Fraction(lo))
    if not 0 < r < 1:
        return False
    den = r.denominator
    return den & (den - 1) == 0 and den.bit_length() - 1 <= max_level


def dyadic_set(domain, budget, tag=Tag.BAIRE_I, max_level=DYADIC_LEVEL_CAP):
    """Dyadic points of an interval up to ``max_level``; the first ``budget`` are materialised.

    Every binary float is dyadic, so the set is capped at a finite level to keep
    points such as float(1/3) decidably outside.
    """
    lo, hi = domain.lower[0], domain.upper[0]
    return SingularitySet(domain, tag, (), dyadic_points(lo, hi, max_level), budget,
                          complete=budget >= 2 ** max_level - 1,
                          member=lambda x: is_dyadic(x[0], lo, hi, max_level))


def rational_set(domain, max_den, tag=Tag.BAIRE_I):
    total = sum(1 for _ in rational_points(max_den)())
    return SingularitySet.enumerated(domain, rational_points(max_den, domain.lower[0],
                                                             domain.upper[0]),
                                     total, tag, complete=True)


def slice_set(domain, axis, value):
    """The hyperplane slice ``x_axis = value`` across the domain (closed, nowhere dense)."""
    lo = list(domain.lower)
    hi = list(domain.upper)
    lo[axis] = hi[axis] = value
    return SingularitySet.finite(domain, [SingPrimitive.box(lo, hi)])


# ---------------------------------------------------------------------------
# operations

def _roundrobin(*factories):
    def gen():
        iters = [f() for f in factories]
        while iters:
            alive = []
            for it in iters:
                try:
                    yield next(it)
                    alive.append(it)
                except StopIteration:
                    pass
            iters = alive
    return gen


def union(a, b, h=None):
    """Union with joined class tag; revalidates the dense complement when ``h`` is given."""
    if a.domain != b.domain:
        raise PreconditionError("sets live in different ambient boxes")
    tag = a.tag.join(b.tag)
    if a.enumerate_from is None and b.enumerate_from is None:
        out = SingularitySet(a.domain, tag, a.primitives + b.primitives)
    else:
        fa = (lambda: iter(a.all_primitives()))
        fb = (lambda: iter(b.all_primitives()))
        total = len(a.all_primitives()) + len(b.all_primitives())
        member = None
        if a.decidable and b.decidable:
            member = (lambda x: bool(a.contains(x)) or bool(b.contains(x)))
        out = SingularitySet(a.domain, tag, (), _roundrobin(fa, fb), total,
                             a.complete and b.complete, member=member)
    if h is not None:
        verdict = is_complement_dense_at(out, h)
        if verdict.outcome is False:
            raise ComplementNotDense("union has a complement that is not dense", verdict.cell)
    return out


class DensityVerdict(NamedTuple):
    outcome: object  # True, False, or None (inconclusive)
    witnesses: dict  # cell index -> witness point outside the set
    cell: tuple      # first failing (or undecided) cell, else None


def _cells(domain, h):
    counts = [max(1, math.ceil(L / h - 1e-12)) for L in domain.lengths]
    return counts, [L / c for L, c in zip(domain.lengths, counts)]


def is_complement_dense_at(sigma, h, samples_per_cell=3, seed=0, sampler="random"):
    """Check that every h-cell of the domain grid holds a point verifiably outside ``sigma``.

    ``sampler='random'`` uses the cell center plus seeded random points;
    ``sampler='nodes'`` samples only the lattice of spacing h/2.
    """
    dom = sigma.domain
    if not h > 0 or any(h >= L for L in dom.lengths):
        raise PreconditionError("resolution must be positive and below every axis length")
    counts, sizes = _cells(dom, h)
    n = dom.dim
    cell_ids = list(itertools.product(*(range(c) for c in counts)))
    lo_cells = np.array([[dom.lower[i] + idx[i] * sizes[i] for i in range(n)]
                         for idx in cell_ids])
    if sampler == "random":
        rng = np.random.default_rng(seed)
        offs = [np.full((len(cell_ids), n), 0.5)]
        for _ in range(samples_per_cell - 1):
            offs.append(rng.uniform(0.05, 0.95, size=(len(cell_ids), n)))
        per_cell = [lo_cells + o * np.array(sizes) for o in offs]
        samples = np.stack(per_cell, axis=1)  # (cells, s, n)
    elif sampler == "nodes":
        step = h / 2
        node_axes = []
        for i in range(n):
            k = np.arange(1, math.ceil(dom.lengths[i] / step) + 1)
            pts = dom.lower[i] + k * step
            node_axes.append(pts[pts < dom.upper[i]])
        all_nodes = np.array(list(itertools.product(*node_axes)))
        samples_list = []
        width = 0
        for c, lo in zip(cell_ids, lo_cells):
            hi = lo + np.array(sizes)
            sel = all_nodes[np.all((all_nodes >= lo - 1e-12) & (all_nodes <= hi + 1e-12), axis=1)]
            samples_list.append(sel)
            width = max(width, len(sel))
        samples = np.full((len(cell_ids), max(width, 1), n), np.nan)
        for j, sel in enumerate(samples_list):
            samples[j, :len(sel)] = sel
    else:
        raise PreconditionError(f"unknown sampler {sampler!r}")

    flat = samples.reshape(-1, n)
    valid = ~np.isnan(flat).any(axis=1)
    inside = np.ones(flat.shape[0], dtype=bool)
    if sigma.member is not None:
        inside[valid] = [sigma.contains(x) for x in flat[valid]]
    else:
        inside[valid] = sigma.contains_many(flat[valid])
    inside = inside.reshape(samples.shape[:2])
    witnesses = {}
    undecided = None
    for j, cid in enumerate(cell_ids):
        free = np.nonzero(~inside[j])[0]
        if free.size == 0:
            return DensityVerdict(False, witnesses, cid)
        if not sigma.decidable:
            undecided = undecided or cid
            continue
        witnesses[cid] = tuple(float(v) for v in samples[j, free[0]])
    if undecided is not None:
        return DensityVerdict(None, witnesses, undecided)
    return DensityVerdict(True, witnesses, None)


class MeasureBound(NamedTuple):
    value: float
    partial: bool


def measure_bound(sigma):
    """Sum of primitive volumes: an upper bound on Lebesgue measure."""
    total = math.fsum(p.volume for p in sigma.all_primitives())
    return MeasureBound(total, not sigma.complete)


# ---------------------------------------------------------------------------
# limsup representations

@dataclass(frozen=True, eq=False)
class LimsupFamily:
    """``lam -> Sigma_lam``, each a finite tuple of closed primitives."""

    poset: object
    members: Callable
    dim: int

    def primitives_at(self, lam):
        cache = self.__dict__.setdefault("_cache", {})
        got = cache.get(lam)
        if got is None:
            prims = tuple(self.members(lam))
            got = (prims, _arrays(prims, self.dim))
            cache[lam] = got
        return got

    def contains_at(self, lam, x):
        _, (lo, hi) = self.primitives_at(lam)
        if lo.shape[0] == 0:
            return False
        x = np.asarray(x, dtype=float)
        return bool(np.any(np.all((lo <= x) & (x <= hi), axis=1)))

    def distance_at(self, lam, x):
        _, (lo, hi) = self.primitives_at(lam)
        if lo.shape[0] == 0:
            return math.inf
        x = np.asarray(x, dtype=float)
        per = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        return float(per.max(axis=1).min())


class LimsupVerdict(NamedTuple):
    kind: str        # 'in', 'out', 'inconclusive'
    lam: object = None


def limsup_contains(family, x, budget):
    """Decide ``x in limsup Sigma_lam`` on the poset's finite exploration."""
    poset = family.poset
    chain = poset.chain(budget)
    if not chain:
        return LimsupVerdict("inconclusive")
    # joins with chain elements already containing x are upper bounds worth trying
    hits = [lam for lam in chain if family.contains_at(lam, x)]
    for lam in chain:
        cands = itertools.chain(poset.tail(lam, budget), (poset.join(lam, h) for h in hits))
        if not any(family.contains_at(mu, x) for mu in cands):
            return LimsupVerdict("out", lam)
    return LimsupVerdict("in")


def constant_family(sigma, poset):
    """``Sigma_lam = Sigma`` for every index."""
    prims = sigma.all_primitives()
    return LimsupFamily(poset, lambda lam: prims, sigma.domain.dim)


def finite_subset_representation(sigma):
    """Nonvoid finite subsets ``A`` of the enumerated points, with ``Sigma_A = A``."""
    pts = sigma.point_list()
    if not pts:
        raise PreconditionError("empty set has no finite-subset representation")
    poset = FiniteSubsetPoset(len(pts))
    prims = [SingPrimitive.point(p) for p in pts]
    return LimsupFamily(poset, lambda A: tuple(prims[i] for i in sorted(A)), sigma.domain.dim)


# ---------------------------------------------------------------------------
# text form

def dump_sigma(sigma):
    dom = " ".join(f"{a!r} {b!r}" for a, b in sigma.domain.as_pairs())
    state = "complete" if sigma.complete else "partial"
    lines = [f"SIGMA {sigma.tag.value} {state} {dom}"]
    lines.extend(p.to_line() for p in sigma.all_primitives())
    return "\n".join(lines) + "\n"


def load_sigma(text):
    from .errors import ParseError
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln and not ln.startswith("#")]
    if not lines or not lines[0][1].startswith("SIGMA"):
        raise ParseError("missing SIGMA header", line=1)
    head = lines[0][1].split()
    try:
        tag = Tag(head[1])
        state = head[2]
        vals = [float(v) for v in head[3:]]
    except (IndexError, ValueError) as exc:
        raise ParseError(f"bad header: {exc}", line=lines[0][0]) from exc
    if len(vals) % 2 or state not in ("complete", "partial"):
        raise ParseError("bad header", line=lines[0][0])
    domain = DomainBox(tuple(vals[0::2]), tuple(vals[1::2]))
    prims = []
    for no, ln in lines[1:]:
        parts = ln.split()
        try:
            if parts[0] == "point":
                prims.append(SingPrimitive.point(tuple(float(v) for v in parts[1:])))
            elif parts[0] == "box":
                core = 0.0
                if "core" in parts:
                    k = parts.index("core")
                    core = float(parts[k + 1])
                    parts = parts[:k]
                nums = [float(v) for v in parts[1:]]
                prims.append(SingPrimitive.box(nums[0::2], nums[1::2], core))
            else:
                raise ValueError(f"unknown primitive {parts[0]!r}")
        except (ValueError, IndexError, PreconditionError) as exc:
            raise ParseError(str(exc), line=no) from exc
        if len(prims[-1].lower) != domain.dim:
            raise ParseError("primitive dimension mismatch", line=no)
    return SingularitySet(domain, tag, tuple(prims), complete=(state == "complete"))
