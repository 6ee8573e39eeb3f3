"""Nets of smooth expressions over index posets and desk-scale ideal membership.

Membership in the vanishing ideals quantifies over an infinite index set and
all derivative orders, so the checkers here are three-valued and budgeted:
``verified-at-scale`` carries a replayable certificate per sample point,
``refuted`` a replayable witness, ``inconclusive`` everything else.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

from . import expr as E
from .errors import PreconditionError, RepresentationError
from .posets import ExampleOnePoset, IndexPoset
from .sets import LimsupFamily, SingPrimitive, SingularitySet, Tag, limsup_contains

NUMERIC_ZERO = 1e-12

VERIFIED = "verified-at-scale"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"


# ---------------------------------------------------------------------------
# nets

class Net:
    """Lazy, memoised map ``lam -> Expr``.

    ``diagonal`` holds the common term when the net is known to be constant.
    """

    def __init__(self, poset, term_fn, diagonal=None, name=""):
        self.poset = poset
        self._term_fn = term_fn
        self.diagonal = diagonal
        self.name = name
        self._memo = {}

    def term(self, lam):
        got = self._memo.get(lam)
        if got is None:
            got = self._memo.setdefault(lam, self._term_fn(lam))
        return got

    __getitem__ = term

    def __repr__(self):
        return f"Net({self.name or '?'})"


def _same_poset(a, b):
    if a.poset is not b.poset and a.poset != b.poset:
        raise PreconditionError("nets live on different index posets")
    return a.poset


def diagonal_embed(psi, poset):
    psi = E.as_expr(psi)
    return Net(poset, lambda lam: psi, diagonal=psi, name=f"diag({psi})")


def zero_net(poset):
    return diagonal_embed(E.ZERO, poset)


def _combine(op, a, b, label):
    poset = _same_poset(a, b)
    diag = None
    if a.diagonal is not None and b.diagonal is not None:
        diag = op(a.diagonal, b.diagonal)
    return Net(poset, lambda lam: op(a.term(lam), b.term(lam)), diag,
               f"({a.name} {label} {b.name})")


def net_add(a, b):
    return _combine(E.add, a, b, "+")


def net_sub(a, b):
    return _combine(E.sub, a, b, "-")


def net_mul(a, b):
    return _combine(E.mul, a, b, "*")


def net_scale(w, c):
    c = E.as_expr(c)
    diag = E.mul(c, w.diagonal) if w.diagonal is not None else None
    return Net(w.poset, lambda lam: E.mul(c, w.term(lam)), diag, f"{c}*{w.name}")


def net_derive(w, p):
    p = tuple(p)
    diag = E.differentiate(w.diagonal, p) if w.diagonal is not None else None
    return Net(w.poset, lambda lam: E.differentiate(w.term(lam), p), diag, f"D{p}{w.name}")


# ---------------------------------------------------------------------------
# verdicts

def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(u) for k, u in v.items()}
    if isinstance(v, frozenset):
        return sorted(_jsonable(u) for u in v)
    if isinstance(v, (tuple, list)):
        return [_jsonable(u) for u in v]
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


@dataclass
class MembershipVerdict:
    outcome: str
    kind: str
    certificates: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)
    budgets: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def numeric_used(self):
        return any(c.get("numeric") for c in self.certificates)

    def to_dict(self):
        return {
            "outcome": self.outcome,
            "kind": self.kind,
            "certificates": _jsonable(self.certificates),
            "witnesses": _jsonable(self.witnesses),
            "budgets": self.budgets,
            "notes": self.notes,
            "numeric_used": self.numeric_used,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)


def multi_indices(dim, max_order):
    """All ``p`` with ``|p| <= max_order``, ordered by total degree."""
    out = []
    for total in range(max_order + 1):
        for p in itertools.product(range(total + 1), repeat=dim):
            if sum(p) == total:
                out.append(p)
    return out


def _local_part(e, x):
    """Drop summands whose support boxes miss ``x``; they vanish near ``x``."""
    if isinstance(e, E.Sum):
        return E.sum_of(t for t in e.terms if E.outside_support(t, x) == 0.0)
    return e


def _first_nonzero_derivative(e, x, orders):
    local = _local_part(e, x)
    for p in orders:
        d = E.differentiate(local, p) if any(p) else local
        v = E.evaluate(d, x)
        if abs(v) > NUMERIC_ZERO:
            return p, float(v)
    return None


def replay_witness(net, witness):
    """True when the recorded derivative is still nonzero at the recorded point."""
    e = net.term(_unjson_index(witness["mu"]))
    v = E.evaluate(E.differentiate(e, tuple(witness["p"])), tuple(witness["x"]))
    return abs(v) > NUMERIC_ZERO


def replay_certificate(net, cert):
    """Re-check every support-gap claim of a per-sample certificate."""
    x = tuple(cert["x"])
    for entry in cert["tail"]:
        e = net.term(_unjson_index(entry["mu"]))
        if entry["numeric"]:
            if _first_nonzero_derivative(e, x, multi_indices(len(x), cert["max_order"])):
                return False
        elif E.outside_support(e, x) < entry["gap"] * (1 - 1e-12):
            return False
        box = entry.get("delta")
        if box is not None:
            if not all(lo < v < hi for v, (lo, hi) in zip(x, box)):
                return False
    return True


def _unjson_index(mu):
    if isinstance(mu, list):
        if len(mu) == 2 and isinstance(mu[0], (list, frozenset)) and isinstance(mu[1], int):
            return (frozenset(mu[0]), mu[1])
        return frozenset(mu)
    return mu


def _scan_sample(w, x, budget, max_order, check_mu):
    """Look for a threshold ``lam`` on the poset chain whose tail passes ``check_mu``.

    Returns ``("ok", lam, entries)``, ``("violation", witness)`` or
    ``("blocked", None)``.
    """
    orders = multi_indices(len(x), max_order)
    last_violation = None
    numeric_fallback = None
    for lam in w.poset.chain(budget):
        entries = []
        ok = True
        for mu in w.poset.tail(lam, budget):
            status, info = check_mu(mu, w.term(mu), orders)
            if status == "violation":
                p, value = info
                last_violation = {"x": list(x), "mu": mu, "p": list(p), "value": value}
                ok = False
                break
            if status == "blocked":
                ok = False
                break
            entries.append(dict(info, mu=mu))
        if ok:
            if not any(e["numeric"] for e in entries):
                return "ok", lam, entries
            # keep looking for a threshold certified by supports alone
            numeric_fallback = numeric_fallback or (lam, entries)
    if numeric_fallback is not None:
        return "ok", numeric_fallback[0], numeric_fallback[1]
    if last_violation is not None:
        return "violation", last_violation, None
    return "blocked", None, None


def _aggregate(kind, w, per_sample, budgets):
    certs, witnesses, notes = [], [], []
    any_open = False
    for x, (status, a, b) in per_sample:
        if status == "ok":
            certs.append({"x": list(x), "lam": a, "tail": b, "max_order": budgets["max_order"],
                          "numeric": any(e["numeric"] for e in b)})
        elif status == "violation":
            witnesses.append(a)
        else:
            any_open = True
    if witnesses and w.diagonal is not None:
        outcome = REFUTED
    elif witnesses or any_open:
        outcome = INCONCLUSIVE
        if witnesses:
            notes.append("violations found at every examined threshold of a non-constant net")
    else:
        outcome = VERIFIED
    return MembershipVerdict(outcome, kind, certs, witnesses, budgets, notes)


def _check_samples(sigma, samples):
    xs = [tuple(float(v) for v in x) for x in samples]
    if not xs:
        raise PreconditionError("no sample points")
    for x in xs:
        if len(x) != sigma.domain.dim:
            raise PreconditionError("sample dimension does not match the domain")
        if sigma.contains(x) is True:
            raise PreconditionError(f"sample {x} lies in the singularity set")
    return xs


def check_J_membership(w, sigma, samples, max_order=2, tail_budget=16):
    """All derivatives up to ``max_order`` eventually vanish at each sample."""
    if max_order < 0:
        raise PreconditionError("derivative order cap must be nonnegative")
    xs = _check_samples(sigma, samples)
    results = []
    for x in xs:
        def check_mu(mu, e, orders, x=x):
            gap = E.outside_support(e, x)
            if gap > 0:
                return "ok", {"gap": gap, "numeric": False}
            hit = _first_nonzero_derivative(e, x, orders)
            if hit is not None:
                return "violation", hit
            return "ok", {"gap": 0.0, "numeric": True}
        results.append((x, _scan_sample(w, x, tail_budget, max_order, check_mu)))
    budgets = {"samples": len(xs), "max_order": max_order, "tail_budget": tail_budget}
    return _aggregate("J", w, results, budgets)


def _spot_check_representation(family, sigma, samples, budget):
    for x in samples:
        if limsup_contains(family, x, budget).kind == "in":
            raise RepresentationError(f"representation places {x} in the limsup, outside the set")
    for prim in sigma.all_primitives()[:5]:
        if prim.is_point and limsup_contains(family, prim.lower, budget).kind == "out":
            raise RepresentationError(f"representation misses {prim.lower}")


def check_I_membership(w, sigma, family, samples, tail_budget=16, max_order=2):
    """Eventually ``w_mu`` vanishes on an open cube around each sample avoiding ``Sigma_mu``."""
    if family.poset is not w.poset and family.poset != w.poset:
        raise PreconditionError("representation and net use different posets")
    xs = _check_samples(sigma, samples)
    _spot_check_representation(family, sigma, xs, tail_budget)
    results = []
    for x in xs:
        def check_mu(mu, e, orders, x=x):
            if family.contains_at(mu, x):
                return "blocked", None
            sgap = family.distance_at(mu, x)
            gap = E.outside_support(e, x)
            if gap > 0:
                half = min(gap, sgap) / 2
                half = half if math.isfinite(half) else 1.0
                return "ok", {"gap": gap, "numeric": False,
                              "delta": [(v - half, v + half) for v in x]}
            hit = _first_nonzero_derivative(e, x, orders)
            if hit is not None:
                return "violation", hit
            half = sgap / 2 if math.isfinite(sgap) else 1.0
            return "ok", {"gap": 0.0, "numeric": True,
                          "delta": [(v - half, v + half) for v in x]}
        results.append((x, _scan_sample(w, x, tail_budget, max_order, check_mu)))
    budgets = {"samples": len(xs), "max_order": max_order, "tail_budget": tail_budget}
    return _aggregate("I", w, results, budgets)


# ---------------------------------------------------------------------------
# the bump-sum construction over (finite point set, radius level)

def _check_schedule(radius_schedule, levels):
    radii = [float(radius_schedule(k)) if callable(radius_schedule) else float(radius_schedule[k])
             for k in range(levels)]
    if any(not r > 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise PreconditionError("radius schedule must be positive and strictly decreasing")
    return radii


def example_one_net(sigma, radius_schedule=None, levels=40):
    """Sum of bumps over finite subsets of the points of ``sigma``, radius shrinking with level.

    Returns ``(poset, net, family)`` with ``family`` the matching limsup
    representation ``(A, k) -> A``.
    """
    pts = sigma.point_list()
    if not pts:
        raise PreconditionError("need at least one point")
    if radius_schedule is None:
        radius_schedule = lambda k: 2.0 ** -(k + 2)
    if not callable(radius_schedule):
        levels = min(levels, len(radius_schedule))
    radii = _check_schedule(radius_schedule, levels)
    dom = sigma.domain
    margins = [min(min(v - a, b - v) for v, (a, b) in zip(p, dom.as_pairs())) for p in pts]
    if any(m <= 0 for m in margins):
        raise PreconditionError("points must lie inside the open domain")
    poset = ExampleOnePoset(len(pts), levels)
    bumps = {}

    def bump_at(i, k):
        key = (i, k)
        got = bumps.get(key)
        if got is None:
            r = min(radii[k], margins[i] / 2)
            got = bumps.setdefault(key, E.bump(pts[i], r, dom))
        return got

    def term(lam):
        A, k = lam
        return E.sum_of(bump_at(i, k) for i in sorted(A))

    prims = [SingPrimitive.point(p) for p in pts]
    family = LimsupFamily(poset, lambda lam: tuple(prims[i] for i in sorted(lam[0])), dom.dim)
    net = Net(poset, term, name="example-one")
    return poset, net, family


# ---------------------------------------------------------------------------
# ideals and generalized functions

IDEAL_KINDS = ("J_single", "J_family", "I_single", "I_family")


@dataclass(frozen=True, eq=False)
class IdealSpec:
    """Which vanishing ideal a quotient is taken by.

    Single kinds carry one set (and, for I, its representation).  Family kinds
    carry the class tag bounding the family and the concrete members the
    checker tries, each ``(sigma, family_or_None)``.
    """

    kind: str
    poset: IndexPoset
    sigma: SingularitySet = None
    representation: LimsupFamily = None
    family_class: Tag = None
    members: tuple = ()

    def __post_init__(self):
        if self.kind not in IDEAL_KINDS:
            raise PreconditionError(f"unknown ideal kind {self.kind!r}")
        if self.kind.endswith("single") and self.sigma is None:
            raise PreconditionError("single-set ideal needs a set")
        if self.kind == "I_single" and self.representation is None:
            raise PreconditionError("I ideal needs a limsup representation")
        if self.kind.endswith("family") and self.family_class is None:
            raise PreconditionError("family ideal needs a class tag")

    @property
    def letter(self):
        return self.kind[0]

    @classmethod
    def J(cls, sigma, poset):
        return cls("J_single", poset, sigma)

    @classmethod
    def I(cls, sigma, family):
        return cls("I_single", family.poset, sigma, family)

    @classmethod
    def J_family(cls, tag, poset, members=()):
        return cls("J_family", poset, family_class=Tag(tag), members=tuple(members))

    @classmethod
    def I_family(cls, tag, poset, members=()):
        return cls("I_family", poset, family_class=Tag(tag), members=tuple(members))

    def class_tag(self):
        return self.family_class if self.family_class is not None else self.sigma.tag


def check_membership(w, spec, samples, max_order=2, tail_budget=16):
    """Dispatch to the checker of ``spec``; family ideals try each member."""
    if spec.kind == "J_single":
        return check_J_membership(w, spec.sigma, samples, max_order, tail_budget)
    if spec.kind == "I_single":
        return check_I_membership(w, spec.sigma, spec.representation, samples, tail_budget,
                                  max_order)
    if not spec.members:
        raise PreconditionError("family ideal has no concrete members to check against")
    verdicts = []
    for idx, (sigma, fam) in enumerate(spec.members):
        xs = [x for x in samples if sigma.contains(tuple(x)) is not True]
        if not xs:
            continue
        if spec.kind == "J_family":
            v = check_J_membership(w, sigma, xs, max_order, tail_budget)
        else:
            v = check_I_membership(w, sigma, fam, xs, tail_budget, max_order)
        if v.outcome == VERIFIED:
            v.notes.append(f"member {idx}")
            v.kind = spec.kind
            return v
        verdicts.append(v)
    if verdicts and all(v.outcome == REFUTED for v in verdicts):
        out = verdicts[0]
    else:
        out = next((v for v in verdicts if v.outcome == INCONCLUSIVE),
                   MembershipVerdict(INCONCLUSIVE, spec.kind))
    out.kind = spec.kind
    return out


@dataclass(frozen=True, eq=False)
class GenFunction:
    net: Net
    tag: IdealSpec

    def __post_init__(self):
        if self.net.poset is not self.tag.poset and self.net.poset != self.tag.poset:
            raise PreconditionError("tag and representative use different posets")

    def derive(self, p):
        return GenFunction(net_derive(self.net, p), self.tag)


def embed(psi, tag):
    return GenFunction(diagonal_embed(psi, tag.poset), tag)


def equal_modulo_ideal(u, v, samples, max_order=2, tail_budget=16):
    if u.tag is not v.tag:
        raise PreconditionError("values carry different ideal tags")
    return check_membership(net_sub(u.net, v.net), u.tag, samples, max_order, tail_budget)


def _same_set(a, b):
    if a is b:
        return True
    return (a.domain == b.domain and a.tag == b.tag and a.complete and b.complete
            and a.enumerate_from is None and b.enumerate_from is None
            and set(a.all_primitives()) == set(b.all_primitives()))


def ideal_included(src, dst):
    """Structural inclusion of the source ideal in the target ideal.

    Edges: I(S) in J(S); single in family when the set's class fits; I family in
    I or J family of a larger class; J family in J family of a larger class.
    """
    if src.poset is not dst.poset and src.poset != dst.poset:
        return False
    if src is dst:
        return True
    s, d = src.kind, dst.kind
    if s.startswith("J") and d.startswith("I"):
        return False
    if s.endswith("single") and d.endswith("single"):
        return _same_set(src.sigma, dst.sigma) and (s == d or (s, d) == ("I_single", "J_single"))
    if d.endswith("single"):
        return False
    return src.class_tag() <= dst.family_class


def retag(u, target):
    if not ideal_included(u.tag, target):
        raise PreconditionError(f"cannot pass from {u.tag.kind} to {target.kind}: "
                                "inclusion of ideals is not derivable")
    return GenFunction(u.net, target)


# ---------------------------------------------------------------------------
# monotonicity in the singular set

def _subset_verified(small, big):
    big_prims = big.all_primitives()
    for p in small.all_primitives():
        if big.member is not None and p.is_point:
            if not big.contains(p.lower):
                return False
        elif not any(b.contains_box(p) for b in big_prims):
            return False
    return True


def lemma2_monotonicity_check(w, sigma, family, sigma2, family2, samples, tail_budget=16,
                              max_order=2):
    """Verified for the smaller set implies verified for the larger, on shared samples."""
    if not _subset_verified(sigma, sigma2):
        raise PreconditionError("first set is not contained in the second")
    xs = [x for x in samples if sigma2.contains(tuple(x)) is not True]
    small = check_I_membership(w, sigma, family, xs, tail_budget, max_order)
    large = check_I_membership(w, sigma2, family2, xs, tail_budget, max_order)
    holds = not (small.outcome == VERIFIED and large.outcome == REFUTED)
    strict = small.outcome != VERIFIED or large.outcome == VERIFIED
    return {"holds": holds, "strict": strict, "small": small.outcome,
            "large": large.outcome, "samples": len(xs)}
