"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances and budgets are fixed here; failures are reported, never relaxed.
"""

import json
import math
import time

import numpy as np
import pytest

import foamck.expr as E
from foamck.cli import EXIT_OK, _load_run, draw_samples, main
from foamck.gck import grid_points, parse_pde, verify_residual
from foamck.nets import (REFUTED, VERIFIED, IdealSpec, Net, check_I_membership,
                         check_J_membership, diagonal_embed, embed, example_one_net,
                         lemma2_monotonicity_check, net_add, net_derive, net_mul, replay_witness,
                         retag, zero_net)
from foamck.parser import parse_expr
from foamck.posets import NaturalPoset
from foamck.series import ck_solve_local, expand
from foamck.sets import (LimsupFamily, SingPrimitive, SingularitySet, Tag, constant_family,
                         dyadic_set, rational_set)

from conftest import PROBLEMS, RICCATI_CURVE, record_criterion, riccati_curve_distance

UNIT = E.DomainBox((0.0,), (1.0,))
NAT = NaturalPoset()

BASKET = ["sin(t)", "cos(t)", "exp(t)", "t", "t^2 + 1", "1", "-3", "t^3 - t", "sin(3*t) + 2",
          "cos(t)^2", "exp(-t) * t", "1/(2 + t)", "1/(1 + t^2)", "sin(t) * exp(t)",
          "t^5", "cos(7*t)", "exp(t^2)", "2 - t", "sin(t + 1) * cos(t)", "(t - 0.3)^2"]


def P(text):
    return parse_expr(text, dim=1)


def three_points():
    return SingularitySet.points(UNIT, [0.25, 0.5, 0.75])


def configured_sets():
    return {"three points": three_points(), "dyadics": dyadic_set(UNIT, 256),
            "rationals": rational_set(UNIT, 64)}


# -- 1 ----------------------------------------------------------------------------------

def test_criterion_01_off_diagonality():
    start = time.perf_counter()
    checks = false_verified = unreplayable = 0
    for sigma in configured_sets().values():
        xs = draw_samples(sigma, 5, 11)
        fam = constant_family(sigma, NAT)
        for psi in BASKET:
            w = diagonal_embed(P(psi), NAT)
            for v in (check_J_membership(w, sigma, xs), check_I_membership(w, sigma, fam, xs)):
                checks += 1
                if v.outcome != REFUTED:
                    false_verified += 1
                elif not all(replay_witness(w, wit) for wit in v.witnesses):
                    unreplayable += 1
    elapsed = time.perf_counter() - start
    ok = false_verified == 0 and unreplayable == 0 and elapsed <= 10
    assert record_criterion(1, ok, f"{checks} diagonal checks, {false_verified} not refuted, "
                                   f"{unreplayable} unreplayable witnesses, {elapsed:.2f}s <= 10s")


# -- 2 to 5 share their instances ----------------------------------------------------------

VERIFIED_CASES = []   # (net, sigma, family, samples) for the derivation-closure check


def test_criterion_02_example_one():
    start = time.perf_counter()
    lines, ok = [], True
    for name, sigma in configured_sets().items():
        _, w, fam = example_one_net(sigma)
        xs = draw_samples(sigma, 100, 2)
        v = check_I_membership(w, sigma, fam, xs)
        good = v.outcome == VERIFIED and not v.numeric_used and len(v.certificates) == 100
        ok &= good
        lines.append(f"{name}: {v.outcome}{' numeric' if v.numeric_used else ''}")
        if v.outcome == VERIFIED:
            VERIFIED_CASES.append((w, sigma, fam, xs))
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 30
    assert record_criterion(2, ok, f"{'; '.join(lines)}; {elapsed:.2f}s <= 30s")


def random_point_set(rng, lo=1, hi=8):
    ks = rng.choice(np.arange(1, 64), size=int(rng.integers(lo, hi + 1)), replace=False)
    return SingularitySet.points(UNIT, sorted(k / 64 for k in ks))


def random_net(rng, w, poset):
    kind = int(rng.integers(0, 4))
    if kind == 0:
        return w
    psi = P(BASKET[int(rng.integers(0, len(BASKET)))])
    if kind == 1:
        return net_mul(w, diagonal_embed(psi, poset))
    if kind == 2:
        return diagonal_embed(psi, poset)
    return net_add(w, zero_net(poset))


def test_criterion_03_representation_independence():
    rng = np.random.default_rng(303)
    discrepancies = 0
    for _ in range(50):
        sigma = random_point_set(rng)
        poset, w, fam = example_one_net(sigma)
        # second representation: the whole set at every index
        other = constant_family(sigma, poset)
        net = random_net(rng, w, poset)
        xs = draw_samples(sigma, 8, int(rng.integers(1 << 30)))
        a = check_I_membership(net, sigma, fam, xs)
        b = check_I_membership(net, sigma, other, xs)
        discrepancies += a.outcome != b.outcome
        if a.outcome == VERIFIED:
            VERIFIED_CASES.append((net, sigma, fam, xs))
    assert record_criterion(3, discrepancies == 0, f"50 instances, {discrepancies} discrepancies")


def test_criterion_04_monotonicity():
    rng = np.random.default_rng(404)
    violations = 0
    for _ in range(50):
        small = random_point_set(rng, 1, 6)
        extra = [p for p in random_point_set(rng, 1, 4).point_list()
                 if p not in small.point_list()]
        big = SingularitySet.points(UNIT, [p[0] for p in small.point_list() + extra])
        poset, w, fam = example_one_net(small)
        extra_prims = tuple(SingPrimitive.point(p) for p in extra)
        fam2 = LimsupFamily(poset, lambda lam, fam=fam, e=extra_prims: fam.members(lam) + e, 1)
        net = random_net(rng, w, poset)
        xs = draw_samples(big, 8, int(rng.integers(1 << 30)))
        rep = lemma2_monotonicity_check(net, small, fam, big, fam2, xs)
        violations += not rep["holds"]
        if rep["large"] == VERIFIED:
            VERIFIED_CASES.append((net, big, fam2, xs))
    assert record_criterion(4, violations == 0, f"50 instances, {violations} violations")


def test_criterion_05_derivation_closure():
    if not VERIFIED_CASES:
        pytest.fail("no verified nets collected from criteria 2-4")
    broken = 0
    for net, sigma, fam, xs in VERIFIED_CASES:
        for p in (1, 2):
            broken += check_I_membership(net_derive(net, (p,)), sigma, fam, xs).outcome != VERIFIED
    checks = 2 * len(VERIFIED_CASES)
    assert record_criterion(5, broken == 0, f"{checks} derived nets, {broken} lost membership")


# -- 6 ------------------------------------------------------------------------------------

def test_criterion_06_homomorphism_ladder():
    sigma = three_points()
    fam = constant_family(sigma, NAT)
    tags = {
        "A_nd": IdealSpec.I_family(Tag.ND, NAT, [(sigma, fam)]),
        "A_BaireI": IdealSpec.I_family(Tag.BAIRE_I, NAT, [(sigma, fam)]),
        "B_nd": IdealSpec.J_family(Tag.ND, NAT, [(sigma, None)]),
        "B_BaireI": IdealSpec.J_family(Tag.BAIRE_I, NAT, [(sigma, None)]),
    }
    paths = [["A_nd", "A_BaireI", "B_BaireI"], ["A_nd", "B_nd", "B_BaireI"], ["A_nd", "B_BaireI"]]
    mismatches = 0
    nets = [embed(P(psi), tags["A_nd"]) for psi in BASKET[:9]]
    nets.append(embed(E.bump(0.5, 0.2, UNIT), tags["A_nd"]))
    for u in nets:
        ends = []
        for path in paths:
            v = u
            for name in path[1:]:
                v = retag(v, tags[name])
            ends.append(v)
        mismatches += any(v.net is not u.net or v.tag is not tags["B_BaireI"] for v in ends)
        for p in ((1,), (2,)):
            a = retag(u, tags["B_BaireI"]).derive(p)
            b = retag(u.derive(p), tags["B_BaireI"])
            mismatches += any(a.net.term(n) != b.net.term(n) for n in range(4))
    assert record_criterion(6, mismatches == 0, f"10 nets, {len(paths)} paths, "
                                                f"{mismatches} mismatches")


# -- 7 ------------------------------------------------------------------------------------

def test_criterion_07_local_recursion():
    pde, data = parse_pde("domain -1 1 -1 1; t0 0; m 1; G J[0,(0)]^2; g0 1")
    ric = ck_solve_local(pde, data, (0.0, 0.0), 10)
    ric_ok = all(ric.coeff((k, 0)) == 1.0 for k in range(11))

    pde, data = parse_pde("domain -1 1 -1 1; t0 0; m 2; G -J[0,(0)]; g0 1; g1 0")
    cos = ck_solve_local(pde, data, (0.0, 0.0), 16)
    table = [0.0 if k % 2 else (-1) ** (k // 2) / math.factorial(k) for k in range(17)]
    cos_err = max(abs(cos.coeff((k, 0)) - table[k]) for k in range(17))

    exact = True
    worst = 0.0
    for g in ("y1^3 - 2*y1 + 5", "sin(y1)", "exp(y1) / 4"):
        pde, data = parse_pde(f"domain -1 1 -1 1; t0 0; m 1; G J[0,(1)]; g0 {g}")
        s = ck_solve_local(pde, data, (0.0, 0.3), 8)
        ref = expand(parse_expr(g.replace("y1", "(y1 + t)"), dim=2), (0.0, 0.3), 8)
        if g.startswith("y1^3"):
            exact &= np.array_equal(s.coeffs, ref.coeffs)
        else:
            # the reference expansion itself rounds; allow a few ulps of the largest term
            diff = np.abs(s.coeffs - ref.coeffs).max() / np.abs(ref.coeffs).max()
            worst = max(worst, diff)
            exact &= diff <= 8 * np.finfo(float).eps
    ok = ric_ok and cos_err <= 1e-15 and exact
    assert record_criterion(7, ok, f"riccati ones {ric_ok}, cos error {cos_err:.1e} <= 1e-15, "
                                   f"transport exact (polynomial) / {worst:.1e} rel (analytic)")


# -- 8, 9, 11: command-line runs -------------------------------------------------------------

@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    out = {}
    for problem in ("transport", "riccati"):
        for workers in (1, 4):
            d = tmp_path_factory.mktemp(f"{problem}-{workers}")
            start = time.perf_counter()
            code = main(["solve", str(PROBLEMS / f"{problem}.pde"), "--out", str(d),
                         "--frozen-clock", "--workers", str(workers)])
            out[problem, workers] = (code, d, time.perf_counter() - start)
    return out


def test_criterion_08_transport(runs):
    code, d, elapsed = runs["transport", 1]
    assert code == EXIT_OK
    start = time.perf_counter()
    sol = _load_run(d)
    grid = grid_points(sol.pde.domain, 50)
    rep = verify_residual(sol, grid, tol=1e-6)
    # the set is empty, so every grid point counts, including those near the boundary
    full_sup = max(abs(r) for x in grid for r in sol.residuals_at(x))
    elapsed += time.perf_counter() - start
    V = len(sol.deltas)
    agree = all(sol.restrict(sol.term(nu), mu) == sol.restrict(sol.term(V - 1), mu)
                for mu, first in enumerate(sol.stabilization_table()) for nu in range(first, V))
    ok = (sol.cfg.order == 12 and sol.sigma.is_empty and full_sup <= 1e-6 and rep["passed"]
          and rep["eventually_constant"] and agree and len(grid) == 2500 and elapsed <= 60)
    assert record_criterion(8, ok, f"N={sol.cfg.order}, sigma empty {sol.sigma.is_empty}, "
                                   f"sup residual {full_sup:.2e} <= 1e-6 on {len(grid)} points, "
                                   f"agreement {agree}, {elapsed:.1f}s <= 60s")


def _box_distance(points, lo, hi):
    gap = np.maximum(np.maximum(lo[None] - points[:, None], points[:, None] - hi[None]), 0.0)
    return np.sqrt((gap ** 2).sum(axis=2)).min(axis=1)


def test_criterion_09_riccati(runs):
    code, d, elapsed = runs["riccati", 1]
    assert code == EXIT_OK
    start = time.perf_counter()
    sol = _load_run(d)
    cfg = sol.cfg
    lo, hi = sol.sigma.arrays()
    # Hausdorff distance between the reported set and the curve t = 2 + sin y
    corners = np.concatenate([lo, hi])
    to_curve = riccati_curve_distance(corners).max()
    curve = RICCATI_CURVE[::10]
    to_sigma = _box_distance(curve, lo, hi).max()
    hausdorff = max(to_curve, to_sigma)
    measure = float(sum(np.prod(hi - lo, axis=1)))

    g = lambda y: 1 / (2 + math.sin(y))
    err_seeded = err_far = 0.0
    n_seeded = n_far = 0
    pts = grid_points(sol.pde.domain, 60)
    dist = riccati_curve_distance(pts)
    for x, dc in zip(pts, dist):
        lvl = sol.compacts.level(x)
        if dc < 0.5 or lvl is None:
            continue
        exact = g(x[1]) / (1 - x[0] * g(x[1]))
        worst = max(abs(sol.value(x, nu) - exact) for nu in (lvl, len(sol.deltas) - 1))
        if x[0] < 2 + math.sin(x[1]):
            err_seeded, n_seeded = max(err_seeded, worst), n_seeded + 1
        else:
            err_far, n_far = max(err_far, worst), n_far + 1
    rep = verify_residual(sol, grid_points(sol.pde.domain, 40), tol=1e-5, margin=0.5)
    elapsed += time.perf_counter() - start
    ok = (cfg.order == 14 and cfg.h == 0.02 and hausdorff <= 2 * cfg.h and measure <= 0.05
          and err_seeded <= 1e-4 and n_seeded > 100 and rep["passed"] and elapsed <= 300)
    assert record_criterion(
        9, ok, f"Hausdorff {hausdorff:.4f} <= {2 * cfg.h}, measure {measure:.2e} <= 0.05, "
               f"error {err_seeded:.2e} <= 1e-4 on {n_seeded} points before the blow-up "
               f"(beyond it, restarted branch differs from the formula by {err_far:.2e} on "
               f"{n_far} points), residual {rep['region_sup']:.2e}, {elapsed:.0f}s <= 300s")


def test_criterion_11_determinism(runs):
    same = []
    for problem in ("transport", "riccati"):
        (c1, d1, _), (c4, d4, _) = runs[problem, 1], runs[problem, 4]
        same.append(c1 == c4 == EXIT_OK and all(
            (d1 / f).read_bytes() == (d4 / f).read_bytes()
            for f in ("report.json", "solution.json", "samples.csv", "sigma.txt")))
    report = json.loads((runs["riccati", 1][1] / "report.json").read_text())
    ok = all(same) and report["generated"] == "1970-01-01T00:00:00+00:00"
    assert record_criterion(11, ok, f"workers 1 vs 4 byte-identical: transport {same[0]}, "
                                    f"riccati {same[1]}")


# -- 10 -----------------------------------------------------------------------------------

def nd_basket():
    bump_at = lambda c, r: E.bump(c, r, UNIT)
    nets = [zero_net(NAT)]
    nets += [diagonal_embed(P(psi), NAT) for psi in BASKET[:6]]
    for c in (0.25, 0.5, 0.75):
        nets.append(Net(NAT, lambda n, c=c: bump_at(c, 0.2 * 2.0 ** -n)))
        nets.append(Net(NAT, lambda n, c=c: E.mul(P("exp(t)"), bump_at(c, 0.1 / (n + 1)))))
    nets.append(Net(NAT, lambda n: P("sin(t)") if n < 5 else E.ZERO))
    nets.append(Net(NAT, lambda n: E.sum_of(bump_at(c, 0.2 / (n + 2)) for c in (0.25, 0.5, 0.75))))
    nets.append(Net(NAT, lambda n: bump_at(0.4, 0.05)))
    nets.append(Net(NAT, lambda n: E.mul(P(f"t^{n % 3}"), bump_at(0.75, 0.2 * 2.0 ** -n))))
    nets.append(Net(NAT, lambda n: bump_at(0.6, 0.3) if n % 2 else E.ZERO))
    nets.append(net_derive(Net(NAT, lambda n: bump_at(0.25, 0.2 * 2.0 ** -n)), (1,)))
    nets.append(Net(NAT, lambda n: E.mul(P("cos(t)"), bump_at(0.5, 0.4 / (n + 1)))))
    return nets


def test_criterion_10_j_and_i_agree():
    sigma = three_points()
    fam = constant_family(sigma, NAT)
    xs = draw_samples(sigma, 20, 10)
    nets = nd_basket()
    disagreements = []
    for i, w in enumerate(nets):
        a = check_J_membership(w, sigma, xs).outcome
        b = check_I_membership(w, sigma, fam, xs).outcome
        if a != b:
            disagreements.append((i, a, b))
    ok = len(nets) == 20 and not disagreements
    assert record_criterion(10, ok, f"{len(nets)} nets, disagreements {disagreements}")
