import math

import numpy as np
import pytest

import foamck.expr as E
from foamck.config import RunConfig
from foamck.errors import BudgetViolation, CoverageLoss, ParseError, RadiusCollapse
from foamck.gck import (CompactExhaustion, GlobalSolution, column_boxes, construct_global_solution,
                        continue_solution, cutoff_deltas, grid_points, march_column, parse_pde,
                        shrink_measure, verify_residual)
from foamck.nets import retag
from foamck.series import ck_solve_local, evaluate_series
from foamck.sets import SingPrimitive, SingularitySet, Tag, measure_bound

from conftest import riccati_curve_distance

SQUARE = E.DomainBox((0.0, 0.0), (1.0, 1.0))


def t_coeffs(s):
    return [s.coeff((k,) + (0,) * (s.dim - 1)) for k in range(s.order + 1)]


# -- problem files ---------------------------------------------------------------------

@pytest.mark.parametrize("g", ["J[0,(1)]", "J[0,(0)]^2"])
def test_first_order_problems_parse(g):
    pde, data = parse_pde(f"domain 0 1 0 1\nm 1\nG {g}\ng0 sin(y1)\n")
    assert pde.order == 1 and pde.dim == 2 and pde.t0 == 0.0
    assert len(data.g) == 1


def test_time_derivative_of_order_m_rejected():
    with pytest.raises(ParseError) as info:
        parse_pde("domain 0 1 0 1\nm 1\nG J[1,(0)]\ng0 1\n")
    assert info.value.line == 3


@pytest.mark.parametrize("text, line", [
    ("domain 0 1 0 1\norder 1\nG J[0,(1)] +\ng0 1\n", 3),
    ("domain 0 1 0 1\norder 1\nG J[0,(2)]\ng0 1\n", 3),
    ("domain 0 1\norder 1\nwhat 3\n", 3),
    ("domain 0 1 0 1\norder 1\nG 0\n", 0),
])
def test_problem_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_pde(text)
    assert info.value.line == line


# -- continuation ------------------------------------------------------------------------

RICCATI_ONE = "domain 0 2 0 1; m 1; G J[0,(0)]^2; g0 1"


def test_geometric_series_recentered():
    pde, data = parse_pde(RICCATI_ONE)
    s = ck_solve_local(pde, data, (0.0, 0.5), 20)
    moved = continue_solution(pde, s, 0.5)
    c = t_coeffs(moved)
    # the induced value is the partial sum of 0.5^k; exact answer 2 * 2^k
    assert c[0] == pytest.approx(2 - 2 ** -20, abs=1e-15)
    assert all(c[k] == pytest.approx(c[0] ** (k + 1), rel=1e-12) for k in range(21))
    assert all(c[k] == pytest.approx(2 ** (k + 1), rel=1e-4) for k in range(21))


def test_polynomial_recentered():
    pde, data = parse_pde("domain -2 2 -2 2; t0 0; m 1; G J[0,(1)]; g0 y1")
    s = ck_solve_local(pde, data, (0.0, 0.3), 4)
    moved = continue_solution(pde, s, 1.25)
    assert moved.center == (1.25, 0.3)
    for x in [(0.0, 0.0), (1.0, -1.0), (2.0, 1.5)]:
        assert evaluate_series(moved, x) == pytest.approx(x[0] + x[1], abs=1e-14)


def test_continuation_past_pole_collapses():
    pde, data = parse_pde(RICCATI_ONE)
    s = ck_solve_local(pde, data, (0.0, 0.5), 40)
    with pytest.raises(RadiusCollapse):
        continue_solution(pde, s, 60.0)


def test_marching_finds_pole():
    pde, data = parse_pde(RICCATI_ONE)
    cfg = RunConfig(order=14, tile_y=1.0, sigma=0.3, h=0.02)
    col = march_column(pde, data, (0,), ((0.0, 1.0),), cfg)
    assert len(col.poles) == 1 and abs(col.poles[0] - 1.0) <= 2 * cfg.h
    assert col.tiles[0].t_lo == 0.0 and col.tiles[-1].t_hi == 2.0


# -- measure shrinking ---------------------------------------------------------------------

def test_two_slabs_get_geometric_widths():
    sigma = SingularitySet.finite(SQUARE, [SingPrimitive.box((0.2, 0.0), (0.3, 1.0)),
                                           SingPrimitive.box((0.6, 0.0), (0.7, 1.0))])
    out = shrink_measure(sigma, 0.01)
    widths = [p.widths[0] for p in out.all_primitives()]
    assert widths == pytest.approx([0.005, 0.0025], rel=1e-12)
    assert measure_bound(out).value <= 0.01


def test_degenerate_primitives_allowed_with_zero_budget():
    sigma = SingularitySet.finite(SQUARE, [SingPrimitive.point((0.5, 0.5)),
                                           SingPrimitive.box((0.4, 0.0), (0.4, 1.0))])
    out = shrink_measure(sigma, 0.0)
    assert measure_bound(out).value == 0.0 and len(out.all_primitives()) == 2


def test_fat_singularity_rejected():
    fat = SingularitySet.finite(SQUARE, [SingPrimitive.box((0.2, 0.0), (0.8, 1.0), core=0.6)])
    with pytest.raises(CoverageLoss):
        shrink_measure(fat, 0.05)


def test_gap_without_restart_is_budget_violation():
    # the forcing grows so fast that restarts past the first blow-up diverge at once,
    # leaving a gap too thick for the measure budget
    pde, data = parse_pde("domain 0 3 0 1; m 1; G J[0,(0)]^2 + exp(40 * t); g0 0")
    cfg = RunConfig(order=10, tile_y=1.0, sigma=0.3, h=0.02, epsilon=1e-3, restart_attempts=2)
    with pytest.raises(BudgetViolation):
        construct_global_solution(pde, data, cfg)


# -- zero problem ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def zero_solution():
    pde, data = parse_pde("domain 0 1 0 1; t0 0.5; m 1; G 0; g0 0")
    return construct_global_solution(pde, data, RunConfig(order=4, grid=8))


def test_zero_problem_has_zero_residual(zero_solution):
    rep = verify_residual(zero_solution)
    assert rep["passed"] and rep["region_sup"] == 0.0
    assert all(v == 0.0 for row in rep["sup_residual"] for v in row)
    assert zero_solution.sigma.is_empty
    assert zero_solution.stabilization_table() == [0] * zero_solution.cfg.levels


# -- transport ---------------------------------------------------------------------------------

def test_transport_singular_set_empty(transport):
    assert transport.sigma.is_empty
    assert transport.stabilization_table() == [0] * transport.cfg.levels


def test_transport_matches_closed_form(transport):
    for x in grid_points(transport.pde.domain, 12):
        assert transport.value(x, 3) == pytest.approx(math.sin(x[1] + x[0]), abs=1e-7)


def test_transport_residual(transport):
    rep = verify_residual(transport, grid_points(transport.pde.domain, 20))
    assert rep["passed"] and rep["region_sup"] <= 1e-6 and rep["eventually_constant"]


def test_initial_data_reproduced_at_interior_surface():
    pde, data = parse_pde("domain 0 1 0 6.283185307179586; t0 0.5; order 2; G J[0,(2)];"
                          " g0 sin(y1); g1 cos(y1)")
    cfg = RunConfig(order=12, tile_y=0.5, grid=10)
    sol = construct_global_solution(pde, data, cfg)
    assert sol.sigma.is_empty
    for y in np.linspace(0.2, 6.0, 15):
        x = (0.5, float(y))
        for nu in (0, cfg.levels - 1):
            J = sol.jet(x, nu, 1)
            assert J.coeff((0, 0)) == pytest.approx(math.sin(y), abs=1e-9)
            assert J.coeff((1, 0)) == pytest.approx(math.cos(y), abs=1e-9)


def test_tag_ladder(transport):
    tags = transport.gen_functions()
    u, u1, u2 = tags["A_nd"], tags["A_BaireI"], tags["B_BaireI"]
    assert u.net is u1.net is u2.net
    assert retag(u, u2.tag).tag is u2.tag
    a = retag(u.derive((0, 1)), u2.tag)
    b = u2.derive((0, 1))
    assert a.net.term(2) == b.net.term(2)


def test_serialised_solution_round_trips(transport):
    back = GlobalSolution.from_dict(transport.pde, transport.data, transport.to_dict())
    assert back.to_dict() == transport.to_dict()
    x = (0.31, 2.2)
    assert back.value(x, 2) == transport.value(x, 2)


# -- riccati -----------------------------------------------------------------------------------

@pytest.mark.slow
def test_riccati_singular_set_tracks_curve(riccati):
    cfg = riccati.cfg
    prims = riccati.sigma.all_primitives()
    assert prims and riccati.sigma.tag == Tag.ND
    assert measure_bound(riccati.sigma).value <= cfg.epsilon
    mids = np.array([[(a + b) / 2 for a, b in zip(p.lower, p.upper)] for p in prims])
    assert riccati_curve_distance(mids).max() <= 2 * cfg.h


@pytest.mark.slow
def test_riccati_eventual_agreement(riccati):
    table = riccati.stabilization_table()
    V = len(table)
    # larger compacts come closer to the set, so they stabilise later
    assert table == sorted(table)
    for mu in range(V):
        final = riccati.restrict(riccati.term(V - 1), mu)
        for nu in range(table[mu], V):
            assert riccati.restrict(riccati.term(nu), mu) == final


@pytest.mark.slow
def test_riccati_matches_closed_form_off_curve(riccati):
    g = lambda y: 1 / (2 + math.sin(y))
    rng = np.random.default_rng(5)
    checked = 0
    for t, y in zip(rng.uniform(0, 4, 400), rng.uniform(0, 2 * math.pi, 400)):
        x = (float(t), float(y))
        if riccati_curve_distance(x)[0] < 0.5 or t >= 2 + math.sin(y):
            continue
        lvl = riccati.compacts.level(x)
        if lvl is None:
            continue
        checked += 1
        exact = g(y) / (1 - t * g(y))
        assert riccati.value(x, lvl) == pytest.approx(exact, abs=1e-4)
    assert checked > 50


# -- compacts ------------------------------------------------------------------------------------

def test_compacts_grow_and_avoid_sigma():
    sigma = SingularitySet.finite(SQUARE, [SingPrimitive.box((0.5, 0.0), (0.5, 1.0))])
    K = CompactExhaustion(SQUARE, sigma, cutoff_deltas(0.04, 4))
    assert K.disjoint_from_sigma()
    assert list(K.deltas) == sorted(K.deltas, reverse=True)
    x = (0.47, 0.5)
    assert K.level(x) is not None and K.contains(3, x)
    assert K.level((0.5, 0.5)) is None


def test_column_boxes_cover_y_range():
    boxes, counts = column_boxes(E.DomainBox((0, 0, 0), (1, 1, 2)), 0.5)
    assert counts == [2, 4] and len(boxes) == 8
    assert boxes[-1][1] == ((0.5, 1.0), (1.5, 2.0))
