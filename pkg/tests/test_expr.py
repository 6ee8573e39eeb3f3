import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import foamck.expr as E
from foamck.errors import PreconditionError
from foamck.parser import parse_expr

from strategies import fd_derivative, multi_index, points, smooth_exprs


def P(text, dim=2):
    return parse_expr(text, dim=dim)


# -- derivatives ----------------------------------------------------------------

def test_chain_rule_on_shifted_sine():
    d = E.differentiate(P("sin(y1 + t)"), (1, 0))
    assert d == P("cos(y1 + t)")


def test_derivative_of_constant_is_zero():
    assert E.is_const(E.differentiate(P("5"), (0, 1)), 0)


@pytest.mark.parametrize("p", [(0,), (1,), (2,), (3,), (5,)])
def test_bump_derivatives_vanish_outside_support(p):
    b = E.bump(0.0, 1.0)
    d = E.differentiate(b, p)
    assert E.evaluate(d, (2.0,)) == 0.0
    # independent oracle: a stencil around x = 2 sees only zeros
    assert fd_derivative(lambda x: E.evaluate(b, x), (2.0,), p, h=0.05) == 0.0


def test_bump_first_derivative_matches_stencil_inside():
    b = E.bump(0.0, 1.0)
    for x in (-0.5, 0.1, 0.7):
        sym = E.evaluate(E.differentiate(b, (1,)), (x,))
        num = fd_derivative(lambda z: E.evaluate(b, z), (x,), (1,), h=0.01)
        assert sym == pytest.approx(num, abs=1e-9)


def test_negative_multi_index_rejected():
    with pytest.raises(PreconditionError):
        E.differentiate(P("t"), (-1, 0))


# -- evaluation -----------------------------------------------------------------

def test_product_of_coordinates():
    assert E.evaluate(P("t * y1"), (2.0, 3.0)) == 6.0


def test_bump_value_at_center():
    assert E.evaluate(E.bump(0.0, 1.0), (0.0,)) == pytest.approx(math.exp(-1), rel=1e-15)


def test_sine_at_pi():
    assert abs(E.evaluate(P("sin(t)", dim=1), (math.pi,))) <= 1e-12


def test_pi_constant():
    assert E.evaluate(P("pi", dim=1), (0.0,)) == math.pi


# -- support --------------------------------------------------------------------

@pytest.mark.parametrize("x", [1.0, -1.0, 1.5, -7.0])
def test_bump_zero_outside_unit_ball(x):
    assert E.evaluate(E.bump(0.0, 1.0), (x,)) == 0.0


def test_support_box_of_bump():
    assert E.support_box(E.bump(0.5, 0.25)) == (((0.25, 0.75),),)


def test_support_of_sum_is_union():
    boxes = E.support_box(P("bump(0,1) + bump(3,1)", dim=1))
    assert sorted(boxes) == [((-1.0, 1.0),), ((2.0, 4.0),)]


def test_support_of_analytic_function_unknown():
    assert E.support_box(P("sin(t)", dim=1)) is None


def test_support_of_product_is_factor_support():
    assert E.support_box(P("bump(0,1) * sin(t)", dim=1)) == (((-1.0, 1.0),),)


def test_outside_support_gap():
    b = E.bump((0.0, 0.0), 1.0)
    assert E.outside_support(b, (3.0, 0.5)) == pytest.approx(2.0)
    assert E.outside_support(b, (0.5, 0.5)) == 0.0
    assert E.outside_support(P("sin(t)"), (9.0, 9.0)) == 0.0


def test_bump_must_fit_domain():
    dom = E.DomainBox((0.0,), (1.0,))
    with pytest.raises(PreconditionError):
        E.bump(0.1, 0.2, dom)
    with pytest.raises(PreconditionError):
        E.bump(0.5, 0.0)


# -- properties -----------------------------------------------------------------

@settings(max_examples=40)
@given(smooth_exprs(), points(), multi_index(max_order=3))
def test_symbolic_derivative_matches_stencil(e, x, p):
    f = lambda z: E.evaluate(e, z)
    try:
        sym = E.evaluate(E.differentiate(e, p), x)
        scale = max(abs(f(x)), 1.0)
    except (OverflowError, ZeroDivisionError):
        assume(False)
    assume(abs(sym) < 1e4 and scale < 1e4)
    num = fd_derivative(f, x, p, h=0.02, half_width=6)
    assert abs(sym - num) <= max(1e-6, 1e-6 * abs(sym))


bump_exprs = st.tuples(
    st.lists(st.tuples(points(lo=-2, hi=2), st.floats(0.1, 1.0)), min_size=1, max_size=3),
    smooth_exprs(max_leaves=3),
).map(lambda bs: E.mul(E.sum_of(E.bump(c, r) for c, r in bs[0]), bs[1]))


@given(bump_exprs, points(lo=-4, hi=4))
def test_value_vanishes_outside_support_boxes(e, x):
    boxes = E.support_box(e)
    assert boxes is not None
    inside = any(all(lo <= v <= hi for v, (lo, hi) in zip(x, box)) for box in boxes)
    assume(not inside)
    assert E.evaluate(e, x) == 0.0


@settings(max_examples=30)
@given(smooth_exprs(max_leaves=4), multi_index(max_order=2), multi_index(max_order=2),
       st.lists(points(), min_size=100, max_size=100))
def test_derivatives_compose(e, p, q, xs):
    pq = tuple(a + b for a, b in zip(p, q))
    stacked = E.differentiate(E.differentiate(e, p), q)
    direct = E.differentiate(e, pq)
    # axes are processed in increasing order, so the trees coincide when q acts after p
    last_p = max((i for i, v in enumerate(p) if v), default=-1)
    first_q = min((i for i, v in enumerate(q) if v), default=len(q))
    if first_q >= last_p:
        assert stacked == direct
    for x in xs:
        try:
            a, b = E.evaluate(stacked, x), E.evaluate(direct, x)
        except (OverflowError, ZeroDivisionError):
            continue
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_free_vars_and_domain_box():
    assert E.free_vars(P("sin(y1) * t")) == {0, 1}
    dom = E.DomainBox((0, 0), (1, 2))
    assert dom.lengths == (1.0, 2.0)
    assert dom.contains((0.5, 1.0)) and not dom.contains((1.0, 1.0))
    with pytest.raises(PreconditionError):
        E.DomainBox((0,), (0,))
    assert np.isfinite(E.evaluate(P("exp(t)"), (1.0, 0.0)))
