import math

import numpy as np
import pytest

from isr import bskernel, model, opalg, oracle
from isr.configmodels import BlackScholesParams, HestonParams
from isr.exceptions import OperatorDegreeException, TimeOrderException, UnsupportedOrderException
from isr.model import DRIFT, HALF_BETA_SQ, HALF_SIGMA_SQ, RHO_SIGMA_BETA, ExpansionPoint
from isr.opalg import DiffOperator

LOG100 = math.log(100.0)
POINT = ExpansionPoint(LOG100, 0.04)
HESTON_TABLE = model.taylor_coeffs(
    model.heston(HestonParams(kappa=1.15, theta=0.04, delta=0.2, rho=-0.4)), POINT
)


def test_compose_leibniz():
    d_x = DiffOperator.derivative(POINT, 1, 0)
    x = DiffOperator.monomial(POINT, 1, 0)
    assert (d_x @ x).as_dict() == {(1, 0, 1, 0): 1.0, (0, 0, 0, 0): 1.0}
    assert (x @ d_x).as_dict() == {(1, 0, 1, 0): 1.0}


def test_compose_second_derivative_of_square():
    d_yy = DiffOperator.derivative(POINT, 0, 2)
    y2 = DiffOperator.monomial(POINT, 0, 2)
    # d_y^2 y^2 = y^2 d_y^2 + 4 y d_y + 2
    assert (d_yy @ y2).as_dict() == {(0, 2, 0, 2): 1.0, (0, 1, 0, 1): 4.0, (0, 0, 0, 0): 2.0}


def test_operator_arithmetic():
    a = DiffOperator({(1, 0, 0, 0): 2.0, (0, 0, 1, 0): -1.0}, POINT)
    b = DiffOperator({(0, 0, 1, 0): 1.0, (0, 1, 0, 1): 3.0}, POINT)
    assert ((a + b) - b).as_dict() == a.as_dict()
    assert (a + b).as_dict() == {(1, 0, 0, 0): 2.0, (0, 1, 0, 1): 3.0}
    assert (2.0 * a).as_dict() == {(1, 0, 0, 0): 4.0, (0, 0, 1, 0): -2.0}
    assert (-a).as_dict() == {(1, 0, 0, 0): -2.0, (0, 0, 1, 0): 1.0}
    assert (a - a).is_zero()
    assert a.degree == 1 and b.order == 1 and len(b) == 2
    assert [term.coeff for term in a.terms()] == [-1.0, 2.0]


def test_operator_caps():
    with pytest.raises(OperatorDegreeException):
        DiffOperator.monomial(POINT, 3, 2)
    with pytest.raises(OperatorDegreeException):
        DiffOperator.derivative(POINT, 4, 3)


def test_operators_at_different_points_do_not_mix():
    other = ExpansionPoint(LOG100, 0.05)
    with pytest.raises(ValueError):
        DiffOperator.identity(POINT) + DiffOperator.identity(other)
    with pytest.raises(ValueError):
        DiffOperator.identity(POINT) @ DiffOperator.identity(other)


def test_apply_to_poly():
    op = DiffOperator({(0, 0, 2, 0): 1.0, (1, 0, 0, 1): 2.0}, POINT)
    # f = dx^3 + dx dy  ->  6 dx + 2 dx dx
    assert opalg.apply_to_poly(op, {(3, 0): 1.0, (1, 1): 1.0}) == {(1, 0): 6.0, (2, 0): 2.0}


def test_apply_to_pbs():
    inputs = bskernel.BsInputs(t=0.0, T=0.25, x=LOG100 + 0.01, k=LOG100, sigma0=0.2)
    identity = DiffOperator.identity(POINT)
    assert float(opalg.apply_to_pbs(identity, inputs, 0.04)) == pytest.approx(float(bskernel.bs_price(inputs)))
    gamma = DiffOperator({(0, 0, 2, 0): 1.0, (0, 0, 1, 0): -1.0}, POINT)
    assert float(opalg.apply_to_pbs(gamma, inputs, 0.04)) == pytest.approx(float(bskernel.gamma_term(inputs)))
    # y derivatives of the call price vanish
    assert float(opalg.apply_to_pbs(DiffOperator.derivative(POINT, 1, 1), inputs, 0.04)) == 0.0
    # coefficients are evaluated at the centered state
    shifted = DiffOperator.monomial(POINT, 1, 1, 3.0)
    expected = 3.0 * 0.01 * 0.01 * float(bskernel.bs_price(inputs))
    assert float(opalg.apply_to_pbs(shifted, inputs, 0.05)) == pytest.approx(expected, rel=1e-10)


def test_build_xy_moments():
    tau = 0.1
    s0 = HESTON_TABLE.coeff(HALF_SIGMA_SQ, 0, 0)
    x_op, y_op = opalg.build_xy(HESTON_TABLE, 0.0, tau)
    assert x_op.as_dict()[(0, 0, 0, 0)] == pytest.approx(LOG100 - s0 * tau)
    assert y_op.as_dict()[(0, 0, 0, 0)] == pytest.approx(0.04)
    second = opalg.semigroup_poly({(2, 0): 1.0}, HESTON_TABLE, 0.0, tau)
    assert second[(2, 0)] == pytest.approx(1.0)
    assert second[(1, 0)] == pytest.approx(-2 * s0 * tau)
    assert second[(0, 0)] == pytest.approx((s0 * tau) ** 2 + 2 * s0 * tau)


def test_centered_operators_commute():
    x_op, y_op = opalg.centered_xy(HESTON_TABLE, 0.0, 0.2)
    assert (x_op @ y_op).as_dict() == pytest.approx((y_op @ x_op).as_dict())


@pytest.mark.parametrize(
    "f",
    [
        {(1, 0): 1.0},
        {(0, 1): 2.0, (2, 0): -1.0},
        {(1, 1): 1.5, (0, 2): 4.0, (0, 0): 0.3},
        {(2, 2): 1.0, (3, 1): -2.0},
    ],
)
def test_semigroup_poly_matches_gaussian_convolution(f):
    t, t1 = 0.0, 0.15
    x, y = LOG100 + 0.02, 0.045

    def f_eval(xs, ys):
        return opalg.eval_poly(f, POINT, xs, ys)

    expected = oracle.gaussian_convolution(f_eval, HESTON_TABLE, t, t1, x, y, nodes=16)
    value = float(opalg.eval_poly(opalg.semigroup_poly(f, HESTON_TABLE, t, t1), POINT, x, y))
    assert value == pytest.approx(expected, rel=1e-10, abs=1e-14)


def test_build_g_rejects_order_zero():
    with pytest.raises(UnsupportedOrderException):
        opalg.build_g(0, HESTON_TABLE, 0.0, 0.1)


EVAL_POINTS = [(LOG100, 0.04), (LOG100 + 0.03, 0.035), (LOG100 - 0.05, 0.052)]


def test_composition_matches_sequential_application():
    a = DiffOperator({(1, 0, 1, 0): 2.0, (0, 1, 0, 2): -1.0, (0, 0, 0, 0): 0.5}, POINT)
    b = DiffOperator({(0, 1, 1, 0): 1.5, (1, 0, 0, 1): 3.0, (0, 0, 2, 0): 1.0}, POINT)
    f = {(3, 0): 1.0, (1, 2): -2.0, (2, 1): 0.5, (0, 1): 1.0, (0, 3): 4.0}
    composed = opalg.apply_to_poly(opalg.compose(a, b), f)
    sequential = opalg.apply_to_poly(a, opalg.apply_to_poly(b, f))
    for x, y in EVAL_POINTS:
        expected = float(opalg.eval_poly(sequential, POINT, x, y))
        assert float(opalg.eval_poly(composed, POINT, x, y)) == pytest.approx(expected, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("f", [{(1, 1): 1.0, (0, 2): -3.0}, {(3, 0): 1.0, (2, 1): 2.0, (0, 1): 0.7}])
def test_semigroup_composition(f):
    t, t1, t2 = 0.0, 0.04, 0.1
    stepped = opalg.semigroup_poly(opalg.semigroup_poly(f, HESTON_TABLE, t1, t2), HESTON_TABLE, t, t1)
    direct = opalg.semigroup_poly(f, HESTON_TABLE, t, t2)
    for x, y in EVAL_POINTS:
        expected = float(opalg.eval_poly(direct, POINT, x, y))
        assert float(opalg.eval_poly(stepped, POINT, x, y)) == pytest.approx(expected, rel=1e-12, abs=1e-14)


def _generator_part(table, n):
    # order n part of the generator, frozen coefficient monomials left of the derivatives
    d = {
        HALF_SIGMA_SQ: DiffOperator.derivative(POINT, 2, 0) - DiffOperator.derivative(POINT, 1, 0),
        DRIFT: DiffOperator.derivative(POINT, 0, 1),
        HALF_BETA_SQ: DiffOperator.derivative(POINT, 0, 2),
        RHO_SIGMA_BETA: DiffOperator.derivative(POINT, 1, 1),
    }
    op = DiffOperator.zero(POINT)
    for family, derivative in d.items():
        for (i, j), c in table.order_terms(family, n).items():
            op = op + DiffOperator.monomial(POINT, i, j, c) @ derivative
    return op


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("f", [{(1, 0): 1.0, (0, 1): -2.0}, {(2, 1): 1.0, (0, 3): 5.0, (1, 1): -0.5}])
def test_frozen_semigroup_moves_generator_terms_to_g(n, f):
    t, t1 = 0.0, 0.08
    x, y = LOG100 + 0.02, 0.045
    a_f = opalg.apply_to_poly(_generator_part(HESTON_TABLE, n), f)

    def a_f_eval(xs, ys):
        return opalg.eval_poly(a_f, POINT, xs, ys)

    expected = oracle.gaussian_convolution(a_f_eval, HESTON_TABLE, t, t1, x, y, nodes=16)
    moved = opalg.apply_to_poly(opalg.build_g(n, HESTON_TABLE, t, t1), opalg.semigroup_poly(f, HESTON_TABLE, t, t1))
    assert float(opalg.eval_poly(moved, POINT, x, y)) == pytest.approx(expected, rel=1e-9, abs=1e-14)


def test_build_g_order_one_on_call_price():
    t, t1 = 0.0, 0.05
    inputs = bskernel.BsInputs(t=t, T=0.25, x=LOG100, k=LOG100, sigma0=HESTON_TABLE.sigma0)
    g1 = opalg.build_g(1, HESTON_TABLE, t, t1)
    derivs = bskernel.bs_dx_all(inputs, 3)
    # at the expansion point only the r0 d_x part of Y survives in s01 (Y - y_bar)(d_x^2 - d_x)
    expected = (
        HESTON_TABLE.coeff(HALF_SIGMA_SQ, 0, 1)
        * HESTON_TABLE.coeff(RHO_SIGMA_BETA, 0, 0)
        * (t1 - t)
        * float(derivs[3] - derivs[2])
    )
    assert float(opalg.apply_to_pbs(g1, inputs, 0.04)) == pytest.approx(expected, rel=1e-10)


def test_build_g_constant_coefficients_vanish():
    table = model.taylor_coeffs(model.black_scholes(BlackScholesParams(mu=0.05, sigma=0.2)), POINT)
    assert opalg.build_g(1, table, 0.0, 0.1).is_zero()
    assert opalg.build_g(2, table, 0.0, 0.1).is_zero()


def test_build_g_errors():
    with pytest.raises(UnsupportedOrderException):
        opalg.build_g(3, HESTON_TABLE, 0.0, 0.1)
    with pytest.raises(TimeOrderException):
        opalg.build_g(1, HESTON_TABLE, 0.2, 0.1)
    with pytest.raises(TimeOrderException):
        opalg.build_xy(HESTON_TABLE, 0.2, 0.1)


def test_eval_poly_vectorised():
    xs = np.array([LOG100, LOG100 + 1.0])
    assert np.allclose(opalg.eval_poly({(1, 0): 2.0, (0, 0): 1.0}, POINT, xs, 0.04), [1.0, 3.0])
