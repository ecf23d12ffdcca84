import math

import pytest

from isr import bskernel, expansion, model
from isr.configmodels import BlackScholesParams, HestonParams, ModelPreset, ReciprocalHestonParams
from isr.model import HALF_BETA_SQ, HALF_LAMBDA_SQ, HALF_SIGMA_SQ, ExpansionPoint
from isr.scenario import Scenario

LOG100 = math.log(100.0)
T_FIG = 6.0 / 52.0
HESTON = model.heston(HestonParams(kappa=1.15, theta=0.04, delta=0.2, rho=-0.4))
POINT = ExpansionPoint(LOG100, 0.04)
TABLE = model.taylor_coeffs(HESTON, POINT)
RECIPROCAL = model.reciprocal_heston(ReciprocalHestonParams(mu=0.05, a=5.0, b=0.04, kappa=0.01, rho=0.2))
RECIPROCAL_TABLE = model.taylor_coeffs(RECIPROCAL, POINT)
OFFSETS = [(0.0, 0.0), (0.02, 0.005), (-0.03, 0.01)]


def _scenario(**changes):
    base = Scenario(t=0.0, T=T_FIG, x=LOG100, y=0.04, k=LOG100, nu=1.0, gamma=1.0, x_bar=LOG100, y_bar=0.04)
    return base.evolve(**changes)


def test_constant_coefficients_have_no_corrections():
    spec = model.black_scholes(BlackScholesParams(mu=0.05, sigma=0.2))
    table = model.taylor_coeffs(spec, POINT)
    scenario = _scenario(T=0.25, nu=2.0)
    psi = expansion.psi_terms(scenario, table, order=8, nodes=16)
    price = expansion.price_terms(scenario, table, order=8)
    assert psi.psi1 == 0.0 and psi.psi2 == 0.0
    assert price.p1 == 0.0 and price.p2 == 0.0
    assert psi.psi0 == pytest.approx(-0.5 * 0.25**2 * 0.25 - 2.0 * price.p0, rel=1e-12)


def test_psi0_components():
    scenario = _scenario()
    psi = expansion.psi_terms(scenario, TABLE, order=8, nodes=16)
    assert psi.psi0_lambda == pytest.approx(-TABLE.coeff(HALF_LAMBDA_SQ, 0, 0) * T_FIG, rel=1e-14)
    assert psi.psi0 == pytest.approx(psi.psi0_lambda + psi.psi0_option, rel=1e-14)
    assert psi.total == pytest.approx(psi.psi0 + psi.psi1 + psi.psi2)
    assert set(psi.as_dict()["exp_term"]) == {"printed", "convolution"}


@pytest.mark.parametrize("dx,dy", [(0.0, 0.0), (0.02, 0.005), (-0.03, -0.01)])
def test_first_order_closed_form_matches_quadrature(dx, dy):
    scenario = _scenario(x=LOG100 + dx, y=0.04 + dy)
    closed = expansion.appendix_first_order(TABLE, scenario)
    assert closed == pytest.approx(expansion.lambda_integral_quadrature(TABLE, scenario, 1, 8), rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("dx,dy", [(0.0, 0.0), (0.02, 0.005), (-0.03, -0.01)])
def test_second_order_cross_closed_form_matches_quadrature(dx, dy):
    scenario = _scenario(x=LOG100 + dx, y=0.04 + dy)
    closed = expansion.appendix_second_order_cross(TABLE, scenario)
    assert closed == pytest.approx(expansion.cross_term_quadrature(TABLE, scenario, 8), rel=1e-8, abs=1e-15)


@pytest.mark.parametrize("dx,dy", [(0.0, 0.0), (0.02, 0.005), (-0.03, -0.01)])
def test_lambda2_closed_form_matches_quadrature(dx, dy):
    scenario = _scenario(x=LOG100 + dx, y=0.04 + dy)
    closed = expansion.appendix_lambda2_second(TABLE, scenario, ModelPreset.HESTON)
    generic = expansion.appendix_lambda2_second(TABLE, scenario, "generic", order=8)
    assert closed == pytest.approx(generic, rel=1e-8, abs=1e-15)


def test_lambda2_printed_form_drops_covariance():
    scenario = _scenario(y=0.045)
    exact = expansion.appendix_lambda2_second(TABLE, scenario, "heston")
    printed = expansion.appendix_lambda2_second(TABLE, scenario, "heston", printed=True)
    # Heston has no x dependence, only the y variance contributes
    expected = TABLE.coeff(HALF_LAMBDA_SQ, 0, 2) * TABLE.coeff(HALF_BETA_SQ, 0, 0) * T_FIG**2
    assert exact - printed == pytest.approx(expected, rel=1e-10)


def test_dy_term_closed_form_matches_quadrature():
    scenario = _scenario(k=LOG100 + 0.02)
    closed = expansion.appendix_dy_term(TABLE, scenario)
    assert closed != 0.0
    assert closed == pytest.approx(expansion.dy_term_quadrature(TABLE, scenario, 8), rel=1e-8)


def test_exp_term_printed_matches_convolution():
    exp_term = expansion.psi2_exp_term(TABLE, _scenario(), order=32, nodes=64)
    assert exp_term.printed > 0
    assert exp_term.convolution == pytest.approx(exp_term.printed, rel=2e-3)
    assert exp_term.relative_discrepancy < 2e-3


def test_exp_term_small_maturity_scaling():
    long = expansion.psi2_exp_term(TABLE, _scenario(T=0.02), order=16, nodes=32)
    short = expansion.psi2_exp_term(TABLE, _scenario(T=0.01), order=16, nodes=32)
    assert long.printed / short.printed == pytest.approx(4.0, rel=1e-2)


def test_exp_source_selects_evaluation():
    scenario = _scenario(nu=2.0)
    printed = expansion.psi_terms(scenario, TABLE, order=16, nodes=32, exp_source="printed")
    convolution = expansion.psi_terms(scenario, TABLE, order=16, nodes=32, exp_source="convolution")
    assert printed.exp_term_source == "printed"
    assert printed.psi1 == convolution.psi1
    factor = (1 - TABLE.rho**2) * TABLE.coeff(HALF_BETA_SQ, 0, 0) * scenario.gamma_nu**2
    difference = factor * (printed.exp_term.printed - printed.exp_term.convolution)
    assert printed.psi2 - convolution.psi2 == pytest.approx(difference, rel=1e-6, abs=1e-15)


def test_price_first_order_depends_on_market_price_of_volatility_risk():
    omega = 0.5
    scenario = _scenario()
    params = HestonParams(kappa=1.15, theta=0.04, delta=0.2, rho=-0.4)
    table_hat = model.taylor_coeffs(model.heston(params, omega), POINT)
    p1_mmm = expansion.price_terms(scenario, TABLE, order=16).p1
    p1_hat = expansion.price_terms(scenario, table_hat, order=16).p1
    s01 = TABLE.coeff(HALF_SIGMA_SQ, 0, 1)
    beta0 = 0.2 * math.sqrt(0.04)
    shift = -math.sqrt(1 - 0.4**2) * beta0 * omega
    g = float(bskernel.gamma_term(scenario.bs_inputs(TABLE.sigma0)))
    assert p1_hat - p1_mmm == pytest.approx(s01 * shift * T_FIG**2 / 2 * g, rel=1e-8)


def test_degenerate_maturity_returns_payoff():
    scenario = _scenario(T=1e-12, x=math.log(110.0))
    psi = expansion.psi_terms(scenario, TABLE)
    price = expansion.price_terms(scenario, TABLE)
    assert price.p0 == pytest.approx(10.0, rel=1e-12)
    assert psi.psi0 == pytest.approx(-10.0, rel=1e-12)
    assert psi.psi1 == 0.0 and psi.psi2 == 0.0


def test_operator_integrals_are_cached():
    first = expansion.operator_integrals(TABLE, 0.0, T_FIG, order=8)
    second = expansion.operator_integrals(TABLE, 0.0, T_FIG, order=8)
    assert first is second
    # the hatted integrals coincide with the plain ones under the minimal martingale measure
    assert expansion.operator_integrals(TABLE, 0.0, T_FIG, hatted=True, order=8) is first


def test_epsilon_residual_is_third_order():
    scenario = _scenario(T=0.25, nu=0.0, y=0.045)
    coarse = expansion.epsilon_residual(TABLE, scenario, 0.2, order=8)
    fine = expansion.epsilon_residual(TABLE, scenario, 0.1, order=8)
    assert fine != 0.0
    assert 7.0 < coarse / fine < 9.0


@pytest.mark.parametrize("x", [math.log(110.0), LOG100, math.log(90.0)])
@pytest.mark.parametrize("dy", [0.0, 0.005])
def test_reciprocal_first_order_closed_form_matches_quadrature(x, dy):
    scenario = _scenario(T=0.25, x=x, x_bar=x, y=0.04 + dy)
    table = model.taylor_coeffs(RECIPROCAL, scenario.point)
    closed = expansion.appendix_first_order(table, scenario)
    assert closed == pytest.approx(expansion.lambda_integral_quadrature(table, scenario, 1, 8), rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("dx,dy", OFFSETS)
def test_reciprocal_cross_closed_form_matches_quadrature(dx, dy):
    scenario = _scenario(T=0.25, x=LOG100 + dx, y=0.04 + dy)
    closed = expansion.appendix_second_order_cross(RECIPROCAL_TABLE, scenario)
    expected = expansion.cross_term_quadrature(RECIPROCAL_TABLE, scenario, 8)
    assert closed == pytest.approx(expected, rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("dx,dy", OFFSETS)
def test_reciprocal_lambda2_closed_form_matches_quadrature(dx, dy):
    scenario = _scenario(T=0.25, x=LOG100 + dx, y=0.04 + dy)
    closed = expansion.appendix_lambda2_second(RECIPROCAL_TABLE, scenario, ModelPreset.RECIPROCAL_HESTON)
    generic = expansion.appendix_lambda2_second(RECIPROCAL_TABLE, scenario, "generic", order=8)
    assert closed == pytest.approx(generic, rel=1e-10, abs=1e-15)


def test_reciprocal_dy_term_closed_form_matches_quadrature():
    scenario = _scenario(T=0.25, x=math.log(110.0), x_bar=math.log(110.0))
    table = model.taylor_coeffs(RECIPROCAL, scenario.point)
    closed = expansion.appendix_dy_term(table, scenario)
    assert closed != 0.0
    assert closed == pytest.approx(expansion.dy_term_quadrature(table, scenario, 8), rel=1e-10)
