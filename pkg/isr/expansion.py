import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Dict, Literal, Union

import numpy as np

from isr import bskernel, oracle
from isr.common import gauss_legendre
from isr.configmodels import ModelPreset
from isr.model import (
    DRIFT,
    HALF_BETA_SQ,
    HALF_LAMBDA_SQ,
    HALF_SIGMA_SQ,
    RHO_SIGMA_BETA,
    CoefficientTable,
)
from isr.opalg import (
    DiffOperator,
    Poly,
    apply_to_pbs,
    apply_to_poly,
    build_g,
    compose,
    eval_poly,
    linear_combination,
    semigroup_poly,
)
from isr.scenario import Scenario

logger = logging.getLogger(__name__)

# below this time to maturity the terminal limits are returned
DEGENERATE_MATURITY = 1e-10
EXP_TERM_DISCREPANCY_WARNING = 1e-3

ExpTermSource = Literal["printed", "convolution"]


@dataclass(frozen=True)
class OperatorIntegrals:
    """
    Time integrals of the G operators from t to T:
    g1 = int G_1(t, t1), g2 = int G_2(t, t1) and g11 = int int G_1(t, t1) G_1(t1, t2)
    """

    g1: DiffOperator
    g2: DiffOperator
    g11: DiffOperator


@lru_cache(maxsize=256)
def _operator_integrals(table: CoefficientTable, t: float, T: float, hatted: bool, order: int) -> OperatorIntegrals:
    point = table.point
    knots, weights = gauss_legendre(t, T, order)
    g1_terms = []
    g2_terms = []
    g11_terms = []
    for t1, w1 in zip(knots, weights):
        outer = build_g(1, table, t, t1, hatted)
        g1_terms.append((w1, outer))
        g2_terms.append((w1, build_g(2, table, t, t1, hatted)))
        if outer.is_zero():
            continue
        inner_knots, inner_weights = gauss_legendre(t1, T, order)
        inner = linear_combination(
            point, [(w2, build_g(1, table, t1, t2, hatted)) for t2, w2 in zip(inner_knots, inner_weights)]
        )
        g11_terms.append((w1, compose(outer, inner)))
    integrals = OperatorIntegrals(
        g1=linear_combination(point, g1_terms),
        g2=linear_combination(point, g2_terms),
        g11=linear_combination(point, g11_terms),
    )
    logger.debug(
        f"operator integrals on [{t}, {T}] (hatted={hatted}): {len(integrals.g1)}, {len(integrals.g2)}, "
        f"{len(integrals.g11)} terms"
    )
    return integrals


def operator_integrals(
    table: CoefficientTable, t: float, T: float, hatted: bool = False, order: int = 32
) -> OperatorIntegrals:
    """
    Cached time integrals of the G operators. Under the minimal martingale measure
    the hatted operators coincide with the plain ones and share the cache entry.
    """
    if hatted and table.is_mmm:
        hatted = False
    return _operator_integrals(table, float(t), float(T), hatted, order)


@dataclass(frozen=True)
class ExpTerm:
    """
    The squared-gradient exponential contribution to psi_2, evaluated from the
    closed form integrand and as a Gaussian convolution
    """

    printed: float
    convolution: float

    @property
    def relative_discrepancy(self) -> float:
        scale = max(abs(self.printed), abs(self.convolution))
        return 0.0 if scale == 0 else abs(self.printed - self.convolution) / scale


@dataclass(frozen=True)
class PsiTerms:
    psi0: float
    psi1: float
    psi2: float
    psi0_lambda: float
    psi0_option: float
    psi1_operator: float
    psi1_lambda: float
    psi2_operator: float
    psi2_lambda: float
    psi2_cross: float
    bracket_lambda: float
    bracket_dy: float
    psi2_nonlinear: float
    exp_term: ExpTerm
    exp_term_source: str

    @property
    def total(self) -> float:
        return self.psi0 + self.psi1 + self.psi2

    def as_dict(self) -> Dict[str, Union[float, str]]:
        d = asdict(self)
        d["exp_term"] = {"printed": self.exp_term.printed, "convolution": self.exp_term.convolution}
        return d


@dataclass(frozen=True)
class PriceTerms:
    p0: float
    p1: float
    p2: float

    @property
    def total(self) -> float:
        return self.p0 + self.p1 + self.p2


def _centered(table: CoefficientTable, scenario: Scenario):
    return scenario.x - table.point.x_bar, scenario.y - table.point.y_bar


def _lambda_poly(table: CoefficientTable, n: int) -> Poly:
    return {ij: c for ij, c in table.order_terms(HALF_LAMBDA_SQ, n).items() if c != 0.0}


def appendix_first_order(table: CoefficientTable, scenario: Scenario) -> float:
    """
    Closed form of int_t^T (1/2 lambda^2)_1(X, Y) dt1
    """
    dx, dy = _centered(table, scenario)
    tau = scenario.tau
    s0 = table.coeff(HALF_SIGMA_SQ, 0, 0)
    c0 = table.coeff(DRIFT, 0, 0)
    l10 = table.coeff(HALF_LAMBDA_SQ, 1, 0)
    l01 = table.coeff(HALF_LAMBDA_SQ, 0, 1)
    return l10 * (dx * tau - s0 * tau**2 / 2) + l01 * (dy * tau + c0 * tau**2 / 2)


def appendix_second_order_cross(table: CoefficientTable, scenario: Scenario) -> float:
    """
    Closed form of int_t^T dt1 G_1(t, t1) int_t1^T dt2 (1/2 lambda^2)_1(X(t, t2), Y(t, t2))
    """
    dx, dy = _centered(table, scenario)
    tau = scenario.tau
    s0 = table.coeff(HALF_SIGMA_SQ, 0, 0)
    c0 = table.coeff(DRIFT, 0, 0)
    s10, s01 = table.coeff(HALF_SIGMA_SQ, 1, 0), table.coeff(HALF_SIGMA_SQ, 0, 1)
    c10, c01 = table.coeff(DRIFT, 1, 0), table.coeff(DRIFT, 0, 1)
    l10, l01 = table.coeff(HALF_LAMBDA_SQ, 1, 0), table.coeff(HALF_LAMBDA_SQ, 0, 1)
    sigma_part = s10 * dx + s01 * dy + tau / 3 * (-s10 * s0 + s01 * c0)
    drift_part = c10 * dx + c01 * dy + tau / 3 * (-c10 * s0 + c01 * c0)
    return -l10 * tau**2 / 2 * sigma_part + l01 * tau**2 / 2 * drift_part


def _lambda2_closed(table: CoefficientTable, scenario: Scenario, printed: bool) -> float:
    dx, dy = _centered(table, scenario)
    tau = scenario.tau
    s0 = table.coeff(HALF_SIGMA_SQ, 0, 0)
    c0 = table.coeff(DRIFT, 0, 0)
    b0 = table.coeff(HALF_BETA_SQ, 0, 0)
    r0 = table.coeff(RHO_SIGMA_BETA, 0, 0)
    l20 = table.coeff(HALF_LAMBDA_SQ, 2, 0)
    l11 = table.coeff(HALF_LAMBDA_SQ, 1, 1)
    l02 = table.coeff(HALF_LAMBDA_SQ, 0, 2)
    xx = dx**2 * tau - s0 * dx * tau**2 + s0**2 * tau**3 / 3
    xy = dx * dy * tau + (dx * c0 - dy * s0) * tau**2 / 2 - s0 * c0 * tau**3 / 3
    yy = dy**2 * tau + dy * c0 * tau**2 + c0**2 * tau**3 / 3
    if not printed:
        # covariance of the frozen Gaussian
        xx += s0 * tau**2
        xy += r0 * tau**2 / 2
        yy += b0 * tau**2
    return l20 * xx + l11 * xy + l02 * yy


def lambda_integral_quadrature(table: CoefficientTable, scenario: Scenario, n: int, order: int = 32) -> float:
    """
    int_t^T (1/2 lambda^2)_n(X, Y) dt1 by Gauss-Legendre quadrature of the semigroup
    acting on the Taylor polynomial
    """
    poly = _lambda_poly(table, n)
    knots, weights = gauss_legendre(scenario.t, scenario.T, order)
    total = 0.0
    for t1, w in zip(knots, weights):
        total += w * float(eval_poly(semigroup_poly(poly, table, scenario.t, t1), table.point, scenario.x, scenario.y))
    return total


def appendix_lambda2_second(
    table: CoefficientTable,
    scenario: Scenario,
    model_kind: Union[ModelPreset, str] = "generic",
    printed: bool = False,
    order: int = 32,
) -> float:
    """
    int_t^T (1/2 lambda^2)_2(X, Y) dt1. Preset models use the closed form; generic
    models fall back to quadrature. `printed` drops the covariance contributions
    and reproduces the published closed forms.

    :param table: the Taylor coefficients
    :type table: CoefficientTable
    :param scenario: the scenario
    :type scenario: Scenario
    :param model_kind: a preset name or "generic"
    :type model_kind: Union[ModelPreset, str]
    :param printed: omit the covariance terms
    :type printed: bool
    :param order: quadrature order for generic models
    :type order: int
    :return: the integral
    :rtype: float
    """
    kind = model_kind.value if isinstance(model_kind, ModelPreset) else model_kind
    if kind in (ModelPreset.HESTON.value, ModelPreset.RECIPROCAL_HESTON.value, ModelPreset.BLACK_SCHOLES.value):
        return _lambda2_closed(table, scenario, printed)
    return lambda_integral_quadrature(table, scenario, 2, order)


def cross_term_quadrature(table: CoefficientTable, scenario: Scenario, order: int = 32) -> float:
    """
    Quadrature counterpart of :func:`appendix_second_order_cross`
    """
    poly = _lambda_poly(table, 1)
    t, T = scenario.t, scenario.T
    knots, weights = gauss_legendre(t, T, order)
    total = 0.0
    for t1, w1 in zip(knots, weights):
        inner: Dict = {}
        inner_knots, inner_weights = gauss_legendre(t1, T, order)
        for t2, w2 in zip(inner_knots, inner_weights):
            for ij, c in semigroup_poly(poly, table, t, t2).items():
                inner[ij] = inner.get(ij, 0.0) + w2 * c
        applied = apply_to_poly(build_g(1, table, t, t1), inner)
        total += w1 * float(eval_poly(applied, table.point, scenario.x, scenario.y))
    return total


def appendix_dy_term(table: CoefficientTable, scenario: Scenario) -> float:
    """
    Closed form of int_t^T dt1 (1/2 lambda^2)_{0,1} (T - t1) d_y int_t1^T dt2 G_1(t, t2) p^BS,
    equal to (1/2 lambda^2)_{0,1} (1/2 sigma^2)_{0,1} e^x phi(d+) / (sigma_0 sqrt(T - t)) (T - t)^3 / 3
    """
    l01 = table.coeff(HALF_LAMBDA_SQ, 0, 1)
    s01 = table.coeff(HALF_SIGMA_SQ, 0, 1)
    g = float(bskernel.gamma_term(scenario.bs_inputs(table.sigma0)))
    return l01 * s01 * g * scenario.tau**3 / 3


def dy_term_quadrature(table: CoefficientTable, scenario: Scenario, order: int = 32) -> float:
    """
    Quadrature counterpart of :func:`appendix_dy_term` through the operator algebra
    """
    t, T = scenario.t, scenario.T
    l01 = table.coeff(HALF_LAMBDA_SQ, 0, 1)
    d_y = DiffOperator.derivative(table.point, 0, 1)
    inputs = scenario.bs_inputs(table.sigma0)
    knots, weights = gauss_legendre(t, T, order)
    total = 0.0
    for t1, w1 in zip(knots, weights):
        inner_knots, inner_weights = gauss_legendre(t1, T, order)
        inner = linear_combination(
            table.point, [(w2, compose(d_y, build_g(1, table, t, t2))) for t2, w2 in zip(inner_knots, inner_weights)]
        )
        total += w1 * l01 * (T - t1) * float(apply_to_pbs(inner, inputs, scenario.y))
    return total


def psi2_exp_term(table: CoefficientTable, scenario: Scenario, order: int = 32, nodes: int = 64) -> ExpTerm:
    """
    int_t^T dt1 P_0(t, t1) (d_y zeta(t1))^2 with d_y zeta(t1) = (T - t1) (1/2 sigma^2)_{0,1} g(t1)
    and g = (d_x^2 - d_x) p^BS. The closed form integrand is

        s01^2 / (2 pi sigma_0^2) (T - t1)^(3/2) / sqrt(T - t + t1 - t)
        * exp(2k - ((k - x) + sigma_0^2 (T - t) / 2)^2 / (sigma_0^2 (T - t + t1 - t)))

    and the convolution applies the frozen Gaussian to g^2 directly.
    """
    s01 = table.coeff(HALF_SIGMA_SQ, 0, 1)
    if s01 == 0.0:
        return ExpTerm(printed=0.0, convolution=0.0)
    t, T, x, k = scenario.t, scenario.T, scenario.x, scenario.k
    tau = scenario.tau
    sigma0 = table.sigma0
    knots, weights = gauss_legendre(t, T, order)

    spread = tau + (knots - t)
    integrand = (T - knots) ** 1.5 / np.sqrt(spread) * np.exp(
        2 * k - ((k - x) + 0.5 * sigma0**2 * tau) ** 2 / (sigma0**2 * spread)
    )
    printed = float(s01**2 / (2 * math.pi * sigma0**2) * (weights @ integrand))

    convolution = 0.0
    for t1, w1 in zip(knots, weights):
        inputs = bskernel.BsInputs(t=float(t1), T=T, x=x, k=k, sigma0=sigma0)

        def squared_gradient(xs, ys, inputs=inputs, t1=t1):
            return ((T - t1) * s01 * bskernel.gamma_term(inputs.with_x(xs))) ** 2 + 0 * ys

        convolution += w1 * oracle.gaussian_convolution(squared_gradient, table, t, float(t1), x, scenario.y, nodes)
    return ExpTerm(printed=printed, convolution=convolution)


def _degenerate(scenario: Scenario) -> bool:
    return scenario.tau < DEGENERATE_MATURITY


def psi_terms(
    scenario: Scenario,
    table: CoefficientTable,
    order: int = 32,
    nodes: int = 64,
    exp_source: ExpTermSource = "convolution",
) -> PsiTerms:
    """
    The terms psi_0, psi_1, psi_2 of the value function exponent

        psi_0 = -(1/2 lambda^2)_0 (T - t) - gamma nu p^BS
        psi_1 = -gamma nu int G_1 p^BS - int (1/2 lambda^2)_1(X, Y)
        psi_2 = -gamma nu (int int G_1 G_1 + int G_2) p^BS - int (1/2 lambda^2)_2(X, Y)
                - int G_1 int (1/2 lambda^2)_1 + (1 - rho^2) (1/2 beta^2)_0 [bracket]

    :param scenario: the scenario
    :type scenario: Scenario
    :param table: the Taylor coefficients at the scenario's expansion point
    :type table: CoefficientTable
    :param order: Gauss-Legendre knots per time integral
    :type order: int
    :param nodes: Gauss-Hermite knots per axis of the convolution
    :type nodes: int
    :param exp_source: which evaluation of the exponential term enters psi_2
    :type exp_source: str
    :return: the terms and their components
    :rtype: PsiTerms
    """
    gamma_nu = scenario.gamma_nu
    if _degenerate(scenario):
        option = -gamma_nu * float(bskernel.payoff(scenario.x, scenario.k))
        return PsiTerms(
            psi0=option,
            psi1=0.0,
            psi2=0.0,
            psi0_lambda=0.0,
            psi0_option=option,
            psi1_operator=0.0,
            psi1_lambda=0.0,
            psi2_operator=0.0,
            psi2_lambda=0.0,
            psi2_cross=0.0,
            bracket_lambda=0.0,
            bracket_dy=0.0,
            psi2_nonlinear=0.0,
            exp_term=ExpTerm(0.0, 0.0),
            exp_term_source=exp_source,
        )

    tau = scenario.tau
    inputs = scenario.bs_inputs(table.sigma0)
    pbs = float(bskernel.bs_price(inputs))
    psi0_lambda = -table.coeff(HALF_LAMBDA_SQ, 0, 0) * tau
    psi0_option = -(gamma_nu * pbs)

    integrals = operator_integrals(table, scenario.t, scenario.T, hatted=False, order=order)
    psi1_operator = float(apply_to_pbs(integrals.g1, inputs, scenario.y))
    psi1_lambda = appendix_first_order(table, scenario)

    second = linear_combination(table.point, [(1.0, integrals.g2), (1.0, integrals.g11)])
    psi2_operator = float(apply_to_pbs(second, inputs, scenario.y))
    psi2_lambda = _lambda2_closed(table, scenario, printed=False)
    psi2_cross = appendix_second_order_cross(table, scenario)
    l01 = table.coeff(HALF_LAMBDA_SQ, 0, 1)
    bracket_lambda = l01**2 * tau**3 / 3
    bracket_dy = appendix_dy_term(table, scenario)
    exp_term = psi2_exp_term(table, scenario, order, nodes)
    if exp_term.relative_discrepancy > EXP_TERM_DISCREPANCY_WARNING:
        logger.warning(
            f"exponential term evaluations disagree: printed={exp_term.printed} "
            f"convolution={exp_term.convolution} (relative {exp_term.relative_discrepancy:.2e})"
        )
    exp_value = exp_term.convolution if exp_source == "convolution" else exp_term.printed
    bracket = bracket_lambda + 2 * gamma_nu * bracket_dy + gamma_nu**2 * exp_value
    nonlinear = (1 - table.rho**2) * table.coeff(HALF_BETA_SQ, 0, 0) * bracket

    return PsiTerms(
        psi0=psi0_lambda + psi0_option,
        psi1=-gamma_nu * psi1_operator - psi1_lambda,
        psi2=-gamma_nu * psi2_operator - psi2_lambda - psi2_cross + nonlinear,
        psi0_lambda=psi0_lambda,
        psi0_option=psi0_option,
        psi1_operator=psi1_operator,
        psi1_lambda=psi1_lambda,
        psi2_operator=psi2_operator,
        psi2_lambda=psi2_lambda,
        psi2_cross=psi2_cross,
        bracket_lambda=bracket_lambda,
        bracket_dy=bracket_dy,
        psi2_nonlinear=nonlinear,
        exp_term=exp_term,
        exp_term_source=exp_source,
    )


def price_terms(scenario: Scenario, table: CoefficientTable, order: int = 32) -> PriceTerms:
    """
    The terms of the call price under the pricing measure:
    p_0 = p^BS, p_1 = int G^_1 p^BS and p_2 = (int G^_2 + int int G^_1 G^_1) p^BS
    """
    if _degenerate(scenario):
        return PriceTerms(float(bskernel.payoff(scenario.x, scenario.k)), 0.0, 0.0)
    inputs = scenario.bs_inputs(table.sigma0)
    integrals = operator_integrals(table, scenario.t, scenario.T, hatted=True, order=order)
    second = linear_combination(table.point, [(1.0, integrals.g2), (1.0, integrals.g11)])
    return PriceTerms(
        p0=float(bskernel.bs_price(inputs)),
        p1=float(apply_to_pbs(integrals.g1, inputs, scenario.y)),
        p2=float(apply_to_pbs(second, inputs, scenario.y)),
    )


def epsilon_residual(
    table: CoefficientTable, scenario: Scenario, eps: float, h: float = 1e-3, ht: float = 1e-4, order: int = 32
) -> float:
    """
    Residual of the value PDE with coefficients replaced by their eps-scaled Taylor
    polynomials, evaluated on the eps-scaled truncated series psi_0 + psi_1 + psi_2.
    Derivatives are central differences, so h and ht must keep the stencil inside (t, T).
    """
    scaled = table.scaled(eps)
    point = table.point
    anchored = scenario.evolve(x_bar=point.x_bar, y_bar=point.y_bar)

    def psi_bar(dt: float = 0.0, dx: float = 0.0, dy: float = 0.0) -> float:
        moved = anchored.evolve(t=anchored.t + dt, x=anchored.x + dx, y=anchored.y + dy)
        return psi_terms(moved, scaled, order=order).total

    center = psi_bar()
    psi_t = (psi_bar(dt=ht) - psi_bar(dt=-ht)) / (2 * ht)
    psi_x = (psi_bar(dx=h) - psi_bar(dx=-h)) / (2 * h)
    psi_y = (psi_bar(dy=h) - psi_bar(dy=-h)) / (2 * h)
    psi_xx = (psi_bar(dx=h) - 2 * center + psi_bar(dx=-h)) / h**2
    psi_yy = (psi_bar(dy=h) - 2 * center + psi_bar(dy=-h)) / h**2
    psi_xy = (psi_bar(dx=h, dy=h) - psi_bar(dx=h, dy=-h) - psi_bar(dx=-h, dy=h) + psi_bar(dx=-h, dy=-h)) / (4 * h**2)

    x, y = anchored.x, anchored.y
    s = float(scaled.poly(HALF_SIGMA_SQ, x, y))
    c = float(scaled.poly(DRIFT, x, y))
    b = float(scaled.poly(HALF_BETA_SQ, x, y))
    r = float(scaled.poly(RHO_SIGMA_BETA, x, y))
    lam = float(scaled.poly(HALF_LAMBDA_SQ, x, y))
    linear = s * (psi_xx - psi_x) + c * psi_y + b * psi_yy + r * psi_xy
    return psi_t + linear + (1 - table.rho**2) * b * psi_y**2 - lam
