import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from isr.exceptions import (
    DegenerateAnchorException,
    DegenerateMarketException,
    MaturityException,
    ParameterException,
    UnsupportedOrderException,
    ValueDominanceException,
)
from isr.expansion import DEGENERATE_MATURITY, ExpTermSource, PriceTerms, PsiTerms, price_terms, psi_terms
from isr.model import CoefficientMode, CoefficientTable, ModelSpec, taylor_coeffs
from isr.scenario import Scenario

logger = logging.getLogger(__name__)

# below this Lambda_0 the corrections are undefined
DEGENERATE_SHARPE = 1e-12
RADICAND_ROUNDOFF = 1e-14


class Method(str, Enum):
    GENERAL = "general"
    MMM_REMARK = "mmm_remark"


@dataclass(frozen=True)
class SharpeApproximation:
    lambda0: float
    lambda1: float
    lambda2: float
    order: int
    method: Method
    radicand: float
    psi: PsiTerms
    price: PriceTerms

    @property
    def partial_sums(self) -> Tuple[float, float, float]:
        return self.lambda0, self.lambda0 + self.lambda1, self.lambda0 + self.lambda1 + self.lambda2

    @property
    def total(self) -> float:
        return self.partial_sums[self.order]

    @property
    def exp_term_source(self) -> str:
        return self.psi.exp_term_source

    def as_dict(self) -> Dict[str, Any]:
        return {
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda_total": self.total,
            "order": self.order,
            "method": self.method.value,
            "radicand": self.radicand,
            "p0": self.price.p0,
            "p1": self.price.p1,
            "p2": self.price.p2,
            "psi0": self.psi.psi0,
            "psi1": self.psi.psi1,
            "psi2": self.psi.psi2,
            "exp_term_source": self.exp_term_source,
        }


def merton_value(t: float, T: float, w: float, lam: float, gamma: float) -> float:
    """
    Merton value of an exponential utility investor with constant Sharpe ratio lam
    """
    return -1.0 / gamma * math.exp(-gamma * w - 0.5 * lam**2 * (T - t))


def implied_sharpe(
    scenario: Scenario,
    model: ModelSpec,
    order: int = 2,
    method: Optional[Method] = None,
    table: Optional[CoefficientTable] = None,
    mode: CoefficientMode = CoefficientMode.ANALYTIC,
    quadrature_order: int = 32,
    hermite_nodes: int = 64,
    exp_source: ExpTermSource = "convolution",
) -> SharpeApproximation:
    """
    Expand the implied Sharpe ratio Lambda defined by
    gamma nu p + psi = -(T - t) Lambda^2 / 2 and return its terms up to second order.

    The general method divides gamma nu p_k + psi_k by the Lambda_0 expansion. The
    `mmm_remark` method is its specialisation to the minimal martingale measure where
    the option operators cancel and only the market price of risk terms remain.

    :param scenario: the scenario
    :type scenario: Scenario
    :param model: the market model
    :type model: ModelSpec
    :param order: truncation order of the total, 0, 1 or 2
    :type order: int
    :param method: correction formulas, defaults by the pricing measure
    :type method: Optional[Method]
    :param table: prebuilt Taylor coefficients at the scenario's expansion point
    :type table: Optional[CoefficientTable]
    :param mode: how to compute the table when it is not given
    :type mode: CoefficientMode
    :param quadrature_order: Gauss-Legendre knots per time integral
    :type quadrature_order: int
    :param hermite_nodes: Gauss-Hermite knots per axis
    :type hermite_nodes: int
    :param exp_source: which evaluation of the exponential psi_2 term is used
    :type exp_source: str
    :return: the approximation and its ingredients
    :rtype: SharpeApproximation
    """
    if order not in (0, 1, 2):
        raise UnsupportedOrderException(f"implied Sharpe ratio order {order} is not in 0..2")
    if scenario.tau < DEGENERATE_MATURITY:
        raise MaturityException(scenario.t, scenario.T)
    if table is None:
        table = taylor_coeffs(model, scenario.point, mode)
    if method is None:
        method = Method.MMM_REMARK if table.is_mmm else Method.GENERAL
    method = Method(method)
    if method == Method.MMM_REMARK and not table.is_mmm:
        raise ParameterException("the mmm_remark method needs a vanishing market price of volatility risk")

    psi = psi_terms(scenario, table, order=quadrature_order, nodes=hermite_nodes, exp_source=exp_source)
    price = price_terms(scenario, table, order=quadrature_order)
    gamma_nu = scenario.gamma_nu
    tau = scenario.tau

    # the option parts of gamma nu p_0 and psi_0 cancel exactly
    radicand = ((gamma_nu * price.p0 + psi.psi0_option) + psi.psi0_lambda) / (-0.5 * tau)
    if radicand < -RADICAND_ROUNDOFF:
        raise ValueDominanceException(radicand)
    lambda0 = math.sqrt(max(radicand, 0.0))

    lambda1 = lambda2 = math.nan
    if lambda0 < DEGENERATE_SHARPE:
        if order > 0:
            raise DegenerateAnchorException(
                f"Lambda_0 = {lambda0} vanishes at the expansion point, corrections are undefined"
            )
    else:
        denominator = tau * lambda0
        if method == Method.GENERAL:
            lambda1 = -(gamma_nu * price.p1 + psi.psi1) / denominator
            lambda2 = -(gamma_nu * price.p2 + psi.psi2 + tau * lambda1**2 / 2) / denominator
        else:
            lambda1 = psi.psi1_lambda / denominator
            lambda2 = (psi.psi2_lambda + psi.psi2_cross - psi.psi2_nonlinear - tau * lambda1**2 / 2) / denominator

    result = SharpeApproximation(
        lambda0=lambda0,
        lambda1=lambda1,
        lambda2=lambda2,
        order=order,
        method=method,
        radicand=radicand,
        psi=psi,
        price=price,
    )
    logger.debug(f"implied sharpe at {scenario}: {result.partial_sums} ({method.value})")
    return result


def _psi_gradients(scenario: Scenario, table: CoefficientTable, h: float, **kwargs) -> Tuple[float, float]:
    def psi_at(dx: float, dy: float) -> float:
        return psi_terms(scenario.evolve(x=scenario.x + dx, y=scenario.y + dy), table, **kwargs).total

    psi_x = (psi_at(h, 0.0) - psi_at(-h, 0.0)) / (2 * h)
    psi_y = (psi_at(0.0, h) - psi_at(0.0, -h)) / (2 * h)
    return psi_x, psi_y


def optimal_strategy(
    scenario: Scenario,
    model: ModelSpec,
    psi_gradients: Optional[Tuple[float, float]] = None,
    table: Optional[CoefficientTable] = None,
    h: float = 1e-5,
    **kwargs,
) -> float:
    """
    Optimal amount invested in the asset

        pi = (mu + rho beta sigma d_y psi + sigma^2 d_x psi) / (sigma^2 gamma)

    with the gradients of the truncated psi series taken by central differences
    unless given.
    """
    if psi_gradients is None:
        anchored = scenario.evolve(x_bar=scenario.point.x_bar, y_bar=scenario.point.y_bar)
        if table is None:
            table = taylor_coeffs(model, anchored.point)
        psi_gradients = _psi_gradients(anchored, table, h, **kwargs)
    psi_x, psi_y = psi_gradients
    x, y = scenario.x, scenario.y
    mu = float(model.mu(x, y))
    sigma = float(model.sigma(x, y))
    beta = float(model.beta(x, y))
    if sigma <= 0:
        raise DegenerateMarketException(f"volatility must be positive, got {sigma}")
    return (mu + model.rho * beta * sigma * psi_y + sigma**2 * psi_x) / (sigma**2 * scenario.gamma)
