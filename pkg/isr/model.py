import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike

from isr.configmodels import BlackScholesParams, HestonParams, ModelPreset, ReciprocalHestonParams
from isr.exceptions import DegenerateMarketException, DomainException, ParameterException

logger = logging.getLogger(__name__)

# coefficient families entering the expansion
HALF_SIGMA_SQ = "half_sigma_sq"
DRIFT = "drift"
RHO_SIGMA_BETA = "rho_sigma_beta"
HALF_BETA_SQ = "half_beta_sq"
HALF_LAMBDA_SQ = "half_lambda_sq"
DRIFT_HAT = "drift_hat"
FAMILIES = (HALF_SIGMA_SQ, DRIFT, RHO_SIGMA_BETA, HALF_BETA_SQ, HALF_LAMBDA_SQ, DRIFT_HAT)

# (i, j) exponents of the Taylor coefficients kept in a table
TAYLOR_KEYS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))

# value and partials (f, f_x, f_y, f_xx, f_xy, f_yy) at a point
Jet = Tuple[float, float, float, float, float, float]
StateFunction = Callable[[ArrayLike, ArrayLike], ArrayLike]


class CoefficientMode(str, Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite_difference"


def _constant(value: float) -> StateFunction:
    def f(x: ArrayLike, y: ArrayLike) -> np.ndarray:
        return value + np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    return f


@dataclass(frozen=True)
class ExpansionPoint:
    x_bar: float
    y_bar: float


@dataclass(frozen=True)
class ModelSpec:
    """
    A local-stochastic-volatility market

        dX = (mu - sigma^2/2) dt + sigma dB^x
        dY = c dt + beta (rho dB^x + sqrt(1 - rho^2) dB^y)

    The coefficient functions take numpy arrays (or scalars) for x and y.
    `jets` maps every family to its hand derived partials, when known.
    """

    name: str
    mu: StateFunction
    sigma: StateFunction
    c: StateFunction
    beta: StateFunction
    rho: float
    omega: StateFunction = field(default_factory=lambda: _constant(0.0))
    preset: ModelPreset = ModelPreset.CUSTOM
    jets: Optional[Mapping[str, Callable[[float, float], Jet]]] = None
    positive_y: bool = False
    simulate_reciprocal: bool = False

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ParameterException(f"correlation must be in (-1, 1), got {self.rho}")

    def in_domain(self, x: float, y: float) -> bool:
        if not (math.isfinite(x) and math.isfinite(y)):
            return False
        return y > 0 if self.positive_y else True

    def lam(self, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        """
        The market price of asset risk mu/sigma
        """
        return np.asarray(self.mu(x, y)) / np.asarray(self.sigma(x, y))

    def family(self, name: str, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        """
        Evaluate one of the coefficient families in :data:`FAMILIES`

        :param name: the family name
        :type name: str
        :param x: log price(s)
        :type x: ArrayLike
        :param y: factor value(s)
        :type y: ArrayLike
        :return: the family evaluated at (x, y)
        :rtype: np.ndarray
        """
        if name == HALF_SIGMA_SQ:
            return 0.5 * np.asarray(self.sigma(x, y)) ** 2
        if name == HALF_LAMBDA_SQ:
            return 0.5 * self.lam(x, y) ** 2
        if name == HALF_BETA_SQ:
            return 0.5 * np.asarray(self.beta(x, y)) ** 2
        if name == RHO_SIGMA_BETA:
            return self.rho * np.asarray(self.sigma(x, y)) * np.asarray(self.beta(x, y))
        drift = np.asarray(self.c(x, y)) - self.rho * np.asarray(self.beta(x, y)) * self.lam(x, y)
        if name == DRIFT:
            return drift
        if name == DRIFT_HAT:
            return drift - math.sqrt(1 - self.rho**2) * np.asarray(self.beta(x, y)) * np.asarray(self.omega(x, y))
        raise ValueError(f"unknown coefficient family '{name}'")


@dataclass(frozen=True)
class CoefficientTable:
    """
    Normalised Taylor coefficients chi_{i,j} = d_x^i d_y^j chi / (i! j!) of every
    family at the expansion point, for i + j <= 2. Rows follow :data:`FAMILIES`,
    columns follow :data:`TAYLOR_KEYS`.
    """

    point: ExpansionPoint
    rho: float
    rows: Tuple[Tuple[float, ...], ...]

    @classmethod
    def from_jets(cls, point: ExpansionPoint, rho: float, jets: Mapping[str, Jet]) -> "CoefficientTable":
        rows = []
        for name in FAMILIES:
            f, fx, fy, fxx, fxy, fyy = (float(v) for v in jets[name])
            rows.append((f, fx, fy, 0.5 * fxx, fxy, 0.5 * fyy))
        return cls(point=point, rho=rho, rows=tuple(rows))

    def coeff(self, family: str, i: int, j: int) -> float:
        if (i, j) not in TAYLOR_KEYS:
            return 0.0
        return self.rows[FAMILIES.index(family)][TAYLOR_KEYS.index((i, j))]

    def order_terms(self, family: str, n: int) -> Dict[Tuple[int, int], float]:
        """
        The coefficients of total degree n of one family
        """
        return {(i, j): self.coeff(family, i, j) for (i, j) in TAYLOR_KEYS if i + j == n}

    def poly(self, family: str, x: ArrayLike, y: ArrayLike, max_order: int = 2) -> np.ndarray:
        """
        Evaluate the Taylor polynomial of a family up to the given total degree
        """
        dx = np.asarray(x, dtype=float) - self.point.x_bar
        dy = np.asarray(y, dtype=float) - self.point.y_bar
        result = np.zeros(np.broadcast(dx, dy).shape)
        for i, j in TAYLOR_KEYS:
            if i + j <= max_order:
                result = result + self.coeff(family, i, j) * dx**i * dy**j
        return result

    def scaled(self, eps: float) -> "CoefficientTable":
        """
        A table whose coefficients of degree n are multiplied by eps^n
        """
        factors = tuple(eps ** (i + j) for (i, j) in TAYLOR_KEYS)
        rows = tuple(tuple(c * s for c, s in zip(row, factors)) for row in self.rows)
        return replace(self, rows=rows)

    @property
    def sigma0(self) -> float:
        return math.sqrt(2.0 * self.coeff(HALF_SIGMA_SQ, 0, 0))

    @property
    def is_mmm(self) -> bool:
        """
        True when the pricing measure is the minimal martingale measure, i.e. the
        hatted drift coincides with c - rho beta lambda
        """
        return self.rows[FAMILIES.index(DRIFT_HAT)] == self.rows[FAMILIES.index(DRIFT)]

    def as_dict(self) -> Dict[str, Dict[str, float]]:
        return {name: {f"{i}{j}": self.coeff(name, i, j) for (i, j) in TAYLOR_KEYS} for name in FAMILIES}


def _fd_jet(f: Callable[[np.ndarray, np.ndarray], np.ndarray], x: float, y: float, hx: float, hy: float) -> Jet:
    """
    Fourth order central differences for the first and pure second partials and
    the four point stencil for the mixed partial
    """
    offsets = np.array([-2.0, -1.0, 1.0, 2.0])
    fxs = np.asarray(f(x + offsets * hx, np.full(4, y)), dtype=float)
    fys = np.asarray(f(np.full(4, x), y + offsets * hy), dtype=float)
    f0 = float(f(np.array([x]), np.array([y]))[0])
    first = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    second = np.array([-1.0, 16.0, 16.0, -1.0]) / 12.0
    fx = float(first @ fxs) / hx
    fy = float(first @ fys) / hy
    fxx = (float(second @ fxs) - 2.5 * f0) / hx**2
    fyy = (float(second @ fys) - 2.5 * f0) / hy**2
    corners = np.asarray(
        f(np.array([x + hx, x + hx, x - hx, x - hx]), np.array([y + hy, y - hy, y + hy, y - hy])), dtype=float
    )
    fxy = float(corners @ np.array([1.0, -1.0, -1.0, 1.0])) / (4 * hx * hy)
    return f0, fx, fy, fxx, fxy, fyy


def taylor_coeffs(
    model: ModelSpec, point: ExpansionPoint, mode: CoefficientMode = CoefficientMode.ANALYTIC
) -> CoefficientTable:
    """
    Build the table of normalised Taylor coefficients of every family at the
    expansion point. Analytic mode uses the preset's hand derived partials and
    falls back to finite differences for models without them.

    :param model: the market model
    :type model: ModelSpec
    :param point: the expansion point
    :type point: ExpansionPoint
    :param mode: analytic or finite difference partials
    :type mode: CoefficientMode
    :return: the coefficient table
    :rtype: CoefficientTable
    """
    x_bar, y_bar = point.x_bar, point.y_bar
    if not model.in_domain(x_bar, y_bar):
        raise DomainException(model.name, x_bar, y_bar)
    sigma0 = float(model.sigma(x_bar, y_bar))
    if not sigma0 > 0:
        raise DegenerateMarketException(f"volatility at the expansion point must be positive, got {sigma0}")
    if mode == CoefficientMode.ANALYTIC and model.jets is None:
        logger.debug(f"model '{model.name}' has no analytic partials, using finite differences")
        mode = CoefficientMode.FINITE_DIFFERENCE

    if mode == CoefficientMode.ANALYTIC:
        assert model.jets is not None
        jets = {name: model.jets[name](x_bar, y_bar) for name in FAMILIES}
    else:
        hx = max(1e-5, 1e-5 * abs(x_bar))
        hy = max(1e-5, 1e-5 * abs(y_bar))
        if not (model.in_domain(x_bar, y_bar - 2 * hy) and model.in_domain(x_bar, y_bar + 2 * hy)):
            raise DomainException(model.name, x_bar, y_bar - 2 * hy)
        jets = {}
        for name in FAMILIES:
            jets[name] = _fd_jet(lambda xs, ys, name=name: model.family(name, xs, ys), x_bar, y_bar, hx, hy)

    for name, jet in jets.items():
        if not all(math.isfinite(v) for v in jet):
            raise DomainException(model.name, x_bar, y_bar)
    table = CoefficientTable.from_jets(point, model.rho, jets)
    logger.debug(f"taylor coefficients of '{model.name}' at {point} ({mode.value}): {table.as_dict()}")
    return table


def heston(params: HestonParams, omega: float = 0.0) -> ModelSpec:
    """
    Heston model with market price of risk lambda(y) = -sqrt(y)/2 + sqrt(theta)/3
    """
    kappa, theta, delta, rho = params.kappa, params.theta, params.delta, params.rho
    sqrt_theta = math.sqrt(theta)
    q = math.sqrt(1 - rho**2) * delta * omega

    def lam(y):
        return -np.sqrt(y) / 2 + sqrt_theta / 3

    def jet_lambda(x: float, y: float) -> Jet:
        lam0 = -math.sqrt(y) / 2 + sqrt_theta / 3
        lam1 = -1 / (4 * math.sqrt(y))
        lam2 = 1 / (8 * y**1.5)
        return 0.5 * lam0**2, 0.0, lam0 * lam1, 0.0, 0.0, lam1**2 + lam0 * lam2

    jets: Dict[str, Callable[[float, float], Jet]] = {
        HALF_SIGMA_SQ: lambda x, y: (0.5 * y, 0.0, 0.5, 0.0, 0.0, 0.0),
        DRIFT: lambda x, y: (kappa * (theta - y), 0.0, -kappa, 0.0, 0.0, 0.0),
        RHO_SIGMA_BETA: lambda x, y: (rho * delta * y, 0.0, rho * delta, 0.0, 0.0, 0.0),
        HALF_BETA_SQ: lambda x, y: (0.5 * delta**2 * y, 0.0, 0.5 * delta**2, 0.0, 0.0, 0.0),
        HALF_LAMBDA_SQ: jet_lambda,
        DRIFT_HAT: lambda x, y: (
            kappa * (theta - y) - q * math.sqrt(y),
            0.0,
            -kappa - q / (2 * math.sqrt(y)),
            0.0,
            0.0,
            q / (4 * y**1.5),
        ),
    }
    return ModelSpec(
        name="heston",
        mu=lambda x, y: lam(y) * np.sqrt(y) + 0 * np.asarray(x),
        sigma=lambda x, y: np.sqrt(y) + 0 * np.asarray(x),
        c=lambda x, y: kappa * (theta - np.asarray(y)) + rho * delta * lam(y) * np.sqrt(y) + 0 * np.asarray(x),
        beta=lambda x, y: delta * np.sqrt(y) + 0 * np.asarray(x),
        rho=rho,
        omega=_constant(omega),
        preset=ModelPreset.HESTON,
        jets=jets,
        positive_y=True,
    )


def reciprocal_heston(params: ReciprocalHestonParams, omega: float = 0.0) -> ModelSpec:
    """
    Reciprocal Heston model: 1/Y is a CIR process, mu is constant and sigma = sqrt(y)
    """
    mu, a, b, kappa, rho = params.mu, params.a, params.b, params.kappa, params.rho
    if mu == 0:
        raise ParameterException("the reciprocal Heston model needs a non zero drift mu")
    denominator = 1 - rho**2 if params.rho_sq_denominator else (1 - rho) ** 2
    quad = 2 * (b**2 - a * kappa) / (mu**2 * denominator)
    vol = math.sqrt(2 / (1 - rho**2)) * b / mu
    q = math.sqrt(1 - rho**2) * vol * omega
    # c - rho beta lambda = a y + quad y^2 + rho vol mu y
    lin = a + rho * vol * mu

    jets: Dict[str, Callable[[float, float], Jet]] = {
        HALF_SIGMA_SQ: lambda x, y: (0.5 * y, 0.0, 0.5, 0.0, 0.0, 0.0),
        DRIFT: lambda x, y: (lin * y + quad * y**2, 0.0, lin + 2 * quad * y, 0.0, 0.0, 2 * quad),
        RHO_SIGMA_BETA: lambda x, y: (-rho * vol * y**2, 0.0, -2 * rho * vol * y, 0.0, 0.0, -2 * rho * vol),
        HALF_BETA_SQ: lambda x, y: (0.5 * vol**2 * y**3, 0.0, 1.5 * vol**2 * y**2, 0.0, 0.0, 3 * vol**2 * y),
        HALF_LAMBDA_SQ: lambda x, y: (0.5 * mu**2 / y, 0.0, -0.5 * mu**2 / y**2, 0.0, 0.0, mu**2 / y**3),
        DRIFT_HAT: lambda x, y: (
            lin * y + quad * y**2 + q * y**1.5,
            0.0,
            lin + 2 * quad * y + 1.5 * q * math.sqrt(y),
            0.0,
            0.0,
            2 * quad + 0.75 * q / math.sqrt(y),
        ),
    }
    return ModelSpec(
        name="reciprocal_heston",
        mu=_constant(mu),
        sigma=lambda x, y: np.sqrt(y) + 0 * np.asarray(x),
        c=lambda x, y: a * np.asarray(y) + quad * np.asarray(y) ** 2 + 0 * np.asarray(x),
        beta=lambda x, y: -vol * np.asarray(y) ** 1.5 + 0 * np.asarray(x),
        rho=rho,
        omega=_constant(omega),
        preset=ModelPreset.RECIPROCAL_HESTON,
        jets=jets,
        positive_y=True,
        simulate_reciprocal=True,
    )


def black_scholes(params: BlackScholesParams, omega: float = 0.0) -> ModelSpec:
    """
    Constant coefficient market. The factor does not move.
    """
    mu, sigma = params.mu, params.sigma
    lam = mu / sigma

    def const_jet(value: float) -> Callable[[float, float], Jet]:
        return lambda x, y: (value, 0.0, 0.0, 0.0, 0.0, 0.0)

    jets = {
        HALF_SIGMA_SQ: const_jet(0.5 * sigma**2),
        DRIFT: const_jet(0.0),
        RHO_SIGMA_BETA: const_jet(0.0),
        HALF_BETA_SQ: const_jet(0.0),
        HALF_LAMBDA_SQ: const_jet(0.5 * lam**2),
        DRIFT_HAT: const_jet(0.0),
    }
    return ModelSpec(
        name="black_scholes",
        mu=_constant(mu),
        sigma=_constant(sigma),
        c=_constant(0.0),
        beta=_constant(0.0),
        rho=0.0,
        omega=_constant(omega),
        preset=ModelPreset.BLACK_SCHOLES,
        jets=jets,
    )


def from_config(conf: dict) -> ModelSpec:
    """
    Build a preset model from the `model` section of a validated configuration

    :param conf: the model section (as dumped by :class:`isr.configmodels.ConfigModelSpecModel`)
    :type conf: dict
    :return: the model
    :rtype: ModelSpec
    """
    preset = ModelPreset(conf["preset"])
    omega = conf.get("omega", 0.0)
    if preset == ModelPreset.HESTON:
        return heston(HestonParams(**conf["heston"]), omega)
    if preset == ModelPreset.RECIPROCAL_HESTON:
        return reciprocal_heston(ReciprocalHestonParams(**conf["reciprocal_heston"]), omega)
    if preset == ModelPreset.BLACK_SCHOLES:
        return black_scholes(BlackScholesParams(**conf["black_scholes"]), omega)
    raise ParameterException("custom models are code level only and must be passed in explicitly")
