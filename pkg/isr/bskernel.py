import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np
from numpy.polynomial import hermite_e
from numpy.typing import ArrayLike
from scipy.special import erfc

from isr.exceptions import MaturityException, ParameterException, UnsupportedOrderException

logger = logging.getLogger(__name__)

MAX_ORDER = 6


@dataclass(frozen=True)
class BsInputs:
    """
    Black-Scholes call inputs in log variables with zero rates
    """

    t: float
    T: float
    x: ArrayLike
    k: float
    sigma0: float

    def __post_init__(self):
        if not self.T > self.t:
            raise MaturityException(self.t, self.T)
        if not self.sigma0 > 0:
            raise ParameterException(f"volatility must be positive, got {self.sigma0}")

    @property
    def total_std(self) -> float:
        return self.sigma0 * math.sqrt(self.T - self.t)

    def with_x(self, x: ArrayLike) -> "BsInputs":
        return BsInputs(t=self.t, T=self.T, x=x, k=self.k, sigma0=self.sigma0)


def norm_cdf(d: ArrayLike) -> np.ndarray:
    return 0.5 * erfc(-np.asarray(d) / math.sqrt(2))


def norm_pdf(d: ArrayLike) -> np.ndarray:
    return np.exp(-0.5 * np.asarray(d) ** 2) / math.sqrt(2 * math.pi)


def d_plus(inputs: BsInputs) -> np.ndarray:
    s = inputs.total_std
    return (np.asarray(inputs.x, dtype=float) - inputs.k + 0.5 * s**2) / s


def d_minus(inputs: BsInputs) -> np.ndarray:
    return d_plus(inputs) - inputs.total_std


def payoff(x: ArrayLike, k: float) -> np.ndarray:
    return np.maximum(np.exp(np.asarray(x, dtype=float)) - math.exp(k), 0.0)


def bs_price(inputs: BsInputs) -> np.ndarray:
    """
    Call price e^x Phi(d+) - e^k Phi(d-)
    """
    x = np.asarray(inputs.x, dtype=float)
    return np.exp(x) * norm_cdf(d_plus(inputs)) - math.exp(inputs.k) * norm_cdf(d_minus(inputs))


def gamma_term(inputs: BsInputs) -> np.ndarray:
    """
    (d_x^2 - d_x) applied to the call price, e^x phi(d+) / (sigma0 sqrt(T - t))
    """
    x = np.asarray(inputs.x, dtype=float)
    return np.exp(x) * norm_pdf(d_plus(inputs)) / inputs.total_std


def _gamma_term_dx(inputs: BsInputs, m: int) -> np.ndarray:
    # d_x^m [e^x phi(d)] / s with phi^(j)(d) = (-1)^j He_j(d) phi(d) and dd/dx = 1/s
    s = inputs.total_std
    d = d_plus(inputs)
    acc = np.zeros(np.shape(d))
    for j in range(m + 1):
        coef = np.zeros(j + 1)
        coef[j] = 1.0
        acc = acc + math.comb(m, j) * (-1.0 / s) ** j * hermite_e.hermeval(d, coef)
    x = np.asarray(inputs.x, dtype=float)
    return np.exp(x) * norm_pdf(d) * acc / s


def bs_dx_all(inputs: BsInputs, n_max: int) -> List[np.ndarray]:
    """
    All x-derivatives of the call price of order 0..n_max

    :param inputs: the call inputs
    :type inputs: BsInputs
    :param n_max: highest derivative order (at most 6)
    :type n_max: int
    :return: the derivatives d_x^n p for n = 0..n_max
    :rtype: List[np.ndarray]
    """
    if not 0 <= n_max <= MAX_ORDER:
        raise UnsupportedOrderException(f"derivative order {n_max} is not in 0..{MAX_ORDER}")
    x = np.asarray(inputs.x, dtype=float)
    derivs = [bs_price(inputs)]
    if n_max >= 1:
        derivs.append(np.exp(x) * norm_cdf(d_plus(inputs)))
    # d_x^n p = d_x^(n-1) p + d_x^(n-2) g with g = (d_x^2 - d_x) p
    for n in range(2, n_max + 1):
        derivs.append(derivs[n - 1] + _gamma_term_dx(inputs, n - 2))
    return derivs


def bs_dx(inputs: BsInputs, n: int) -> np.ndarray:
    """
    The n-th derivative of the call price with respect to the log price
    """
    return bs_dx_all(inputs, n)[n]
