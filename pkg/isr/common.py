import logging
from functools import lru_cache
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def _legendre_nodes(n: int) -> Tuple[np.ndarray, np.ndarray]:
    knots, weights = np.polynomial.legendre.leggauss(n)
    knots.setflags(write=False)
    weights.setflags(write=False)
    return knots, weights


@lru_cache(maxsize=None)
def _hermite_nodes(n: int) -> Tuple[np.ndarray, np.ndarray]:
    knots, weights = np.polynomial.hermite.hermgauss(n)
    knots = knots * np.sqrt(2)
    weights = weights / np.sqrt(np.pi)
    knots.setflags(write=False)
    weights.setflags(write=False)
    return knots, weights


def gauss_legendre(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre knots and weights mapped to the interval [a, b]

    :param a: lower bound of the integration interval
    :type a: float
    :param b: upper bound of the integration interval
    :type b: float
    :param n: number of knots
    :type n: int
    :return: the knots and the weights on [a, b]
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    if n < 1:
        raise ValueError(f"quadrature order must be positive, got {n}")
    knots, weights = _legendre_nodes(n)
    return 0.5 * (b - a) * knots + 0.5 * (b + a), 0.5 * (b - a) * weights


def gauss_hermite(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Hermite knots and weights for integration against the standard
    normal density (probabilists' convention). The weights sum to one.

    :param n: number of knots
    :type n: int
    :return: the knots and the weights
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    if n < 1:
        raise ValueError(f"quadrature order must be positive, got {n}")
    return _hermite_nodes(n)
