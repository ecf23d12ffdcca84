"""
Differential operators with polynomial coefficients in normal order: every term is
c (x - x_bar)^i (y - y_bar)^j d_x^a d_y^b with the multiplications to the left of
the derivatives.
"""

import logging
import math
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, NamedTuple, Tuple

import numpy as np
from numpy.typing import ArrayLike

from isr import bskernel
from isr.exceptions import OperatorDegreeException, TimeOrderException, UnsupportedOrderException
from isr.model import DRIFT, DRIFT_HAT, HALF_BETA_SQ, HALF_SIGMA_SQ, RHO_SIGMA_BETA, CoefficientTable, ExpansionPoint

logger = logging.getLogger(__name__)

MAX_MONOMIAL_DEGREE = 4
MAX_DERIVATIVE_ORDER = 6

Key = Tuple[int, int, int, int]
Poly = Dict[Tuple[int, int], float]

ONE: Poly = {(0, 0): 1.0}


class OpTerm(NamedTuple):
    coeff: float
    i: int
    j: int
    a: int
    b: int


class DiffOperator:
    """
    An immutable operator anchored at an expansion point. Operators anchored at
    different points cannot be combined.
    """

    __slots__ = ("_terms", "point")

    def __init__(self, terms: Mapping[Key, float], point: ExpansionPoint):
        clean = {}
        for key, coeff in terms.items():
            if coeff == 0.0:
                continue
            i, j, a, b = key
            if i + j > MAX_MONOMIAL_DEGREE:
                raise OperatorDegreeException(f"monomial degree {i + j} exceeds {MAX_MONOMIAL_DEGREE}")
            if a + b > MAX_DERIVATIVE_ORDER:
                raise OperatorDegreeException(f"derivative order {a + b} exceeds {MAX_DERIVATIVE_ORDER}")
            clean[key] = float(coeff)
        self._terms = clean
        self.point = point

    @classmethod
    def zero(cls, point: ExpansionPoint) -> "DiffOperator":
        return cls({}, point)

    @classmethod
    def scalar(cls, point: ExpansionPoint, c: float) -> "DiffOperator":
        return cls({(0, 0, 0, 0): c}, point)

    @classmethod
    def identity(cls, point: ExpansionPoint) -> "DiffOperator":
        return cls.scalar(point, 1.0)

    @classmethod
    def monomial(cls, point: ExpansionPoint, i: int, j: int, c: float = 1.0) -> "DiffOperator":
        return cls({(i, j, 0, 0): c}, point)

    @classmethod
    def derivative(cls, point: ExpansionPoint, a: int, b: int, c: float = 1.0) -> "DiffOperator":
        return cls({(0, 0, a, b): c}, point)

    def terms(self) -> List[OpTerm]:
        return [OpTerm(c, *key) for key, c in sorted(self._terms.items())]

    def as_dict(self) -> Dict[Key, float]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        return max((i + j for (i, j, _, _) in self._terms), default=0)

    @property
    def order(self) -> int:
        return max((a + b for (_, _, a, b) in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def _check_point(self, other: "DiffOperator") -> None:
        if self.point != other.point:
            raise ValueError(f"operators anchored at {self.point} and {other.point} cannot be combined")

    def __add__(self, other: "DiffOperator") -> "DiffOperator":
        return linear_combination(self.point, [(1.0, self), (1.0, other)])

    def __sub__(self, other: "DiffOperator") -> "DiffOperator":
        return linear_combination(self.point, [(1.0, self), (-1.0, other)])

    def __neg__(self) -> "DiffOperator":
        return DiffOperator({k: -c for k, c in self._terms.items()}, self.point)

    def __mul__(self, scalar: float) -> "DiffOperator":
        return DiffOperator({k: scalar * c for k, c in self._terms.items()}, self.point)

    __rmul__ = __mul__

    def __matmul__(self, other: "DiffOperator") -> "DiffOperator":
        return compose(self, other)

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        return f"DiffOperator({self.terms()}, point={self.point})"


def linear_combination(point: ExpansionPoint, weighted: Iterable[Tuple[float, DiffOperator]]) -> DiffOperator:
    """
    Sum of weight * operator over the given pairs
    """
    acc: Dict[Key, float] = defaultdict(float)
    for weight, op in weighted:
        if op.point != point:
            raise ValueError(f"operator anchored at {op.point} cannot be added at {point}")
        for key, c in op._terms.items():
            acc[key] += weight * c
    return DiffOperator(acc, point)


def compose(left: DiffOperator, right: DiffOperator) -> DiffOperator:
    """
    Normal ordered product left o right, using the Leibniz rule
    d^a (x - x_bar)^i = sum_m C(a, m) i!/(i - m)! (x - x_bar)^(i - m) d^(a - m)

    :param left: the operator applied last
    :type left: DiffOperator
    :param right: the operator applied first
    :type right: DiffOperator
    :return: the composed operator
    :rtype: DiffOperator
    """
    left._check_point(right)
    acc: Dict[Key, float] = defaultdict(float)
    for (i1, j1, a1, b1), c1 in left._terms.items():
        for (i2, j2, a2, b2), c2 in right._terms.items():
            for m in range(min(a1, i2) + 1):
                cx = math.comb(a1, m) * math.perm(i2, m)
                for n in range(min(b1, j2) + 1):
                    cy = math.comb(b1, n) * math.perm(j2, n)
                    acc[(i1 + i2 - m, j1 + j2 - n, a1 + a2 - m, b1 + b2 - n)] += c1 * c2 * cx * cy
    return DiffOperator(acc, left.point)


def power(op: DiffOperator, n: int) -> DiffOperator:
    result = DiffOperator.identity(op.point)
    for _ in range(n):
        result = compose(result, op)
    return result


def apply_to_poly(op: DiffOperator, f: Poly) -> Poly:
    """
    Apply an operator to a polynomial in the centered variables (x - x_bar, y - y_bar)
    """
    acc: Poly = defaultdict(float)
    for (i, j, a, b), c in op._terms.items():
        for (p, q), fc in f.items():
            if a > p or b > q:
                continue
            acc[(i + p - a, j + q - b)] += c * fc * math.perm(p, a) * math.perm(q, b)
    return {k: v for k, v in acc.items() if v != 0.0}


def eval_poly(f: Poly, point: ExpansionPoint, x: ArrayLike, y: ArrayLike) -> np.ndarray:
    dx = np.asarray(x, dtype=float) - point.x_bar
    dy = np.asarray(y, dtype=float) - point.y_bar
    result = np.zeros(np.broadcast(dx, dy).shape)
    for (p, q), c in f.items():
        result = result + c * dx**p * dy**q
    return result


def apply_to_pbs(op: DiffOperator, inputs: bskernel.BsInputs, y: ArrayLike) -> np.ndarray:
    """
    Apply an operator to the Black-Scholes call price seen as a function of (x, y).
    Terms with a y-derivative vanish.

    :param op: the operator
    :type op: DiffOperator
    :param inputs: the call inputs, inputs.x is the evaluation log price
    :type inputs: bskernel.BsInputs
    :param y: the evaluation factor value
    :type y: ArrayLike
    :return: the operator applied to the call price at (inputs.x, y)
    :rtype: np.ndarray
    """
    derivs = bskernel.bs_dx_all(inputs, op.order)
    dx = np.asarray(inputs.x, dtype=float) - op.point.x_bar
    dy = np.asarray(y, dtype=float) - op.point.y_bar
    result = np.zeros(np.broadcast(dx, dy).shape)
    for (i, j, a, b), c in op._terms.items():
        if b > 0:
            continue
        result = result + c * dx**i * dy**j * derivs[a]
    return result


def _drift_family(hatted: bool) -> str:
    return DRIFT_HAT if hatted else DRIFT


def centered_xy(
    table: CoefficientTable, t: float, t1: float, hatted: bool = False
) -> Tuple[DiffOperator, DiffOperator]:
    """
    The operators X - x_bar and Y - y_bar of the frozen coefficient semigroup
    """
    if t1 < t:
        raise TimeOrderException(t, t1)
    tau = t1 - t
    point = table.point
    s0 = table.coeff(HALF_SIGMA_SQ, 0, 0)
    r0 = table.coeff(RHO_SIGMA_BETA, 0, 0)
    b0 = table.coeff(HALF_BETA_SQ, 0, 0)
    d0 = table.coeff(_drift_family(hatted), 0, 0)
    x_op = DiffOperator(
        {(1, 0, 0, 0): 1.0, (0, 0, 0, 0): -s0 * tau, (0, 0, 1, 0): 2 * s0 * tau, (0, 0, 0, 1): r0 * tau}, point
    )
    y_op = DiffOperator(
        {(0, 1, 0, 0): 1.0, (0, 0, 0, 0): d0 * tau, (0, 0, 0, 1): 2 * b0 * tau, (0, 0, 1, 0): r0 * tau}, point
    )
    return x_op, y_op


def build_xy(table: CoefficientTable, t: float, t1: float, hatted: bool = False) -> Tuple[DiffOperator, DiffOperator]:
    """
    The operators X and Y such that the frozen coefficient semigroup from t to t1
    maps f to f(X, Y) applied to 1 for polynomial f

        X = x + (t1 - t)(-s0 + 2 s0 d_x + r0 d_y)
        Y = y + (t1 - t)(c0 + 2 b0 d_y + r0 d_x)

    with s0, c0, b0, r0 the order zero coefficients of 1/2 sigma^2, the (hatted)
    drift, 1/2 beta^2 and rho sigma beta.
    """
    x_op, y_op = centered_xy(table, t, t1, hatted)
    point = table.point
    return (
        x_op + DiffOperator.scalar(point, point.x_bar),
        y_op + DiffOperator.scalar(point, point.y_bar),
    )


def _family_derivatives(point: ExpansionPoint) -> Dict[str, DiffOperator]:
    return {
        HALF_SIGMA_SQ: DiffOperator({(0, 0, 2, 0): 1.0, (0, 0, 1, 0): -1.0}, point),
        DRIFT: DiffOperator.derivative(point, 0, 1),
        HALF_BETA_SQ: DiffOperator.derivative(point, 0, 2),
        RHO_SIGMA_BETA: DiffOperator.derivative(point, 1, 1),
    }


def _centered_powers(x_op: DiffOperator, y_op: DiffOperator, n: int) -> Dict[Tuple[int, int], DiffOperator]:
    return {(p, n - p): compose(power(x_op, p), power(y_op, n - p)) for p in range(n + 1)}


def substitute(f: Poly, table: CoefficientTable, t: float, t1: float, hatted: bool = False) -> DiffOperator:
    """
    The operator f(X, Y) for a polynomial f in the centered variables. X and Y
    commute so the order of the factors does not matter.
    """
    x_op, y_op = centered_xy(table, t, t1, hatted)
    weighted = []
    for (p, q), c in f.items():
        weighted.append((c, compose(power(x_op, p), power(y_op, q))))
    return linear_combination(table.point, weighted)


def semigroup_poly(f: Poly, table: CoefficientTable, t: float, t1: float, hatted: bool = False) -> Poly:
    """
    The frozen coefficient semigroup from t to t1 applied to a polynomial
    """
    return apply_to_poly(substitute(f, table, t, t1, hatted), ONE)


def build_g(n: int, table: CoefficientTable, t: float, t1: float, hatted: bool = False) -> DiffOperator:
    """
    The operator G_n(t, t1): the order n part of the generator with every
    coefficient monomial (x - x_bar)^i (y - y_bar)^j replaced by
    (X - x_bar)^i (Y - y_bar)^j, placed to the left of the derivatives

    :param n: the order, 1 or 2
    :type n: int
    :param table: the Taylor coefficients
    :type table: CoefficientTable
    :param t: start time
    :type t: float
    :param t1: end time, t1 >= t
    :type t1: float
    :param hatted: use the pricing measure drift
    :type hatted: bool
    :return: the operator G_n(t, t1)
    :rtype: DiffOperator
    """
    if n not in (1, 2):
        raise UnsupportedOrderException(f"generator order {n} is not in 1..2")
    if t1 < t:
        raise TimeOrderException(t, t1)
    point = table.point
    derivatives = _family_derivatives(point)
    families = [(HALF_SIGMA_SQ, HALF_SIGMA_SQ), (_drift_family(hatted), DRIFT), (HALF_BETA_SQ, HALF_BETA_SQ)]
    families.append((RHO_SIGMA_BETA, RHO_SIGMA_BETA))

    active = [(fam, d) for fam, d in families if any(c != 0.0 for c in table.order_terms(fam, n).values())]
    if not active:
        return DiffOperator.zero(point)
    x_op, y_op = centered_xy(table, t, t1, hatted)
    powers = _centered_powers(x_op, y_op, n)
    pieces = []
    for fam, d in active:
        coefficient = linear_combination(point, [(c, powers[ij]) for ij, c in table.order_terms(fam, n).items()])
        pieces.append((1.0, compose(coefficient, derivatives[d])))
    return linear_combination(point, pieces)
