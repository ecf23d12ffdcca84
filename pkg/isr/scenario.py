import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

from isr.bskernel import BsInputs
from isr.exceptions import MaturityException, ParameterException
from isr.model import ExpansionPoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    """
    One evaluation of the implied Sharpe ratio: an investor with risk aversion
    `gamma` and wealth `w` holding `nu` calls with log strike `k` and maturity `T`
    """

    t: float
    T: float
    x: float
    y: float
    k: float
    nu: float
    gamma: float
    w: float = 0.0
    x_bar: Optional[float] = None
    y_bar: Optional[float] = None

    def __post_init__(self):
        if not self.T > self.t:
            raise MaturityException(self.t, self.T)
        if not self.gamma > 0:
            raise ParameterException(f"risk aversion must be positive, got {self.gamma}")
        for name in ("t", "T", "x", "y", "k", "nu", "w"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterException(f"scenario field '{name}' must be finite")

    @property
    def tau(self) -> float:
        return self.T - self.t

    @property
    def gamma_nu(self) -> float:
        return self.gamma * self.nu

    @property
    def point(self) -> ExpansionPoint:
        """
        The expansion point, defaulting to the current state
        """
        return ExpansionPoint(
            x_bar=self.x if self.x_bar is None else self.x_bar,
            y_bar=self.y if self.y_bar is None else self.y_bar,
        )

    def bs_inputs(self, sigma0: float) -> BsInputs:
        return BsInputs(t=self.t, T=self.T, x=self.x, k=self.k, sigma0=sigma0)

    def evolve(self, **changes) -> "Scenario":
        return replace(self, **changes)
