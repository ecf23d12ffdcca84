import math
import pathlib
from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ModelPreset(str, Enum):
    HESTON = "heston"
    RECIPROCAL_HESTON = "reciprocal_heston"
    BLACK_SCHOLES = "black_scholes"
    CUSTOM = "custom"


class HestonParams(BaseModel):
    """
    Heston variance dynamics dY = kappa (theta - Y) dt + delta sqrt(Y) dB with the
    market price of risk lambda(y) = -sqrt(y)/2 + sqrt(theta)/3
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kappa: float = Field(description="Mean reversion speed", gt=0)
    theta: float = Field(description="Long run variance", gt=0)
    delta: float = Field(description="Volatility of variance", gt=0)
    rho: float = Field(description="Correlation between the asset and the variance", gt=-1, lt=1)


class ReciprocalHestonParams(BaseModel):
    """
    Reciprocal Heston model: the reciprocal of the variance follows a CIR process
    with parameters (a, kappa, b) and the asset drift mu is constant
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    mu: float = Field(description="Constant asset drift")
    a: float = Field(description="Mean reversion speed of the reciprocal variance", gt=0)
    b: float = Field(description="Volatility of the reciprocal variance", gt=0)
    kappa: float = Field(description="Long run level of the reciprocal variance", gt=0)
    rho: float = Field(description="Correlation between the asset and the variance", gt=-1, lt=1)
    rho_sq_denominator: bool = Field(
        description="Use (1 - rho^2) instead of (1 - rho)^2 in the quadratic drift coefficient", default=False
    )

    @model_validator(mode="after")
    def check_feller(self) -> "ReciprocalHestonParams":
        if 2 * self.a * self.kappa < self.b**2:
            raise ValueError(f"Feller condition 2*a*kappa >= b^2 violated ({2 * self.a * self.kappa} < {self.b**2})")
        return self


class BlackScholesParams(BaseModel):
    """
    Constant coefficient market: mu and sigma do not depend on the state
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    mu: float = Field(description="Constant asset drift")
    sigma: float = Field(description="Constant asset volatility", gt=0)


class ConfigModelSpecModel(BaseModel):
    """
    Market model selection
    """

    model_config = ConfigDict(extra="forbid")

    preset: ModelPreset = Field(description="The model preset. 'custom' models must be passed through the API")
    heston: Optional[HestonParams] = Field(description="Heston parameters", default=None)
    reciprocal_heston: Optional[ReciprocalHestonParams] = Field(
        description="Reciprocal Heston parameters", default=None
    )
    black_scholes: Optional[BlackScholesParams] = Field(description="Black-Scholes parameters", default=None)
    omega: float = Field(description="Constant market price of volatility risk", default=0.0)
    coefficients: Literal["analytic", "finite_difference"] = Field(
        description="How the Taylor coefficients are computed", default="analytic"
    )

    @model_validator(mode="after")
    def check_preset_parameters(self) -> "ConfigModelSpecModel":
        if self.preset != ModelPreset.CUSTOM and getattr(self, self.preset.value) is None:
            raise ValueError(f"preset '{self.preset.value}' requires a '{self.preset.value}' section")
        return self


class ConfigScenarioModel(BaseModel):
    """
    The base scenario. Sweeps vary one field of it
    """

    model_config = ConfigDict(extra="forbid")

    t: float = Field(description="Current time", default=0.0)
    T: float = Field(description="Option maturity")
    x: float = Field(description="Log price of the asset")
    y: Optional[float] = Field(description="Current state of the factor. Defaults to y_bar", default=None)
    k: float = Field(description="Log strike of the call")
    nu: float = Field(description="Number of calls held (negative when short)", default=0.0)
    gamma: float = Field(description="Risk aversion", gt=0)
    w: float = Field(description="Wealth", default=0.0)
    x_bar: Optional[float] = Field(description="Expansion point in x. Defaults to x", default=None)
    y_bar: float = Field(description="Expansion point in y")

    @model_validator(mode="after")
    def check_maturity(self) -> "ConfigScenarioModel":
        if self.T <= self.t:
            raise ValueError(f"maturity T={self.T} must be after t={self.t}")
        return self


class ConfigSweepModel(BaseModel):
    """
    One-dimensional sweep over a scenario field, optionally crossed with lists of
    position sizes, risk aversions or maturities
    """

    model_config = ConfigDict(extra="forbid")

    axis: Literal["gamma", "log_strike", "maturity", "nu"] = Field(description="The swept scenario field")
    start: float = Field(description="First value of the axis")
    stop: float = Field(description="Last value of the axis")
    count: int = Field(description="Number of equally spaced axis values", ge=1)
    nus: Optional[List[float]] = Field(description="Position sizes crossed with every axis value", default=None)
    gammas: Optional[List[float]] = Field(description="Risk aversions crossed with every axis value", default=None)
    maturities: Optional[List[float]] = Field(description="Maturities crossed with every axis value", default=None)

    @field_validator("gammas")
    @classmethod
    def check_gammas(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and any(g <= 0 for g in v):
            raise ValueError("risk aversions must be positive")
        return v

    @model_validator(mode="after")
    def check_axis(self) -> "ConfigSweepModel":
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ValueError("sweep range must be finite")
        if self.count > 1 and self.stop <= self.start:
            raise ValueError(f"sweep range must be ordered, got start={self.start} stop={self.stop}")
        crossed = {"nu": self.nus, "gamma": self.gammas, "maturity": self.maturities}
        if crossed.get(self.axis) is not None:
            raise ValueError(f"axis '{self.axis}' cannot also be a crossing list")
        return self


class ConfigExpansionModel(BaseModel):
    """
    Settings of the expansion itself
    """

    model_config = ConfigDict(extra="forbid")

    order: Literal[0, 1, 2] = Field(description="Truncation order of the implied Sharpe ratio", default=2)
    method: Optional[Literal["general", "mmm_remark"]] = Field(
        description="Correction formulas. Defaults to 'mmm_remark' when omega is zero, 'general' otherwise",
        default=None,
    )
    quadrature_order: int = Field(description="Gauss-Legendre knots per time integral", default=32, ge=2)
    hermite_nodes: int = Field(description="Gauss-Hermite knots per axis for convolutions", default=64, ge=4)
    exp_term_source: Literal["printed", "convolution"] = Field(
        description="Which evaluation of the squared-gradient exponential term enters psi_2", default="convolution"
    )


class Grid2D(BaseModel):
    """
    Finite difference grid of the PDE oracle. The grid is centered on the scenario
    and spans the given number of standard deviations over the remaining time
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    nx: int = Field(description="Number of x nodes (odd keeps the scenario on a node)", default=201, ge=41)
    ny: int = Field(description="Number of y nodes", default=41, ge=41)
    nt: int = Field(description="Minimum number of time steps", default=200, ge=1)
    x_padding: float = Field(description="Half width of the x range in units of sigma_0 sqrt(T-t)", default=6.0, gt=0)
    y_padding: float = Field(description="Half width of the y range in units of beta_0 sqrt(T-t)", default=6.0, gt=0)
    rannacher_steps: int = Field(description="Implicit Euler steps before Crank-Nicolson", default=4, ge=0)


class McConfig(BaseModel):
    """
    Monte-Carlo pricing settings
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    paths: int = Field(description="Number of simulated paths", default=100_000, ge=2)
    steps: int = Field(description="Euler steps until maturity", default=200, ge=1)
    seed: int = Field(description="Seed of the random generator", default=42)
    antithetic: bool = Field(description="Simulate antithetic pairs", default=True)
    chunk_size: int = Field(description="Paths per independent random stream", default=50_000, ge=2)
    workers: int = Field(description="Threads used for the chunks", default=1, ge=1)


class ConfigOraclesModel(BaseModel):
    """
    Numerical references computed next to the expansion
    """

    model_config = ConfigDict(extra="forbid")

    pde: bool = Field(description="Solve the value and price PDEs on a grid", default=False)
    mc: bool = Field(description="Price the call with Monte-Carlo", default=False)
    grid: Grid2D = Field(description="PDE grid", default_factory=Grid2D)
    monte_carlo: McConfig = Field(description="Monte-Carlo settings", default_factory=McConfig)


class ConfigOutputModel(BaseModel):
    """
    Where sweep results go
    """

    model_config = ConfigDict(extra="forbid")

    path: Optional[pathlib.Path] = Field(
        description="CSV output path, relative to the config file. A JSON mirror is written next to it with --json",
        default=None,
    )


class ConfigModel(BaseModel):
    """
    The base model for the whole configuration
    """

    model_config = ConfigDict(extra="forbid")

    model: ConfigModelSpecModel
    scenario: ConfigScenarioModel
    sweep: Optional[ConfigSweepModel] = Field(
        description="Optional sweep. Without it a single point runs", default=None
    )
    expansion: ConfigExpansionModel = Field(description="Expansion settings", default_factory=ConfigExpansionModel)
    oracles: ConfigOraclesModel = Field(description="Oracle settings", default_factory=ConfigOraclesModel)
    output: ConfigOutputModel = Field(description="Output settings", default_factory=ConfigOutputModel)
    workers: int = Field(description="Threads used to evaluate sweep points", default=1, ge=1)
