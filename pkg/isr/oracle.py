import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import splu

from isr import bskernel
from isr.common import gauss_hermite
from isr.configmodels import Grid2D, McConfig
from isr.exceptions import (
    CovarianceException,
    DomainException,
    NonFinitePathsException,
    OracleInstabilityException,
    TimeOrderException,
    ValueDominanceException,
)
from isr.model import (
    DRIFT,
    DRIFT_HAT,
    HALF_BETA_SQ,
    HALF_LAMBDA_SQ,
    HALF_SIGMA_SQ,
    RHO_SIGMA_BETA,
    CoefficientTable,
    ModelSpec,
)
from isr.scenario import Scenario

logger = logging.getLogger(__name__)

# fraction of Monte-Carlo paths allowed to be dropped as non-finite
MAX_NONFINITE_FRACTION = 1e-4
RECIPROCAL_FLOOR = 1e-8
# solution magnitude, relative to the payoff scale, reported as a blow-up
BLOW_UP_FACTOR = 1e10


def gaussian_convolution(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    table: CoefficientTable,
    t: float,
    t1: float,
    x: float,
    y: float,
    nodes: int = 64,
    hatted: bool = False,
) -> float:
    """
    Apply the frozen coefficient semigroup from t to t1 to f at (x, y): the
    expectation of f under the Gaussian with mean (x - s0 tau, y + c0 tau) and
    covariance tau [[2 s0, r0], [r0, 2 b0]], tau = t1 - t, computed with a tensor
    Gauss-Hermite rule after a Cholesky factorisation.

    :param f: vectorised function of (x, y)
    :type f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    :param table: the Taylor coefficients (only order zero is used)
    :type table: CoefficientTable
    :param t: start time
    :type t: float
    :param t1: end time
    :type t1: float
    :param x: evaluation log price
    :type x: float
    :param y: evaluation factor value
    :type y: float
    :param nodes: Gauss-Hermite knots per axis
    :type nodes: int
    :param hatted: use the pricing measure drift
    :type hatted: bool
    :return: the convolution value
    :rtype: float
    """
    if t1 < t:
        raise TimeOrderException(t, t1)
    tau = t1 - t
    if tau == 0:
        return float(f(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))
    s0 = table.coeff(HALF_SIGMA_SQ, 0, 0)
    r0 = table.coeff(RHO_SIGMA_BETA, 0, 0)
    b0 = table.coeff(HALF_BETA_SQ, 0, 0)
    d0 = table.coeff(DRIFT_HAT if hatted else DRIFT, 0, 0)
    var_x, var_y, cov = 2 * s0 * tau, 2 * b0 * tau, r0 * tau
    if var_x <= 0 or var_y < 0:
        raise CovarianceException(f"covariance diagonal ({var_x}, {var_y}) is not positive")
    chol_x = math.sqrt(var_x)
    chol_c = cov / chol_x
    chol_d2 = var_y - chol_c**2
    if chol_d2 < -1e-12 * max(var_y, 1e-300):
        raise CovarianceException(f"covariance matrix is not positive semi-definite ({chol_d2})")
    chol_d = math.sqrt(max(chol_d2, 0.0))

    z, w = gauss_hermite(nodes)
    mean_x, mean_y = x - s0 * tau, y + d0 * tau
    if chol_c == 0.0 and chol_d == 0.0:
        values = np.asarray(f(mean_x + chol_x * z, np.full_like(z, mean_y)), dtype=float)
        return float(w @ values)
    z1, z2 = np.meshgrid(z, z, indexing="ij")
    weights = np.outer(w, w)
    values = np.asarray(f(mean_x + chol_x * z1, mean_y + chol_c * z1 + chol_d * z2), dtype=float)
    return float(np.sum(weights * values))


@dataclass
class PdeSolution:
    """
    Solution of a backward PDE at the scenario time on a (y, x) grid
    """

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    steps: int

    def at(self, x: float, y: float) -> float:
        spline = RectBivariateSpline(self.y, self.x, self.values, kx=3, ky=3)
        return float(spline.ev(y, x))


def _grid_axes(model: ModelSpec, scenario: Scenario, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    x, y, tau = scenario.x, scenario.y, scenario.tau
    sigma = float(np.sqrt(2 * model.family(HALF_SIGMA_SQ, x, y)))
    beta = float(np.sqrt(2 * model.family(HALF_BETA_SQ, x, y)))
    half_x = grid.x_padding * sigma * math.sqrt(tau)
    half_y = max(grid.y_padding * beta * math.sqrt(tau), 1e-3 * max(1.0, abs(y)))
    y_lo, y_hi = y - half_y, y + half_y
    if model.positive_y:
        y_lo = max(y_lo, 0.1 * y)
    xs = np.linspace(x - half_x, x + half_x, grid.nx)
    ys = np.linspace(y_lo, y_hi, grid.ny)
    return xs, ys


def _assemble(
    model: ModelSpec, xs: np.ndarray, ys: np.ndarray, drift_family: str
) -> Tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
    """
    The generator on interior nodes, the boundary constraint rows and the interior mask.
    x boundaries carry a vanishing second derivative, y boundaries a vanishing first derivative.
    """
    nx, ny = len(xs), len(ys)
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    X, Y = np.meshgrid(xs, ys)
    s = np.broadcast_to(model.family(HALF_SIGMA_SQ, X, Y), X.shape)
    d = np.broadcast_to(model.family(drift_family, X, Y), X.shape)
    b = np.broadcast_to(model.family(HALF_BETA_SQ, X, Y), X.shape)
    r = np.broadcast_to(model.family(RHO_SIGMA_BETA, X, Y), X.shape)

    index = np.arange(nx * ny).reshape(ny, nx)
    interior = np.zeros((ny, nx), dtype=bool)
    interior[1:-1, 1:-1] = True
    jj, ii = np.nonzero(interior)
    c = index[jj, ii]
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []

    def add(dj: int, di: int, v: np.ndarray) -> None:
        rows.append(c)
        cols.append(index[jj + dj, ii + di])
        vals.append(v)

    si, di_, bi, ri = s[jj, ii], d[jj, ii], b[jj, ii], r[jj, ii]
    # s (d_xx - d_x)
    add(0, -1, si * (1 / dx**2 + 1 / (2 * dx)))
    add(0, 1, si * (1 / dx**2 - 1 / (2 * dx)))
    add(0, 0, -2 * si / dx**2)
    # b d_yy + d d_y, upwinded where the cell Peclet number exceeds one
    upwind = np.abs(di_) * dy > 2 * bi
    central = ~upwind
    add(-1, 0, bi / dy**2 - np.where(central, di_ / (2 * dy), np.where(di_ < 0, di_ / dy, 0.0)))
    add(1, 0, bi / dy**2 + np.where(central, di_ / (2 * dy), np.where(di_ > 0, di_ / dy, 0.0)))
    add(0, 0, -2 * bi / dy**2 - np.where(central, 0.0, np.abs(di_) / dy))
    # r d_xy
    cross = ri / (4 * dx * dy)
    add(1, 1, cross)
    add(1, -1, -cross)
    add(-1, 1, -cross)
    add(-1, -1, cross)
    n = nx * ny
    generator = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))

    b_rows, b_cols, b_vals = [], [], []
    for j in range(ny):
        for i, (n1, n2) in ((0, (1, 2)), (nx - 1, (nx - 2, nx - 3))):
            b_rows += [index[j, i]] * 3
            b_cols += [index[j, i], index[j, n1], index[j, n2]]
            b_vals += [1.0, -2.0, 1.0]
    for i in range(1, nx - 1):
        for j, j1 in ((0, 1), (ny - 1, ny - 2)):
            b_rows += [index[j, i]] * 2
            b_cols += [index[j, i], index[j1, i]]
            b_vals += [1.0, -1.0]
    constraints = sp.coo_matrix((b_vals, (b_rows, b_cols)), shape=(n, n))
    return generator.tocsr(), constraints.tocsr(), interior.ravel()


def _solve_backward(
    model: ModelSpec,
    scenario: Scenario,
    grid: Grid2D,
    terminal: np.ndarray,
    drift_family: str,
    nonlinear: bool,
    xs: np.ndarray,
    ys: np.ndarray,
) -> PdeSolution:
    nx, ny = len(xs), len(ys)
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    tau = scenario.tau
    generator, constraints, mask = _assemble(model, xs, ys, drift_family)
    X, Y = np.meshgrid(xs, ys)
    b = np.broadcast_to(model.family(HALF_BETA_SQ, X, Y), X.shape)
    s_max = float(np.max(model.family(HALF_SIGMA_SQ, X, Y)))
    b_max = float(np.max(b))

    dt_bound = dx**2 / (2 * s_max)
    if b_max > 0:
        dt_bound = min(dt_bound, dy**2 / (2 * b_max))
    steps = max(grid.nt, math.ceil(tau / dt_bound))
    dt = tau / steps
    logger.debug(f"pde grid {nx}x{ny} with {steps} steps (dt={dt})")

    source = np.zeros_like(X)
    gradient_coef = np.zeros_like(X)
    if nonlinear:
        source = -np.broadcast_to(model.family(HALF_LAMBDA_SQ, X, Y), X.shape)
        gradient_coef = (1 - model.rho**2) * b
    interior = mask.astype(float)
    n = nx * ny
    identity_interior = sp.diags(interior)

    def factor(theta: float):
        return splu((constraints + identity_interior - theta * dt * generator).tocsc())

    implicit = factor(1.0)
    crank_nicolson = factor(0.5)

    def explicit_part(u: np.ndarray) -> np.ndarray:
        if not nonlinear:
            return np.zeros(n)
        grid_u = u.reshape(ny, nx)
        grad = np.zeros_like(grid_u)
        grad[1:-1, :] = (grid_u[2:, :] - grid_u[:-2, :]) / (2 * dy)
        return (gradient_coef * grad**2 + source).ravel()

    u = terminal.ravel().astype(float)
    scale = 1.0 + float(np.max(np.abs(u)))
    for step in range(steps):
        theta, lu = (1.0, implicit) if step < grid.rannacher_steps else (0.5, crank_nicolson)
        rhs = interior * (u + (1 - theta) * dt * (generator @ u) + dt * explicit_part(u))
        u = lu.solve(rhs)
        if not np.all(np.isfinite(u)) or float(np.max(np.abs(u))) > BLOW_UP_FACTOR * scale:
            raise OracleInstabilityException(f"pde solution blew up after {step + 1} of {steps} steps")
    return PdeSolution(x=xs, y=ys, values=u.reshape(ny, nx), steps=steps)


def _check_scenario(model: ModelSpec, scenario: Scenario) -> None:
    if not model.in_domain(scenario.x, scenario.y):
        raise DomainException(model.name, scenario.x, scenario.y)


def solve_psi_pde(model: ModelSpec, scenario: Scenario, grid: Grid2D) -> PdeSolution:
    """
    Solve the semilinear equation of the value function exponent psi backward from
    psi(T) = -gamma nu (e^x - e^k)^+ with implicit linear and explicit gradient terms
    """
    _check_scenario(model, scenario)
    xs, ys = _grid_axes(model, scenario, grid)
    X, _ = np.meshgrid(xs, ys)
    terminal = -scenario.gamma_nu * bskernel.payoff(X, scenario.k)
    return _solve_backward(model, scenario, grid, terminal, DRIFT, True, xs, ys)


def solve_price_pde(model: ModelSpec, scenario: Scenario, grid: Grid2D) -> PdeSolution:
    """
    Solve the linear pricing equation under the pricing measure
    """
    _check_scenario(model, scenario)
    xs, ys = _grid_axes(model, scenario, grid)
    X, _ = np.meshgrid(xs, ys)
    terminal = bskernel.payoff(X, scenario.k)
    return _solve_backward(model, scenario, grid, terminal, DRIFT_HAT, False, xs, ys)


@dataclass
class McResult:
    price: float
    std_error: float
    paths: int
    dropped: int


def _mc_chunk(model: ModelSpec, scenario: Scenario, cfg: McConfig, seed: np.random.SeedSequence, n: int) -> np.ndarray:
    """
    Discounted payoffs of one chunk. With antithetic sampling the pair averages are returned.
    """
    rng = np.random.default_rng(seed)
    half = (n + 1) // 2 if cfg.antithetic else n
    dt = scenario.tau / cfg.steps
    sqrt_dt = math.sqrt(dt)
    rho_bar = math.sqrt(1 - model.rho**2)
    width = 2 * half if cfg.antithetic else half
    x = np.full(width, scenario.x)
    if model.simulate_reciprocal:
        state = np.full(width, 1.0 / scenario.y)
    else:
        state = np.full(width, scenario.y)

    for _ in range(cfg.steps):
        z = rng.standard_normal((2, half))
        if cfg.antithetic:
            z = np.concatenate([z, -z], axis=1)
        dw1 = sqrt_dt * z[0]
        dw2 = sqrt_dt * (model.rho * z[0] + rho_bar * z[1])
        if model.simulate_reciprocal:
            y = 1.0 / np.maximum(state, RECIPROCAL_FLOOR)
        elif model.positive_y:
            y = np.maximum(state, 0.0)
        else:
            y = state
        sigma = np.asarray(model.sigma(x, y))
        beta = np.asarray(model.beta(x, y))
        drift = np.asarray(model.family(DRIFT_HAT, x, y))
        x = x - 0.5 * sigma**2 * dt + sigma * dw1
        if model.simulate_reciprocal:
            # Ito for 1/Y
            state = state + (-drift / y**2 + beta**2 / y**3) * dt - beta / y**2 * dw2
        else:
            state = state + drift * dt + beta * dw2

    payoff = bskernel.payoff(x, scenario.k)
    if cfg.antithetic:
        return 0.5 * (payoff[:half] + payoff[half:])
    return payoff


def mc_price(model: ModelSpec, scenario: Scenario, cfg: McConfig) -> McResult:
    """
    Euler full truncation Monte-Carlo price of the call under the pricing measure.
    The random streams are spawned per chunk from the seed so results do not depend
    on the number of workers.

    :param model: the market model
    :type model: ModelSpec
    :param scenario: the scenario, only t, T, x, y and k are used
    :type scenario: Scenario
    :param cfg: Monte-Carlo settings
    :type cfg: McConfig
    :return: the price, its standard error and the path counts
    :rtype: McResult
    """
    _check_scenario(model, scenario)
    sizes = [cfg.chunk_size] * (cfg.paths // cfg.chunk_size)
    if cfg.paths % cfg.chunk_size:
        sizes.append(cfg.paths % cfg.chunk_size)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        chunks = list(executor.map(lambda args: _mc_chunk(model, scenario, cfg, *args), zip(seeds, sizes)))
    samples = np.concatenate(chunks)
    finite = np.isfinite(samples)
    dropped = int(samples.size - np.count_nonzero(finite))
    if dropped > MAX_NONFINITE_FRACTION * samples.size:
        raise NonFinitePathsException(dropped, samples.size)
    if dropped:
        logger.warning(f"dropped {dropped} non-finite Monte-Carlo samples")
    samples = samples[finite]
    price = float(np.mean(samples))
    std_error = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    logger.debug(f"monte-carlo price {price} +- {std_error} from {samples.size} samples")
    return McResult(price=price, std_error=std_error, paths=cfg.paths, dropped=dropped)


def implied_sharpe_reference(psi: float, price: float, scenario: Scenario) -> float:
    """
    The implied Sharpe ratio sqrt(-2 (gamma nu p + psi) / (T - t)) from reference values
    """
    radicand = -2 * (scenario.gamma_nu * price + psi) / scenario.tau
    if radicand < 0:
        raise ValueDominanceException(radicand)
    return math.sqrt(radicand)


@dataclass
class ReferenceSharpe:
    sharpe: float
    psi: float
    price: float


def reference_sharpe(model: ModelSpec, scenario: Scenario, grid: Grid2D) -> ReferenceSharpe:
    """
    Solve both PDEs on the same grid and combine them into the implied Sharpe ratio
    """
    psi = solve_psi_pde(model, scenario, grid).at(scenario.x, scenario.y)
    price = solve_price_pde(model, scenario, grid).at(scenario.x, scenario.y)
    return ReferenceSharpe(sharpe=implied_sharpe_reference(psi, price, scenario), psi=psi, price=price)
