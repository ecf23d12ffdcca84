import math

import numpy as np
import pytest
from pydantic import ValidationError

from isr import bskernel, model, oracle
from isr.bskernel import BsInputs
from isr.configmodels import BlackScholesParams, Grid2D, HestonParams, McConfig, ReciprocalHestonParams
from isr.exceptions import DomainException, OracleInstabilityException, TimeOrderException, ValueDominanceException
from isr.model import ExpansionPoint
from isr.scenario import Scenario
from isr.sharpe import implied_sharpe

LOG100 = math.log(100.0)
BLACK_SCHOLES = model.black_scholes(BlackScholesParams(mu=0.05, sigma=0.2))
HESTON = model.heston(HestonParams(kappa=1.15, theta=0.04, delta=0.2, rho=-0.4))
SMALL_GRID = Grid2D(nx=201, ny=41)


def _scenario(**changes):
    base = Scenario(t=0.0, T=0.25, x=LOG100, y=0.04, k=LOG100, nu=0.0, gamma=1.0)
    return base.evolve(**changes)


def test_convolution_without_time_is_evaluation():
    table = model.taylor_coeffs(HESTON, ExpansionPoint(LOG100, 0.04))
    value = oracle.gaussian_convolution(lambda x, y: x * y, table, 0.1, 0.1, 2.0, 3.0)
    assert value == 6.0


def test_convolution_time_order():
    table = model.taylor_coeffs(HESTON, ExpansionPoint(LOG100, 0.04))
    with pytest.raises(TimeOrderException):
        oracle.gaussian_convolution(lambda x, y: x, table, 0.2, 0.1, LOG100, 0.04)


@pytest.mark.parametrize("spec", [BLACK_SCHOLES, HESTON])
def test_convolution_keeps_asset_a_martingale(spec):
    table = model.taylor_coeffs(spec, ExpansionPoint(LOG100, 0.04))
    value = oracle.gaussian_convolution(lambda x, y: np.exp(x) + 0 * y, table, 0.0, 0.5, LOG100, 0.04, nodes=32)
    assert value == pytest.approx(100.0, rel=1e-10)


def test_convolution_second_moment():
    table = model.taylor_coeffs(HESTON, ExpansionPoint(LOG100, 0.04))
    tau = 0.3
    value = oracle.gaussian_convolution(lambda x, y: (y - 0.04) ** 2 + 0 * x, table, 0.0, tau, LOG100, 0.04, nodes=8)
    # variance 2 (1/2 beta^2)_0 tau, the drift vanishes at theta
    assert value == pytest.approx(2 * 0.0008 * tau, rel=1e-10)


def test_psi_pde_without_position():
    scenario = _scenario()
    solution = oracle.solve_psi_pde(BLACK_SCHOLES, scenario, SMALL_GRID)
    assert solution.at(scenario.x, scenario.y) == pytest.approx(-0.5 * 0.25**2 * 0.25, rel=1e-9)
    assert solution.values.shape == (41, 201)
    assert solution.steps >= SMALL_GRID.nt


def test_price_pde_matches_black_scholes():
    scenario = _scenario()
    solution = oracle.solve_price_pde(BLACK_SCHOLES, scenario, SMALL_GRID)
    expected = float(bskernel.bs_price(BsInputs(t=0.0, T=0.25, x=LOG100, k=LOG100, sigma0=0.2)))
    assert solution.at(scenario.x, scenario.y) == pytest.approx(expected, rel=1e-3)


def test_pde_domain():
    with pytest.raises(DomainException):
        oracle.solve_price_pde(HESTON, _scenario(y=-0.01), SMALL_GRID)


def test_reference_sharpe_black_scholes():
    reference = oracle.reference_sharpe(BLACK_SCHOLES, _scenario(nu=1.0), Grid2D(nx=101, ny=41))
    assert reference.sharpe == pytest.approx(0.25, abs=1e-8)
    assert reference.price > 0


def test_implied_sharpe_reference():
    scenario = _scenario()
    assert oracle.implied_sharpe_reference(-0.01, 1.0, scenario) == pytest.approx(math.sqrt(0.08))
    with pytest.raises(ValueDominanceException):
        oracle.implied_sharpe_reference(0.01, 1.0, scenario)


def test_mc_black_scholes():
    scenario = _scenario()
    result = oracle.mc_price(BLACK_SCHOLES, scenario, McConfig(paths=20_000, steps=1, seed=7))
    expected = float(bskernel.bs_price(BsInputs(t=0.0, T=0.25, x=LOG100, k=LOG100, sigma0=0.2)))
    assert result.dropped == 0
    assert result.paths == 20_000
    assert abs(result.price - expected) < 4 * result.std_error


def test_mc_does_not_depend_on_workers():
    scenario = _scenario(k=math.log(105.0))
    single = oracle.mc_price(HESTON, scenario, McConfig(paths=4_000, steps=10, chunk_size=1_000, workers=1))
    threaded = oracle.mc_price(HESTON, scenario, McConfig(paths=4_000, steps=10, chunk_size=1_000, workers=3))
    assert single.price == threaded.price
    assert single.std_error == threaded.std_error


def test_mc_seed_changes_price():
    scenario = _scenario()
    first = oracle.mc_price(HESTON, scenario, McConfig(paths=2_000, steps=10, seed=1))
    second = oracle.mc_price(HESTON, scenario, McConfig(paths=2_000, steps=10, seed=2))
    assert first.price != second.price


def test_mc_reciprocal_heston():
    spec = model.reciprocal_heston(ReciprocalHestonParams(mu=0.05, a=5.0, b=0.04, kappa=0.01, rho=0.2))
    result = oracle.mc_price(spec, _scenario(x=math.log(110.0)), McConfig(paths=2_000, steps=50))
    assert math.isfinite(result.price)
    # the call is worth at least its intrinsic value
    assert result.price > 10.0 - 4 * result.std_error


@pytest.mark.slow
def test_heston_price_oracles_agree_with_expansion():
    scenario = _scenario(T=6.0 / 52.0, nu=1.0)
    approx = implied_sharpe(scenario, HESTON)
    expansion_price = approx.price.p0 + approx.price.p1 + approx.price.p2
    mc = oracle.mc_price(HESTON, scenario, McConfig(paths=100_000, steps=100))
    pde = oracle.solve_price_pde(HESTON, scenario, Grid2D()).at(scenario.x, scenario.y)
    assert abs(mc.price - expansion_price) < 5 * mc.std_error + 0.02
    assert pde == pytest.approx(expansion_price, abs=0.05)


def test_grid_needs_enough_nodes():
    with pytest.raises(ValidationError):
        Grid2D(nx=39)
    with pytest.raises(ValidationError):
        Grid2D(ny=40)


def test_blow_up_is_reported(monkeypatch):
    assert oracle.BLOW_UP_FACTOR == 1e10
    monkeypatch.setattr(oracle, "BLOW_UP_FACTOR", 1e-6)
    with pytest.raises(OracleInstabilityException):
        oracle.solve_price_pde(BLACK_SCHOLES, _scenario(), SMALL_GRID)


def test_psi_pde_grid_refinement():
    scenario = _scenario(nu=1.0)
    # the solution does not depend on y, only the x and time steps are halved
    grids = [Grid2D(nx=41, nt=100), Grid2D(nx=81, nt=200), Grid2D(nx=161, nt=400)]
    values = [oracle.solve_psi_pde(BLACK_SCHOLES, scenario, grid).at(scenario.x, scenario.y) for grid in grids]
    coarse, fine = abs(values[0] - values[1]), abs(values[1] - values[2])
    assert fine > 0
    assert coarse / fine >= 1.7


def test_heston_psi_pde_against_expansion():
    scenario = _scenario(T=6.0 / 52.0)
    # psi does not depend on x without a position, a narrow x grid is enough
    psi = oracle.solve_psi_pde(HESTON, scenario, Grid2D(nx=41, ny=81)).at(scenario.x, scenario.y)
    reference = oracle.implied_sharpe_reference(psi, 0.0, scenario)
    assert reference == pytest.approx(math.sqrt(0.0012003), rel=1e-3)
    errors = [abs(partial - reference) for partial in implied_sharpe(scenario, HESTON).partial_sums]
    # the first order term only carries the drift of y and stays tiny at the anchor
    assert errors[2] < errors[1] and errors[2] < errors[0]
    assert errors[2] <= 0.02 * reference


def test_reciprocal_heston_price_pde_matches_mc():
    spec = model.reciprocal_heston(ReciprocalHestonParams(mu=0.05, a=5.0, b=0.04, kappa=0.01, rho=0.2))
    scenario = _scenario()
    # y drifts up towards the stationary level, the wider y range keeps it off the boundary
    pde = oracle.solve_price_pde(spec, scenario, Grid2D(nx=101, ny=81, y_padding=12.0)).at(scenario.x, scenario.y)
    mc = oracle.mc_price(spec, scenario, McConfig(paths=20_000, steps=100, seed=11))
    assert mc.dropped == 0
    assert abs(pde - mc.price) < 3 * mc.std_error
