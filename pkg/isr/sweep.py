import csv
import json
import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, TextIO, Tuple

import numpy as np

from isr import expansion, oracle, sharpe
from isr.configmodels import ModelPreset
from isr.context import Context
from isr.exceptions import IsrException, ParameterException
from isr.model import CoefficientTable, taylor_coeffs
from isr.scenario import Scenario

logger = logging.getLogger(__name__)

COLUMNS = (
    "axis",
    "axis_value",
    "nu",
    "gamma",
    "k",
    "T",
    "lambda0",
    "lambda1",
    "lambda2",
    "lambda_total",
    "p0",
    "p1",
    "p2",
    "psi0",
    "psi1",
    "psi2",
    "radicand",
    "method",
    "exp_term_source",
    "lambda_oracle",
    "pde_psi",
    "mc_price",
    "mc_se",
    "error",
)

# sweep axis -> scenario field
AXIS_FIELDS = {"gamma": "gamma", "log_strike": "k", "maturity": "T", "nu": "nu"}
# sweep axis -> figure family checked on its rows
FIGURE_FAMILIES = {"gamma": "gamma", "log_strike": "strike", "maturity": "maturity"}


@dataclass(frozen=True)
class SweepPoint:
    index: int
    axis_value: float
    changes: Dict[str, float]


@dataclass(frozen=True)
class FigureCheck:
    name: str
    passed: bool
    details: List[str] = field(default_factory=list)


class Sweep:
    """
    Evaluate the implied Sharpe ratio on every point of the configured sweep.
    Without a `sweep` section the base scenario is the only point.
    """

    def __init__(self, context: Context):
        self._ctx = context
        self._table: Optional[CoefficientTable] = None

    @property
    def conf(self) -> Dict[str, Any]:
        return self._ctx.conf

    @property
    def axis(self) -> Optional[str]:
        sweep_conf = self.conf["sweep"]
        return sweep_conf["axis"] if sweep_conf else None

    @property
    def figure_family(self) -> Optional[str]:
        return FIGURE_FAMILIES.get(self.axis) if self.axis else None

    def points(self) -> List[SweepPoint]:
        """
        The sweep points in output order: axis values outermost, then the crossing
        lists of maturities, position sizes and risk aversions
        """
        sweep_conf = self.conf["sweep"]
        if not sweep_conf:
            return [SweepPoint(index=0, axis_value=math.nan, changes={})]
        base = self._ctx.scenario
        maturities = sweep_conf["maturities"] or [base.T]
        nus = sweep_conf["nus"] or [base.nu]
        gammas = sweep_conf["gammas"] or [base.gamma]
        axis_field = AXIS_FIELDS[sweep_conf["axis"]]
        points = []
        for value in np.linspace(sweep_conf["start"], sweep_conf["stop"], sweep_conf["count"]):
            for T in maturities:
                for nu in nus:
                    for gamma in gammas:
                        changes = {"T": float(T), "nu": float(nu), "gamma": float(gamma)}
                        changes[axis_field] = float(value)
                        points.append(SweepPoint(index=len(points), axis_value=float(value), changes=changes))
        return points

    def _scenario(self, point: SweepPoint) -> Scenario:
        return self._ctx.scenario.evolve(**point.changes)

    def _get_table(self) -> CoefficientTable:
        if self._table is None:
            self._table = taylor_coeffs(self._ctx.model, self._ctx.scenario.point, self._ctx.coefficient_mode)
            logger.debug(f"coefficient table: {self._table.as_dict()}")
        return self._table

    def _approximation(self, scenario: Scenario) -> sharpe.SharpeApproximation:
        exp_conf = self.conf["expansion"]
        return sharpe.implied_sharpe(
            scenario,
            self._ctx.model,
            order=exp_conf["order"],
            method=exp_conf["method"],
            table=self._get_table(),
            quadrature_order=exp_conf["quadrature_order"],
            hermite_nodes=exp_conf["hermite_nodes"],
            exp_source=exp_conf["exp_term_source"],
        )

    def _evaluate(self, point: SweepPoint) -> Dict[str, Any]:
        base = self._ctx.scenario
        row: Dict[str, Any] = {c: None for c in COLUMNS}
        row.update(
            axis=self.axis,
            axis_value=None if math.isnan(point.axis_value) else point.axis_value,
            nu=point.changes.get("nu", base.nu),
            gamma=point.changes.get("gamma", base.gamma),
            k=point.changes.get("k", base.k),
            T=point.changes.get("T", base.T),
        )
        try:
            scenario = self._scenario(point)
            approx = self._approximation(scenario)
            row.update({key: value for key, value in approx.as_dict().items() if key in row})
            oracles = self.conf["oracles"]
            if oracles["pde"]:
                reference = oracle.reference_sharpe(self._ctx.model, scenario, self._ctx.grid)
                row["lambda_oracle"] = reference.sharpe
                row["pde_psi"] = reference.psi
            if oracles["mc"]:
                mc = oracle.mc_price(self._ctx.model, scenario, self._ctx.mc_config)
                row["mc_price"] = mc.price
                row["mc_se"] = mc.std_error
        except IsrException as e:
            logger.error(f"sweep point {point.index} ({point.changes}) failed: {e}")
            row["error"] = str(e)
        return row

    def run(self) -> List[Dict[str, Any]]:
        """
        Evaluate all sweep points. Rows keep the sweep order whatever the
        completion order of the workers is.

        :return: one row per sweep point, keyed by :data:`COLUMNS`
        :rtype: List[Dict[str, Any]]
        """
        points = self.points()
        logger.info(f"evaluating {len(points)} sweep points on {self.conf['workers']} worker(s)")
        with ThreadPoolExecutor(max_workers=self.conf["workers"]) as executor:
            rows = list(executor.map(self._evaluate, points))
        failed = sum(1 for r in rows if r["error"])
        if failed:
            logger.warning(f"{failed} of {len(rows)} sweep points failed")
        return rows

    def _appendix_report(self, table: CoefficientTable, scenario: Scenario) -> Dict[str, Dict[str, float]]:
        order = self.conf["expansion"]["quadrature_order"]
        preset = self._ctx.model.preset
        kind = "generic" if preset == ModelPreset.CUSTOM else preset
        pairs = {
            "first_order": (
                expansion.appendix_first_order(table, scenario),
                expansion.lambda_integral_quadrature(table, scenario, 1, order),
            ),
            "second_order_cross": (
                expansion.appendix_second_order_cross(table, scenario),
                expansion.cross_term_quadrature(table, scenario, order),
            ),
            "lambda2_second": (
                expansion.appendix_lambda2_second(table, scenario, kind),
                expansion.lambda_integral_quadrature(table, scenario, 2, order),
            ),
            "lambda2_printed": (
                expansion.appendix_lambda2_second(table, scenario, kind, printed=True),
                expansion.appendix_lambda2_second(table, scenario, kind),
            ),
            "dy_term": (
                expansion.appendix_dy_term(table, scenario),
                expansion.dy_term_quadrature(table, scenario, order),
            ),
        }
        exp_term = expansion.psi2_exp_term(table, scenario, order, self.conf["expansion"]["hermite_nodes"])
        pairs["exp_term"] = (exp_term.printed, exp_term.convolution)
        return {
            name: {"closed": closed, "reference": reference, "delta": abs(closed - reference)}
            for name, (closed, reference) in pairs.items()
        }

    def _oracle_report(self, scenario: Scenario, approx: sharpe.SharpeApproximation) -> Dict[str, Any]:
        oracles = self.conf["oracles"]
        report: Dict[str, Any] = {}
        if oracles["pde"]:
            reference = oracle.reference_sharpe(self._ctx.model, scenario, self._ctx.grid)
            report["lambda_oracle"] = reference.sharpe
            report["pde_psi"] = reference.psi
            report["pde_price"] = reference.price
            report["errors"] = [abs(partial - reference.sharpe) for partial in approx.partial_sums]
        if oracles["mc"]:
            mc = oracle.mc_price(self._ctx.model, scenario, self._ctx.mc_config)
            expansion_price = approx.price.total
            report["mc"] = {
                "price": mc.price,
                "std_error": mc.std_error,
                "paths": mc.paths,
                "dropped": mc.dropped,
                "expansion_price": expansion_price,
                "z_score": (expansion_price - mc.price) / mc.std_error if mc.std_error > 0 else None,
            }
        return report

    def _feller_report(self) -> Optional[Dict[str, Any]]:
        params = self.conf["model"]["reciprocal_heston"]
        if self._ctx.model.preset != ModelPreset.RECIPROCAL_HESTON or params is None:
            return None
        lhs = 2 * params["a"] * params["kappa"]
        rhs = params["b"] ** 2
        return {"two_a_kappa": lhs, "b_squared": rhs, "satisfied": lhs >= rhs}

    def _compare_point(self, point: SweepPoint) -> Dict[str, Any]:
        report: Dict[str, Any] = {"index": point.index, "changes": point.changes, "error": None}
        try:
            scenario = self._scenario(point)
            report["scenario"] = asdict(scenario)
            approx = self._approximation(scenario)
            report["lambda"] = list(approx.partial_sums)
            report["terms"] = [approx.lambda0, approx.lambda1, approx.lambda2]
            report["method"] = approx.method.value
            report["appendix"] = self._appendix_report(self._get_table(), scenario)
        except IsrException as e:
            logger.error(f"compare point {point.index} failed: {e}")
            report["error"] = str(e)
            return report
        try:
            report.update(self._oracle_report(scenario, approx))
        except IsrException as e:
            logger.error(f"oracle for point {point.index} failed: {e}")
            report["error"] = f"oracle: {e}"
        return report

    def compare(self) -> Dict[str, Any]:
        """
        Compare every closed form against its quadrature counterpart and the
        expansion against the enabled oracles

        :return: the comparison report
        :rtype: Dict[str, Any]
        """
        oracles = self.conf["oracles"]
        if not (oracles["pde"] or oracles["mc"]):
            raise ParameterException("compare needs at least one oracle enabled (oracles.pde or oracles.mc)")
        points = self.points()
        logger.info(f"comparing {len(points)} scenarios")
        with ThreadPoolExecutor(max_workers=self.conf["workers"]) as executor:
            scenarios = list(executor.map(self._compare_point, points))
        return {"model": self._ctx.model.name, "feller": self._feller_report(), "scenarios": scenarios}


def _value(row: Dict[str, Any]) -> Optional[float]:
    value = row.get("lambda_total")
    if row.get("error") or value is None or not math.isfinite(value):
        return None
    return value


def _grouped(rows: Iterable[Dict[str, Any]], keys: Tuple[str, ...]) -> Dict[Tuple, List[Dict[str, Any]]]:
    groups: Dict[Tuple, List[Dict[str, Any]]] = defaultdict(list)
    for row in rows:
        if _value(row) is not None:
            groups[tuple(row[key] for key in keys)].append(row)
    return groups


def _check_option_dominance(rows: List[Dict[str, Any]]) -> FigureCheck:
    details = []
    by_gamma = _grouped(rows, ("gamma", "k", "T"))
    gaps: Dict[Tuple, List[Tuple[float, float]]] = defaultdict(list)
    for (gamma, k, T), group in sorted(by_gamma.items()):
        without = [r for r in group if r["nu"] == 0]
        if not without:
            details.append(f"gamma={gamma}: no nu=0 row")
            continue
        base = _value(without[0])
        for r in group:
            if r["nu"] == 0:
                continue
            gap = _value(r) - base
            gaps[(r["nu"], k, T)].append((gamma, gap))
            if gap <= 0:
                details.append(f"gamma={gamma} nu={r['nu']}: {_value(r)} <= {base}")
    for (nu, k, T), series in gaps.items():
        values = [g for _, g in sorted(series)]
        if any(b < a for a, b in zip(values, values[1:])):
            details.append(f"nu={nu}: gap does not widen with gamma")
    return FigureCheck(name="option_dominance", passed=not details and bool(gaps), details=details)


def _check_near_the_money(rows: List[Dict[str, Any]], x: float) -> FigureCheck:
    details = []
    groups = _grouped(rows, ("T", "nu", "gamma"))
    for key, group in sorted(groups.items()):
        group = sorted(group, key=lambda r: r["k"])
        if len(group) < 3:
            details.append(f"{key}: fewer than three strikes")
            continue
        near = min(group, key=lambda r: abs(r["k"] - x))
        if _value(near) <= max(_value(group[0]), _value(group[-1])):
            details.append(f"T={key[0]} nu={key[1]} gamma={key[2]}: k={near['k']} does not beat the range ends")
    return FigureCheck(name="near_the_money", passed=not details and bool(groups), details=details)


def _check_maturity_monotone(rows: List[Dict[str, Any]], min_gamma: float) -> FigureCheck:
    details = []
    groups = _grouped([r for r in rows if r["gamma"] >= min_gamma], ("k", "nu", "gamma"))
    for key, group in sorted(groups.items()):
        values = [_value(r) for r in sorted(group, key=lambda r: r["T"])]
        if any(b < a for a, b in zip(values, values[1:])):
            details.append(f"k={key[0]} nu={key[1]} gamma={key[2]}: not nondecreasing in T")
    return FigureCheck(name="maturity_monotone", passed=not details and bool(groups), details=details)


def figure_checks(
    rows: List[Dict[str, Any]], family: str, x: Optional[float] = None, min_gamma: float = 0.0
) -> List[FigureCheck]:
    """
    Qualitative orderings of the figure families as pass/fail checks:

    * gamma: holding calls beats holding none, with a gap widening in gamma
    * strike: near-the-money strikes beat both ends of the strike range
    * maturity: the ratio is nondecreasing in the maturity for gamma >= min_gamma

    :param rows: sweep rows
    :type rows: List[Dict[str, Any]]
    :param family: one of gamma, strike, maturity
    :type family: str
    :param x: the log price the strike family measures moneyness against
    :type x: Optional[float]
    :param min_gamma: smallest risk aversion the maturity family checks
    :type min_gamma: float
    :return: the checks
    :rtype: List[FigureCheck]
    """
    if family == "gamma":
        return [_check_option_dominance(rows)]
    if family == "strike":
        if x is None:
            raise ParameterException("the strike family needs the log price x")
        return [_check_near_the_money(rows, x)]
    if family == "maturity":
        return [_check_maturity_monotone(rows, min_gamma)]
    raise ParameterException(f"unknown figure family '{family}'")


def write_csv(rows: List[Dict[str, Any]], stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def to_json(rows: List[Dict[str, Any]], checks: Optional[List[FigureCheck]] = None) -> str:
    data: Dict[str, Any] = {"columns": list(COLUMNS), "rows": rows}
    if checks is not None:
        data["checks"] = [asdict(c) for c in checks]
    return json.dumps(data, indent=4)
