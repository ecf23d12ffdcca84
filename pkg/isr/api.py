import logging
import pathlib
from importlib import resources
from typing import Any, Dict, List, Optional, Tuple

from isr.context import Context
from isr.model import ModelSpec
from isr.sweep import FigureCheck, Sweep, figure_checks, to_json, write_csv

logger = logging.getLogger(__name__)

PRESET_PACKAGE = "isr.presets"

# lowest risk aversion the maturity family is checked for
MATURITY_CHECK_MIN_GAMMA = 0.5


def _checks(ctx: Context, sweep: Sweep, rows: List[Dict[str, Any]]) -> Optional[List[FigureCheck]]:
    family = sweep.figure_family
    if family is None:
        return None
    checks = figure_checks(rows, family, x=ctx.scenario.x, min_gamma=MATURITY_CHECK_MIN_GAMMA)
    for check in checks:
        logger.info(f"figure check {check.name}: {'pass' if check.passed else 'fail'}")
        for detail in check.details:
            logger.info(f"  {detail}")
    return checks


def run_sweep(
    config: pathlib.Path,
    config_mapping: Optional[pathlib.Path],
    model: Optional[ModelSpec] = None,
    out: Optional[pathlib.Path] = None,
    json_mirror: bool = False,
) -> Tuple[List[Dict[str, Any]], Optional[List[FigureCheck]], Optional[pathlib.Path]]:
    """
    Run the sweep of the given configuration and write the rows as CSV (and the
    JSON mirror) when an output path is configured or given

    :param config: the configuration file path
    :type config: pathlib.Path
    :param config_mapping: the config template mapping file path
    :type config_mapping: Optional[pathlib.Path]
    :param model: the model for configurations with the 'custom' preset
    :type model: Optional[ModelSpec]
    :param out: CSV output path, overriding the configured one
    :type out: Optional[pathlib.Path]
    :param json_mirror: also write a JSON file next to the CSV
    :type json_mirror: bool
    :return: the rows, the figure checks of the sweep axis (if any) and the CSV path written (if any)
    :rtype: Tuple[List[Dict[str, Any]], Optional[List[FigureCheck]], Optional[pathlib.Path]]
    """
    ctx = Context(config, config_mapping, model)
    sweep = Sweep(ctx)
    rows = sweep.run()
    checks = _checks(ctx, sweep, rows)
    path = out or ctx.output_path
    if path:
        with open(path, "w", newline="") as f:
            write_csv(rows, f)
        logger.info(f"wrote {len(rows)} rows to {path}")
        if json_mirror:
            json_path = pathlib.Path(path).with_suffix(".json")
            json_path.write_text(to_json(rows, checks))
            logger.info(f"wrote JSON mirror to {json_path}")
    return rows, checks, path


def run_compare(
    config: pathlib.Path, config_mapping: Optional[pathlib.Path], model: Optional[ModelSpec] = None
) -> Dict[str, Any]:
    """
    Compare the expansion against its quadrature counterparts and the enabled oracles

    :param config: the configuration file path
    :type config: pathlib.Path
    :param config_mapping: the config template mapping file path
    :type config_mapping: Optional[pathlib.Path]
    :param model: the model for configurations with the 'custom' preset
    :type model: Optional[ModelSpec]
    :return: the comparison report
    :rtype: Dict[str, Any]
    """
    ctx = Context(config, config_mapping, model)
    return Sweep(ctx).compare()


def presets() -> Dict[str, str]:
    """
    The shipped figure configurations by name
    """
    files = sorted(
        (entry for entry in resources.files(PRESET_PACKAGE).iterdir() if entry.name.endswith(".yaml")),
        key=lambda entry: entry.name,
    )
    return {entry.name[: -len(".yaml")]: entry.read_text() for entry in files}
