import json
import pathlib
import sys
from unittest import mock

import pytest

from isr import cli

curdir = pathlib.Path(__file__).parent.resolve()


def _main(*argv):
    with mock.patch.object(sys, "argv", ["isr", *argv]):
        with pytest.raises(SystemExit) as e:
            cli.main()
    return e.value.code


def test_parser():
    args = cli._parser().parse_args(["run", "--json", "--out", "rows.csv", "config.yaml"])
    assert args.func == cli._run
    assert args.json
    assert args.out == pathlib.Path("rows.csv")
    assert args.config == pathlib.Path("config.yaml")
    assert args.config_mapping is None


def test_presets(tmp_path):
    out = tmp_path / "presets.txt"
    assert _main("presets", "--output", str(out)) == 0
    assert "# heston-gamma" in out.read_text()


def test_run_to_stream(tmp_path):
    out = tmp_path / "rows.csv"
    assert _main("run", "--output", str(out), str(curdir / "fixtures/config-minimal.yaml")) == 0
    assert out.read_text().startswith("axis,axis_value,")


def test_run_json_to_stream(tmp_path):
    out = tmp_path / "rows.json"
    assert _main("run", "--json", "--output", str(out), str(curdir / "fixtures/config-minimal.yaml")) == 0
    assert len(json.loads(out.read_text())["rows"]) == 1


def test_run_with_failed_points(tmp_path):
    out = tmp_path / "rows.csv"
    assert _main("run", "--out", str(out), str(curdir / "fixtures/config-bs-maturity-sweep.yaml")) == 1
    assert len(out.read_text().splitlines()) == 4


def test_compare(tmp_path):
    out = tmp_path / "report.json"
    assert _main("compare", "--output", str(out), str(curdir / "fixtures/config-bs-compare.yaml")) == 0
    assert json.loads(out.read_text())["model"] == "black_scholes"
