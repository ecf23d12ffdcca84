import logging
import pathlib
from string import Template
from typing import Optional

from ruamel.yaml import YAML

from isr import model as model_mod
from isr.configmodels import ConfigModel, Grid2D, McConfig, ModelPreset
from isr.exceptions import ParameterException
from isr.model import CoefficientMode, ModelSpec
from isr.scenario import Scenario

logger = logging.getLogger(__name__)


class Context:
    """
    Context holds the used configuration and the objects derived from it.
    A `custom` model preset needs the model passed in explicitly.
    """

    def __init__(
        self,
        conf_path: pathlib.Path,
        conf_template_mapping_path: Optional[pathlib.Path],
        model: Optional[ModelSpec] = None,
    ):
        self._conf_path = conf_path
        self._conf = None
        self._conf_template_mapping_path = conf_template_mapping_path
        self._conf_template_mapping = {}
        yaml = YAML(typ="safe")

        # read the config mapping first
        if self._conf_template_mapping_path:
            with open(self._conf_template_mapping_path, "r") as ctm:
                self._conf_template_mapping = yaml.load(ctm)
                logger.debug(f"loaded config template mapping for substitution: {self._conf_template_mapping}")

        # read the config itself
        with open(self._conf_path, "r") as f:
            template = Template(f.read())
            # substitute the values in the config with values from the config template mapping
            ft = template.substitute(**self._conf_template_mapping)
            y = yaml.load(ft)["isr"]
            self._conf = ConfigModel(**y).model_dump()
            logger.debug(f"config loaded and validated as: {self._conf}")

        # handle relative paths in config files. those are relative to the config file dirname
        out = self.conf["output"]["path"]
        if out is not None and not out.is_absolute():
            self.conf["output"]["path"] = pathlib.Path(self._conf_path).parent / out

        if model is None:
            if ModelPreset(self.conf["model"]["preset"]) == ModelPreset.CUSTOM:
                raise ParameterException("config uses the 'custom' preset but no model was given")
            model = model_mod.from_config(self.conf["model"])
        self._model = model

    @property
    def conf(self):
        return self._conf

    @property
    def conf_path(self) -> pathlib.Path:
        return pathlib.Path(self._conf_path)

    @property
    def model(self) -> ModelSpec:
        return self._model

    @property
    def coefficient_mode(self) -> CoefficientMode:
        return CoefficientMode(self.conf["model"]["coefficients"])

    @property
    def scenario(self) -> Scenario:
        """
        The base scenario. y defaults to the expansion point y_bar
        """
        s = self.conf["scenario"]
        y = s["y_bar"] if s["y"] is None else s["y"]
        return Scenario(
            t=s["t"],
            T=s["T"],
            x=s["x"],
            y=y,
            k=s["k"],
            nu=s["nu"],
            gamma=s["gamma"],
            w=s["w"],
            x_bar=s["x"] if s["x_bar"] is None else s["x_bar"],
            y_bar=s["y_bar"],
        )

    @property
    def grid(self) -> Grid2D:
        return Grid2D(**self.conf["oracles"]["grid"])

    @property
    def mc_config(self) -> McConfig:
        return McConfig(**self.conf["oracles"]["monte_carlo"])

    @property
    def output_path(self) -> Optional[pathlib.Path]:
        return self.conf["output"]["path"]
