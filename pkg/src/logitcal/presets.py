"""Named hyperparameter presets, one per sensing modality.

The built-in set lives in ``presets.ini`` next to this module. Extra
presets can come from a user INI file given with ``--config`` or the
``LOGITCAL_CONFIG`` environment variable; built-in names are read-only.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from importlib import resources
from types import MappingProxyType

from .datamodel import ScoringConfig

CONFIG_ENV = "LOGITCAL_CONFIG"
_KEYS = ("ml_lambda", "ml_bins", "map_lambda", "map_bins", "temperature")


@dataclass(frozen=True)
class Preset:
    name: str
    ml_smoothing: float
    ml_bins: int
    map_smoothing: float
    map_bins: int
    temperature: float

    def config(self, method: str, use_objectness: bool = True) -> ScoringConfig:
        """The :class:`ScoringConfig` this preset prescribes for ``method``."""
        method = method.upper()
        if method == "MAP":
            lam, bins = self.map_smoothing, self.map_bins
        else:
            lam, bins = self.ml_smoothing, self.ml_bins
        return ScoringConfig(method=method, smoothing=lam, bins=bins,
                             temperature=self.temperature, use_objectness=use_objectness)


def _parse(parser: configparser.ConfigParser, source) -> dict[str, Preset]:
    out = {}
    for name in parser.sections():
        sec = parser[name]
        missing = [k for k in _KEYS if k not in sec]
        if missing:
            raise ValueError(f"{source}: preset [{name}] lacks {', '.join(missing)}")
        out[name] = Preset(name, sec.getfloat("ml_lambda"), sec.getint("ml_bins"),
                           sec.getfloat("map_lambda"), sec.getint("map_bins"),
                           sec.getfloat("temperature"))
        for method in ("ML", "MAP"):
            out[name].config(method)  # validates ranges
    return out


def _builtin():
    parser = configparser.ConfigParser()
    parser.read_string(resources.files(__package__).joinpath("presets.ini").read_text())
    return MappingProxyType(_parse(parser, "presets.ini"))


BUILTIN_PRESETS = _builtin()


def load_presets(path=None) -> dict[str, Preset]:
    """Built-in presets plus those from ``path`` (or ``$LOGITCAL_CONFIG``)."""
    presets = dict(BUILTIN_PRESETS)
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return presets
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(f"config file {path} not found")
    for name, preset in _parse(parser, path).items():
        if name in BUILTIN_PRESETS:
            raise ValueError(f"{path}: preset {name!r} is built in and read-only")
        presets[name] = preset
    return presets


def get_preset(name: str, path=None) -> Preset:
    presets = load_presets(path)
    try:
        return presets[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(presets))}") from None
