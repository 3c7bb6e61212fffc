"""Flat key-value configuration with dotted section names.

Files are INI-style; ``[fcm]`` followed by ``m = 2`` yields the key ``fcm.m``.
Keys before any section header are global.  Values are parsed as Python
literals when possible and kept as strings otherwise.
"""

import ast
import configparser
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import List, Optional

from .filters import FilterConfig
from .simgen import ScenarioConfig

SEPARATION_METHODS = ("fcm", "gmm", "fm1", "fm2")
REGRESSION_METHODS = ("rf", "ols")


class ConfigError(ValueError):
    pass


def _parse_value(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


def load_config(path):
    """Read a config file into a flat ``{"section.key": value}`` dict."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing config file: {path}")
    text = path.read_text()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[__global__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            name = key if section == "__global__" else f"{section}.{key}"
            flat[name] = _parse_value(value)
    return flat


def section(flat, name):
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in flat.items() if k.startswith(prefix)}


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [v.strip() for v in str(value).split(",") if v.strip()]


@dataclass
class PipelineConfig:
    trips: List[str] = field(default_factory=list)
    seed: int = 7
    separation: List[str] = field(default_factory=lambda: ["fcm", "fm1", "fm2"])
    regression: List[str] = field(default_factory=lambda: ["rf", "ols"])
    targets: List[str] = field(default_factory=lambda: ["onboard", "boarding", "alighting"])
    gps_join_tolerance_s: float = 5.0
    salt: Optional[str] = None
    speed_cap_mps: float = 45.0
    fcm_m: float = 2.0
    fcm_max_iter: int = 300
    fcm_tol: float = 1e-6
    gmm_max_iter: int = 300
    gmm_tol: float = 1e-6
    n_tree: int = 100
    test_fraction: float = 0.3
    split_mode: str = "record"
    metrics_on: str = "raw"
    filters: FilterConfig = field(default_factory=FilterConfig)

    _KEYS = {
        "seed": "seed",
        "pipeline.trips": "trips",
        "pipeline.separation": "separation",
        "pipeline.regression": "regression",
        "pipeline.targets": "targets",
        "ingest.gps_join_tolerance_s": "gps_join_tolerance_s",
        "ingest.salt": "salt",
        "features.speed_cap_mps": "speed_cap_mps",
        "fcm.m": "fcm_m",
        "fcm.max_iter": "fcm_max_iter",
        "fcm.tol": "fcm_tol",
        "gmm.max_iter": "gmm_max_iter",
        "gmm.tol": "gmm_tol",
        "regress.n_tree": "n_tree",
        "regress.test_fraction": "test_fraction",
        "regress.split_mode": "split_mode",
        "regress.metrics_on": "metrics_on",
    }

    @classmethod
    def from_flat(cls, flat):
        kw = {}
        for key, value in flat.items():
            if key in cls._KEYS:
                kw[cls._KEYS[key]] = value
            elif key.startswith(("filters.", "simulate.")):
                continue
            else:
                raise ConfigError(f"unknown config key {key!r}")
        for name in ("trips", "separation", "regression", "targets"):
            if name in kw:
                kw[name] = _as_list(kw[name])
        filt = section(flat, "filters")
        known = {f.name for f in fields(FilterConfig)}
        bad = set(filt) - known
        if bad:
            raise ConfigError(f"unknown filter keys {sorted(bad)}")
        try:
            kw["filters"] = FilterConfig(**filt)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"filters: {exc}") from None
        return cls(**kw).validate()

    def validate(self):
        for m in self.separation:
            if m not in SEPARATION_METHODS:
                raise ConfigError(f"unknown separation method {m!r}")
        for m in self.regression:
            if m not in REGRESSION_METHODS:
                raise ConfigError(f"unknown regression method {m!r}")
        for t in self.targets:
            if t not in ("onboard", "boarding", "alighting"):
                raise ConfigError(f"unknown target {t!r}")
        if self.split_mode not in ("record", "trip"):
            raise ConfigError(f"split_mode must be 'record' or 'trip', got {self.split_mode!r}")
        if self.metrics_on not in ("raw", "rounded"):
            raise ConfigError(f"metrics_on must be 'raw' or 'rounded', got {self.metrics_on!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.fcm_m <= 1:
            raise ConfigError("fcm.m must be > 1")
        if int(self.n_tree) < 1:
            raise ConfigError("regress.n_tree must be >= 1")
        if self.gps_join_tolerance_s < 0 or self.speed_cap_mps <= 0:
            raise ConfigError("ingest tolerance must be >= 0 and speed cap > 0")
        return self

    def to_dict(self):
        d = asdict(self)
        d.pop("_KEYS", None)
        return d


def scenario_from_flat(flat, **overrides):
    d = section(flat, "simulate")
    d.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ScenarioConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
