"""Experiment specification and its YAML form.

A config file names a registered scenario and optionally overrides the sweep,
trial count, seed, estimators, variants, worker count and output directory::

    scenario: fig3
    sweep:
      variable: snr_db
      values: [10, 15, 20]
    trials: 200
    seed: 1
    estimators: [mle]
    variants: [large_gain, small_gain]
    workers: 1
    out: results/fig3

Unknown keys and bad values raise ``ConfigError`` naming the offending field.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .scenarios import (DLDD_ESTIMATORS, JLDD_ESTIMATORS, SWEEP_VARIABLES, Scenario,
                        get_scenario, scenario_names)

__all__ = ["ConfigError", "ExperimentSpec", "load_config", "spec_from_mapping", "suggest",
           "DEFAULT_TRIALS", "SEED_STRIDE"]

DEFAULT_TRIALS = 200
SEED_STRIDE = 1_000_000
_KEYS = ("scenario", "sweep", "trials", "seed", "estimators", "variants", "workers", "out", "snr_db")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def suggest(word: str, options) -> str:
    close = difflib.get_close_matches(word, list(options), n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte Carlo sweep over a registered scenario.

    Trial i at sweep point p uses seed ``base_seed + i + p * SEED_STRIDE``,
    which is collision-free for fewer than 10⁶ trials. All variants and
    estimators at the same (point, trial) share that seed, so they see the
    same noise and defect draws.
    """

    scenario: str
    sweep_variable: str
    sweep_values: tuple
    trials: int = DEFAULT_TRIALS
    base_seed: int = 0
    estimators: tuple = ()
    variants: tuple = ()
    workers: int = 1
    out_dir: str | None = None
    snr_db: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        sc = self.resolve()
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if self.trials >= SEED_STRIDE:
            raise ConfigError("trials", f"must be < {SEED_STRIDE} to keep seeds distinct")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ConfigError("sweep.variable", f"unknown variable {self.sweep_variable!r}"
                              + suggest(self.sweep_variable, SWEEP_VARIABLES))
        if (self.sweep_variable == "window_length") != sc.joint:
            raise ConfigError("sweep.variable",
                              "window_length sweeps are only valid for joint-detection scenarios")
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        if not self.sweep_values:
            raise ConfigError("sweep.values", "must not be empty")
        for v in self.sweep_values:
            self._check_value(v)
        allowed = DLDD_ESTIMATORS + (JLDD_ESTIMATORS if sc.joint else ())
        ests = tuple(self.estimators) or sc.estimators
        for e in ests:
            if e not in allowed:
                raise ConfigError("estimators", f"unknown estimator {e!r}" + suggest(e, allowed))
        object.__setattr__(self, "estimators", ests)
        names = [v.name for v in sc.variants]
        vars_ = tuple(self.variants) or tuple(names)
        for v in vars_:
            if v not in names:
                raise ConfigError("variants", f"unknown variant {v!r}" + suggest(v, names))
        object.__setattr__(self, "variants", vars_)

    def _check_value(self, v):
        name = self.sweep_variable
        if name == "power_coefficient" and not 0.0 < v < 1.0:
            raise ConfigError("sweep.values", f"power coefficient {v} outside (0, 1)")
        if name == "window_length" and not (isinstance(v, int) and 1 <= v <= 101):
            raise ConfigError("sweep.values", f"window length {v!r} must be an integer in [1, 101]")
        if name == "pilots" and not (isinstance(v, int) and v >= 1):
            raise ConfigError("sweep.values", f"pilot count {v!r} must be a positive integer")

    def resolve(self) -> Scenario:
        try:
            return get_scenario(self.scenario)
        except KeyError:
            raise ConfigError("scenario", f"unknown scenario {self.scenario!r}"
                              + suggest(self.scenario, scenario_names())) from None

    def seed(self, point: int, trial: int) -> int:
        return self.base_seed + trial + point * SEED_STRIDE

    @classmethod
    def for_scenario(cls, name: str, **overrides) -> "ExperimentSpec":
        try:
            sc = get_scenario(name)
        except KeyError:
            raise ConfigError("scenario", f"unknown scenario {name!r}"
                              + suggest(name, scenario_names())) from None
        kw = dict(sweep_variable=sc.sweep_variable, sweep_values=sc.sweep_values)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(name, **kw)


def _as_number_list(values, name):
    if not isinstance(values, (list, tuple)):
        raise ConfigError(name, "must be a list")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(name, f"non-numeric entry {v!r}")
        out.append(v)
    return tuple(out)


def spec_from_mapping(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for key in data:
        if key not in _KEYS:
            raise ConfigError(str(key), "unknown key" + suggest(str(key), _KEYS))
    if "scenario" not in data:
        raise ConfigError("scenario", "missing")
    kw = {}
    sweep = data.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise ConfigError("sweep", "must be a mapping with 'variable' and 'values'")
        for key in sweep:
            if key not in ("variable", "values"):
                raise ConfigError(f"sweep.{key}", "unknown key" + suggest(str(key), ("variable", "values")))
        if "variable" in sweep:
            kw["sweep_variable"] = str(sweep["variable"])
        if "values" in sweep:
            kw["sweep_values"] = _as_number_list(sweep["values"], "sweep.values")
    for key, target in (("trials", "trials"), ("seed", "base_seed"), ("workers", "workers")):
        if key in data:
            v = data[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(key, f"must be an integer, got {v!r}")
            kw[target] = v
    for key in ("estimators", "variants"):
        if key in data:
            v = data[key]
            if isinstance(v, str):
                v = [v]
            if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
                raise ConfigError(key, "must be a list of names")
            kw[key] = tuple(v)
    if "out" in data:
        kw["out_dir"] = str(data["out"])
    if "snr_db" in data:
        v = data["snr_db"]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("snr_db", f"must be a number, got {v!r}")
        kw["snr_db"] = float(v)
    return ExperimentSpec.for_scenario(str(data["scenario"]), **kw)


def load_config(source: str | Path) -> ExperimentSpec:
    """Spec from a YAML file, or from a bare registered scenario name."""
    text = str(source)
    if text in scenario_names():
        return ExperimentSpec.for_scenario(text)
    path = Path(source)
    if not path.exists():
        hint = suggest(text, scenario_names())
        raise ConfigError("config", f"no such file or scenario {text!r}{hint}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"{path}: invalid YAML ({exc})") from None
    return spec_from_mapping(data)
