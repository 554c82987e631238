"""Scenario configuration: a flat YAML tree with fail-closed validation.

Every section has a fixed key set; unknown keys are rejected so that typos
cannot silently fall back to defaults.  A scenario fully determines a
simulation (plant, reference, shaping, controller, estimator, disturbance,
integrator, horizon, initial state, seed), and identical scenarios produce
bit-identical logs.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario",
           "sea_paper_scenario"]


class ScenarioError(ValueError):
    """Malformed scenario configuration."""


_DEFAULTS: dict[str, dict[str, Any]] = {
    "plant": {"type": "sea", "Q0_l": 0.5, "Q0_u": 2.0, "p_lo": 0.5,
              "p_hi": 1.5, "m": 1.0, "mu_v": 1.0, "c_f": 1.0, "c_b": 0.1,
              "L": 0.1, "R": 1.0, "theta": [0.2, 0.4], "l_theta": None,
              "control_gain": 2.0},
    "sat": {"l_s": 0.76, "eps_s": 0.4},
    "gamma_s": {"margin": 0.1},
    "estimator": {"variant": "pde-beta", "k_dz": 5.0, "k_eps": 5.0,
                  "K1": [0.0, 1.0], "K2": [0.0, 1.0]},
    "controller": {"variant": "sea", "k1": 2.0, "k21": 5.0, "k22": 10.0,
                   "k31": 50.0, "k32": 100.0, "k33": 100.0, "k_d": 0.0,
                   "tau3_exponent": "eq63"},
    "disturbance": {"type": "zero", "amp": 0.0, "freq": 1.0, "t_on": 0.0},
    "integrator": {"method": "rk4", "step": 1e-4, "rtol": 1e-8,
                   "atol": 1e-10},
    "initial": {"e0": [0.2, 0.0, 0.0], "x0": None,
                "theta_hat0": [0.0, 0.35], "e_hat0": 0.0},
    "lyapunov": {"log_vest": False, "log_vcl": False},
}

_SCALARS = {"name": str, "horizon": float, "log_every": int, "seed": int}

_PLANT_TYPES = ("sea", "trig")
_EST_VARIANTS = ("pde-beta", "filtered")
_CTRL_VARIANTS = ("sea", "nominal", "robust")
_DIST_TYPES = ("zero", "sine", "step")
_INT_METHODS = ("rk4", "rk45")


@dataclass(frozen=True)
class Scenario:
    name: str
    plant: dict
    sat: dict
    gamma_s: dict
    estimator: dict
    controller: dict
    disturbance: dict
    integrator: dict
    initial: dict
    lyapunov: dict
    horizon: float = 60.0
    log_every: int = 100
    seed: int = 0

    def override(self, dotted: str, value: Any) -> "Scenario":
        """Functional update via a dotted key such as ``controller.k_d``."""
        parts = dotted.split(".")
        data = self.to_dict()
        node = data
        for p in parts[:-1]:
            if p not in node:
                raise ScenarioError(f"unknown scenario key {dotted!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ScenarioError(f"unknown scenario key {dotted!r}")
        node[parts[-1]] = value
        return parse_scenario(data)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "plant": copy.deepcopy(self.plant),
            "sat": copy.deepcopy(self.sat),
            "gamma_s": copy.deepcopy(self.gamma_s),
            "estimator": copy.deepcopy(self.estimator),
            "controller": copy.deepcopy(self.controller),
            "disturbance": copy.deepcopy(self.disturbance),
            "integrator": copy.deepcopy(self.integrator),
            "initial": copy.deepcopy(self.initial),
            "lyapunov": copy.deepcopy(self.lyapunov),
            "horizon": self.horizon,
            "log_every": self.log_every,
            "seed": self.seed,
        }


def _merge_section(name: str, given: dict | None) -> dict:
    base = copy.deepcopy(_DEFAULTS[name])
    if given is None:
        return base
    if not isinstance(given, dict):
        raise ScenarioError(f"section {name!r} must be a mapping")
    unknown = set(given) - set(base)
    if unknown:
        raise ScenarioError(f"unknown keys in {name!r}: {sorted(unknown)}")
    base.update(given)
    return base


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario root must be a mapping")
    unknown = set(data) - (set(_DEFAULTS) | set(_SCALARS))
    if unknown:
        raise ScenarioError(f"unknown top-level keys: {sorted(unknown)}")

    sections = {name: _merge_section(name, data.get(name))
                for name in _DEFAULTS}
    name = str(data.get("name", "scenario"))
    horizon = float(data.get("horizon", 60.0))
    log_every = int(data.get("log_every", 100))
    seed = int(data.get("seed", 0))

    if horizon <= 0:
        raise ScenarioError("horizon must be positive")
    if log_every < 1:
        raise ScenarioError("log_every must be >= 1")
    p = sections["plant"]
    if p["type"] not in _PLANT_TYPES:
        raise ScenarioError(f"plant.type must be one of {_PLANT_TYPES}")
    est = sections["estimator"]
    if est["variant"] not in _EST_VARIANTS:
        raise ScenarioError(f"estimator.variant must be one of {_EST_VARIANTS}")
    if est["k_dz"] <= 0:
        raise ScenarioError("estimator.k_dz must be positive")
    ctl = sections["controller"]
    if ctl["variant"] not in _CTRL_VARIANTS:
        raise ScenarioError(f"controller.variant must be one of {_CTRL_VARIANTS}")
    dist = sections["disturbance"]
    if dist["type"] not in _DIST_TYPES:
        raise ScenarioError(f"disturbance.type must be one of {_DIST_TYPES}")
    integ = sections["integrator"]
    if integ["method"] not in _INT_METHODS:
        raise ScenarioError(f"integrator.method must be one of {_INT_METHODS}")
    if integ["method"] == "rk4" and not integ["step"] > 0:
        raise ScenarioError("integrator.step must be positive for rk4")
    if integ["method"] == "rk45" and not (integ["rtol"] > 0 and integ["atol"] > 0):
        raise ScenarioError("integrator.rtol/atol must be positive for rk45")

    return Scenario(name=name, horizon=horizon, log_every=log_every,
                    seed=seed, **sections)


def load_scenario(path: str | Path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    return parse_scenario(data)


def sea_paper_scenario() -> Scenario:
    """Default configuration of the actuator convergence experiment."""
    return parse_scenario({"name": "sea_paper", "horizon": 60.0,
                           "log_every": 100, "seed": 0})
