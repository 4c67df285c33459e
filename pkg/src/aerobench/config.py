"""Run configuration: YAML with strict keys, defaults matching the study.

Angles in config files are degrees; everything becomes radians inside the
typed objects handed to the modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .mpc import MpcConfig
from .plant import DEG, PlantParams, SensorModel, plant_params_from_dict
from .ppo import PpoConfig
from .scenario import (
    SEQUENCE_DWELL,
    SEQUENCE_TARGETS_DEG,
    STEP_HOLD,
    STEP_PRE_HOLD,
    STEP_TARGETS_DEG,
    Scenario,
)


class ConfigError(ValueError):
    """Bad configuration file content."""


@dataclass
class RunConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    sensor: SensorModel = field(default_factory=SensorModel)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    lqi_q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 1.0, 100.0]))
    lqi_r: float = 0.001
    lqi_period: float = 0.002
    lqi_deriv_filter_tau: float = 0.02
    step_targets_deg: tuple = STEP_TARGETS_DEG
    step_pre_hold: float = STEP_PRE_HOLD
    step_hold: float = STEP_HOLD
    sequence_targets_deg: tuple = SEQUENCE_TARGETS_DEG
    sequence_dwell: float = SEQUENCE_DWELL
    seed: int = 0
    out_dir: str = "out"

    def scenarios(self):
        out = [Scenario.step(t, self.step_pre_hold, self.step_hold) for t in self.step_targets_deg]
        out.append(Scenario.sequence(self.sequence_targets_deg, self.sequence_dwell))
        return out

    def sequence_scenario(self):
        return Scenario.sequence(self.sequence_targets_deg, self.sequence_dwell)


def _require_mapping(node, where):
    if not isinstance(node, dict):
        raise ConfigError(f"{where}: expected a mapping")
    return node


def _take(node: dict, where: str, allowed: dict):
    """Pop known keys with type coercion; reject anything left over."""
    out = {}
    for key, conv in allowed.items():
        if key in node:
            raw = node.pop(key)
            try:
                out[key] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}.{key}: {exc}") from exc
    if node:
        raise ConfigError(f"{where}: unknown keys {sorted(node)}")
    return out


def load_config(path=None) -> RunConfig:
    """Defaults when path is None; otherwise strict YAML on top of defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    doc = _require_mapping(doc, str(path))

    if "plant" in doc:
        try:
            cfg.plant = plant_params_from_dict(_require_mapping(doc.pop("plant"), "plant"))
        except ValueError as exc:
            raise ConfigError(f"plant: {exc}") from exc
    if "sensor" in doc:
        vals = _take(_require_mapping(doc.pop("sensor"), "sensor"), "sensor",
                     {"enabled": bool, "quantization_step_deg": float})
        step = vals.get("quantization_step_deg")
        kwargs = {"enabled": vals.get("enabled", True)}
        if step is not None:
            kwargs["quantization_step"] = step * DEG
        try:
            cfg.sensor = SensorModel(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"sensor: {exc}") from exc
    if "lqi" in doc:
        vals = _take(_require_mapping(doc.pop("lqi"), "lqi"), "lqi",
                     {"q": lambda v: np.diag([float(x) for x in v]), "r": float,
                      "period": float, "deriv_filter_tau": float})
        cfg.lqi_q = vals.get("q", cfg.lqi_q)
        cfg.lqi_r = vals.get("r", cfg.lqi_r)
        cfg.lqi_period = vals.get("period", cfg.lqi_period)
        cfg.lqi_deriv_filter_tau = vals.get("deriv_filter_tau", cfg.lqi_deriv_filter_tau)
    if "mpc" in doc:
        vals = _take(_require_mapping(doc.pop("mpc"), "mpc"), "mpc",
                     {"horizon": int, "period": float,
                      "q": lambda v: np.diag([float(x) for x in v]), "r": float,
                      "observer_poles": lambda v: tuple(float(x) for x in v),
                      "qp_tol": float, "qp_max_iter": int})
        try:
            cfg.mpc = MpcConfig(
                horizon=vals.get("horizon", 60),
                ts=vals.get("period", 0.02),
                q=vals.get("q", np.diag([10.0, 1.0])),
                r=vals.get("r", 0.01),
                observer_poles=vals.get("observer_poles", (0.80, 0.85, 0.90)),
                qp_tol=vals.get("qp_tol", 1e-6),
                qp_max_iter=vals.get("qp_max_iter", 400),
            )
        except ValueError as exc:
            raise ConfigError(f"mpc: {exc}") from exc
    if "ppo" in doc:
        vals = _take(_require_mapping(doc.pop("ppo"), "ppo"), "ppo",
                     {"gamma": float, "gae_lambda": float, "clip_eps": float,
                      "lr": float, "rollout_steps": int, "minibatch": int,
                      "epochs": int, "value_coef": float, "entropy_coef": float,
                      "max_grad_norm": float, "total_steps": int, "eval_every": int,
                      "log_std_init": float, "randomize_targets": bool})
        cfg.ppo = PpoConfig(**{**PpoConfig().__dict__, **vals})
    if "scenario" in doc:
        vals = _take(_require_mapping(doc.pop("scenario"), "scenario"), "scenario",
                     {"step_targets_deg": lambda v: tuple(float(x) for x in v),
                      "step_pre_hold": float, "step_hold": float,
                      "sequence_targets_deg": lambda v: tuple(float(x) for x in v),
                      "sequence_dwell": float})
        cfg.step_targets_deg = vals.get("step_targets_deg", cfg.step_targets_deg)
        cfg.step_pre_hold = vals.get("step_pre_hold", cfg.step_pre_hold)
        cfg.step_hold = vals.get("step_hold", cfg.step_hold)
        cfg.sequence_targets_deg = vals.get("sequence_targets_deg", cfg.sequence_targets_deg)
        cfg.sequence_dwell = vals.get("sequence_dwell", cfg.sequence_dwell)
    vals = _take(doc, str(path), {"seed": int, "out_dir": str})  # rejects unknown sections
    cfg.seed = vals.get("seed", cfg.seed)
    cfg.out_dir = vals.get("out_dir", cfg.out_dir)
    return cfg
