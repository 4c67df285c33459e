"""Reference profiles shared by the benchmark runner and the training env."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .plant import DEG

# 80-second evaluation sequence: target pitch [deg] changing every 10 s
SEQUENCE_TARGETS_DEG = (0.0, 5.0, -5.0, 20.0, -20.0, 40.0, -40.0, 0.0)
SEQUENCE_DWELL = 10.0

# step-response study: hold 0 deg, then jump to one of these for 60 s
STEP_TARGETS_DEG = (5.0, 10.0, 20.0, 40.0, -5.0, -10.0, -20.0, -40.0)
STEP_PRE_HOLD = 10.0
STEP_HOLD = 60.0


@dataclass
class Scenario:
    """Piecewise-constant target profile plus plant overrides."""

    kind: str  # "step" | "sequence"
    name: str
    times: np.ndarray  # segment start times [s]
    targets_deg: np.ndarray  # target per segment [deg]
    duration: float
    plant_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.targets_deg = np.asarray(self.targets_deg, dtype=float)
        if self.times.shape != self.targets_deg.shape or self.times.size == 0:
            raise ValueError("times and targets must be equal-length, non-empty")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must start at 0 and increase")

    def target_rad(self, t: float) -> float:
        idx = int(np.searchsorted(self.times, t, side="right") - 1)
        return float(self.targets_deg[idx]) * DEG

    @classmethod
    def step(cls, target_deg: float, pre_hold: float = STEP_PRE_HOLD,
             hold: float = STEP_HOLD, **overrides) -> "Scenario":
        if pre_hold > 0.0:
            times, targets = [0.0, pre_hold], [0.0, target_deg]
        else:
            times, targets = [0.0], [target_deg]
        return cls(
            kind="step",
            name=f"step_{target_deg:+g}deg",
            times=np.array(times),
            targets_deg=np.array(targets),
            duration=pre_hold + hold,
            plant_overrides=overrides,
        )

    @classmethod
    def sequence(cls, targets_deg=SEQUENCE_TARGETS_DEG, dwell: float = SEQUENCE_DWELL,
                 **overrides) -> "Scenario":
        targets = np.asarray(targets_deg, dtype=float)
        return cls(
            kind="sequence",
            name="sequence",
            times=dwell * np.arange(targets.size),
            targets_deg=targets,
            duration=dwell * targets.size,
            plant_overrides=overrides,
        )


def standard_scenarios() -> list[Scenario]:
    """The eight reference steps plus the 80-second tracking sequence."""
    scenarios = [Scenario.step(t) for t in STEP_TARGETS_DEG]
    scenarios.append(Scenario.sequence())
    return scenarios
