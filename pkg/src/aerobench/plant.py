"""Nonlinear 1-DOF beam pitch dynamics: fan-driven beam on a pivot.

State is (pitch angle theta [rad], angular velocity omega [rad/s]); the
single input is the differential fan voltage u [V].  Dynamics:

    dtheta/dt = omega
    domega/dt = -c_omega*omega - c_theta*sin(theta) + c_u*u + imbalance

All angles are radians internally; degrees appear only at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import quantize_mid_tread, rk4_step, safety_command

DEG = math.pi / 180.0


class SimulationFault(RuntimeError):
    """The integrator produced a non-finite state."""


@dataclass
class PlantParams:
    """Composite coefficients of the beam's equations of motion.

    c_theta: gravity-restoring coefficient [1/s^2]
    c_omega: viscous damping coefficient [1/s]
    c_u: voltage-to-angular-acceleration gain [rad/(s^2 V)]
    u_limit: actuator saturation [V]
    theta_limit: mechanical pitch stop [rad]
    imbalance: constant angular-acceleration offset from shifted masses [rad/s^2]
    safety_band: distance from a stop at which the protective voltage fires [rad]
    safety_voltage: magnitude of the protective counter-voltage [V]
    """

    c_theta: float = 0.8185
    c_omega: float = 0.0503
    c_u: float = 0.0682
    u_limit: float = 24.0
    theta_limit: float = 50.0 * DEG
    imbalance: float = 0.0
    safety_band: float = 5.0 * DEG
    safety_voltage: float = 5.0

    def __post_init__(self):
        if not (self.c_theta > 0.0 and self.c_u > 0.0 and self.u_limit > 0.0):
            raise ValueError("c_theta, c_u and u_limit must be positive")
        if self.c_omega < 0.0:
            raise ValueError("c_omega must be non-negative")
        if self.theta_limit <= 40.0 * DEG:
            raise ValueError("theta_limit must exceed 40 deg so scenario targets are reachable")
        if not (0.0 < self.safety_band < self.theta_limit):
            raise ValueError("safety_band must lie strictly between 0 and theta_limit")


@dataclass
class SensorModel:
    """Pitch sensor with optional mid-tread quantization."""

    quantization_step: float = 0.18 * DEG
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and self.quantization_step <= 0.0:
            raise ValueError("quantization_step must be positive when the sensor model is enabled")

    def measure(self, theta: float) -> float:
        if not self.enabled:
            return theta
        return float(quantize_mid_tread(theta, self.quantization_step))


@dataclass
class PlantState:
    theta: float = 0.0
    omega: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.omega])


def derivative(state: PlantState, u: float, params: PlantParams):
    """Time derivative (dtheta, domega) of the beam at the given input."""
    dtheta = state.omega
    domega = (
        -params.c_omega * state.omega
        - params.c_theta * math.sin(state.theta)
        + params.c_u * u
        + params.imbalance
    )
    return dtheta, domega


def safety_override(state: PlantState, u_requested: float, params: PlantParams) -> float:
    """Apply the protective counter-voltage near the mechanical stops."""
    return float(
        safety_command(
            state.theta,
            state.omega,
            u_requested,
            params.theta_limit,
            params.safety_band,
            params.safety_voltage,
        )
    )


def step(
    state: PlantState,
    u: float,
    dt: float,
    params: PlantParams,
    sensor: SensorModel | None = None,
):
    """One RK4 step of size ``dt``; returns (next state, measured pitch).

    The input is saturated before integration and the beam is clamped at
    the stops with omega zeroed on contact.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = min(max(u, -params.u_limit), params.u_limit)
    theta, omega = rk4_step(
        state.theta,
        state.omega,
        u,
        dt,
        params.c_theta,
        params.c_omega,
        params.c_u,
        params.imbalance,
    )
    if not (math.isfinite(theta) and math.isfinite(omega)):
        raise SimulationFault(f"non-finite state after step: theta={theta}, omega={omega}")
    if theta > params.theta_limit:
        theta, omega = params.theta_limit, 0.0
    elif theta < -params.theta_limit:
        theta, omega = -params.theta_limit, 0.0
    measured = sensor.measure(theta) if sensor is not None else theta
    return PlantState(theta, omega), measured


def load_plant_config(path) -> PlantParams:
    """Read plant parameters from a key=value text file (degrees for angles).

    Unknown keys are rejected; missing keys keep their defaults.
    """
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            values[key.strip()] = float(raw.strip())
    return plant_params_from_dict(values)


def plant_params_from_dict(values: dict) -> PlantParams:
    """Build PlantParams from a flat mapping with degree-valued angle keys."""
    kwargs = {}
    for key, value in values.items():
        if key in ("theta_limit_deg", "safety_band_deg"):
            kwargs[key[: -len("_deg")]] = float(value) * DEG
        elif key in ("c_theta", "c_omega", "c_u", "u_limit", "imbalance", "safety_voltage"):
            kwargs[key] = float(value)
        else:
            raise ValueError(f"unknown plant parameter {key!r}")
    return PlantParams(**kwargs)
