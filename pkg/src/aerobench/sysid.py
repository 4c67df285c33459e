"""Identification of the beam coefficients from voltage/pitch logs.

The test sequence steps the fan voltage through fixed amplitudes while the
protective override keeps the beam off its stops; fitting re-simulates the
nonlinear model under the recorded voltage and minimizes the summed
absolute error of both channels with Nelder-Mead restarts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .kernels import quantize_mid_tread, rollout_held_input, safety_command, simulate_recorded_input
from .plant import PlantParams, SensorModel

TEST_AMPLITUDES = (0.0, 1.5, 3.0, 4.5, 6.0, 7.5)  # volts, applied in order


@dataclass
class IdentDataset:
    """Time-aligned sequences at a fixed sample rate (radians, SI units)."""

    t: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        n = self.t.size
        if not (self.u.size == self.theta.size == self.omega.size == n) or n < 2:
            raise ValueError("columns must have equal length >= 2")
        steps = np.diff(self.t)
        if not np.allclose(steps, steps[0], rtol=0.0, atol=1e-9):
            raise ValueError("sampling must be uniform")
        for name in ("u", "theta", "omega"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass
class FitResult:
    params: PlantParams
    cost: float
    initial_cost: float
    restarts: int


def generate_test_sequence(
    params: PlantParams | None = None,
    seed: int = 0,
    segment_duration: float = 30.0,
    sample_dt: float = 0.01,
    plant_dt: float = 0.001,
    sensor: SensorModel | None = None,
    noise_std: float = 0.0,
) -> IdentDataset:
    """Simulate the step-amplitude voltage sequence and log it at sample_dt.

    The protective override is evaluated at the sample rate and the logged
    voltage is exactly the one applied, so a re-simulation under the log
    reproduces the run.  The omega channel comes from the true state; the
    theta channel is optionally quantized and/or noised.
    """
    params = params or PlantParams()
    rng = np.random.default_rng(seed)
    substeps = int(round(sample_dt / plant_dt))
    samples_per_segment = int(round(segment_duration / sample_dt))
    n = samples_per_segment * len(TEST_AMPLITUDES)
    t = sample_dt * np.arange(n)
    u_applied = np.zeros(n)
    theta_log = np.zeros(n)
    omega_log = np.zeros(n)
    theta = omega = 0.0
    for k in range(n):
        amplitude = TEST_AMPLITUDES[k // samples_per_segment]
        u = float(
            safety_command(
                theta, omega, amplitude, params.theta_limit, params.safety_band, params.safety_voltage
            )
        )
        theta_log[k] = theta
        omega_log[k] = omega
        u_applied[k] = u
        theta, omega, _ = rollout_held_input(
            theta,
            omega,
            u,
            substeps,
            plant_dt,
            params.c_theta,
            params.c_omega,
            params.c_u,
            params.u_limit,
            params.theta_limit,
            params.imbalance,
            False,  # override already folded into u
            params.safety_band,
            params.safety_voltage,
        )
    if sensor is not None and sensor.enabled:
        theta_log = quantize_mid_tread(theta_log, sensor.quantization_step)
    if noise_std > 0.0:
        theta_log = theta_log + rng.normal(0.0, noise_std, n)
        omega_log = omega_log + rng.normal(0.0, noise_std, n)
    return IdentDataset(t=t, u=u_applied, theta=theta_log, omega=omega_log)


def _fit_cost(coeffs, dataset: IdentDataset, template: PlantParams, substeps: int) -> float:
    c_theta, c_omega, c_u = coeffs
    if c_theta <= 0.0 or c_omega < 0.0 or c_u <= 0.0:
        return np.inf
    theta_sim, omega_sim = simulate_recorded_input(
        dataset.theta[0],
        dataset.omega[0],
        dataset.u,
        dataset.dt,
        substeps,
        c_theta,
        c_omega,
        c_u,
        template.u_limit,
        template.theta_limit,
        template.imbalance,
    )
    if not (np.all(np.isfinite(theta_sim)) and np.all(np.isfinite(omega_sim))):
        return np.inf
    return float(
        np.sum(np.abs(dataset.theta - theta_sim)) + np.sum(np.abs(dataset.omega - omega_sim))
    )


def fit(
    dataset: IdentDataset,
    init_guess: PlantParams,
    seed: int = 0,
    restarts: int = 5,
    plant_dt: float = 0.001,
) -> FitResult:
    """Least-absolute-error fit of (c_theta, c_omega, c_u) by Nelder-Mead.

    The nominal start is followed by ``restarts`` perturbed ones; the best
    final point wins.  Deterministic for a given (dataset, seed).
    """
    rng = np.random.default_rng(seed)
    substeps = max(1, int(round(dataset.dt / plant_dt)))
    x0 = np.array([init_guess.c_theta, init_guess.c_omega, init_guess.c_u])
    initial_cost = _fit_cost(x0, dataset, init_guess, substeps)

    def objective(x):
        return _fit_cost(x, dataset, init_guess, substeps)

    starts = [x0]
    for _ in range(restarts):
        starts.append(x0 * rng.uniform(0.7, 1.3, size=3))
    best_x, best_cost = x0, initial_cost
    for start in starts:
        result = minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000},
        )
        if result.fun < best_cost:
            best_x, best_cost = result.x, float(result.fun)
    fitted = PlantParams(
        c_theta=float(best_x[0]),
        c_omega=float(best_x[1]),
        c_u=float(best_x[2]),
        u_limit=init_guess.u_limit,
        theta_limit=init_guess.theta_limit,
        imbalance=init_guess.imbalance,
        safety_band=init_guess.safety_band,
        safety_voltage=init_guess.safety_voltage,
    )
    return FitResult(params=fitted, cost=best_cost, initial_cost=initial_cost, restarts=restarts)


def write_dataset_csv(path, dataset: IdentDataset):
    """Columns t,u,theta,omega with a header row; radians / SI units."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "u", "theta", "omega"])
        for row in zip(dataset.t, dataset.u, dataset.theta, dataset.omega):
            writer.writerow([f"{v:.10g}" for v in row])


def read_dataset_csv(path) -> IdentDataset:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "u", "theta", "omega"]:
            raise ValueError(f"{path}: expected header t,u,theta,omega")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows)
    return IdentDataset(t=data[:, 0], u=data[:, 1], theta=data[:, 2], omega=data[:, 3])
