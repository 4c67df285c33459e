"""LQR-with-integrator pitch controller.

Synthesis augments the linear beam model with an error integrator and
solves the continuous Riccati equation; the online law runs every 2 ms on
the measured pitch alone, differentiating it numerically for the velocity
term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .model import LinearModel


@dataclass
class LqiConfig:
    q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 1.0, 100.0]))
    r: float = 0.001
    ts: float = 0.002
    deriv_filter_tau: float = 0.02  # raw 2 ms differences of a quantized pitch are unusable
    u_limit: float = 24.0


@dataclass
class LqiGain:
    """Feedback gain over (pitch, pitch rate, error integral)."""

    k: np.ndarray
    ts: float


@dataclass
class LqiState:
    x_i: float = 0.0
    prev_theta: float = 0.0
    prev_deriv: float = 0.0


def synthesize(model: LinearModel, q: np.ndarray | None = None, r: float | None = None,
               ts: float = 0.002) -> LqiGain:
    """LQ gain for the beam model augmented with the error integrator.

    The augmented state is z = (theta, omega, x_i) with dx_i/dt = r - y;
    the target enters only through the integrator at run time, so the
    synthesis model carries dx_i/dt = -y.
    """
    cfg = LqiConfig()
    q = cfg.q if q is None else np.asarray(q, dtype=float)
    r = cfg.r if r is None else float(r)
    n = model.a.shape[0]
    a_bar = np.zeros((n + 1, n + 1))
    a_bar[:n, :n] = model.a
    a_bar[n, :n] = -model.c
    b_bar = np.concatenate([model.b, [0.0]])
    p = numerics.solve_care(a_bar, b_bar, q, np.array([[r]]))
    k = (b_bar @ p) / r
    if numerics.max_real_eig(a_bar - np.outer(b_bar, k)) >= 0.0:
        raise numerics.SynthesisError("augmented closed loop is not Hurwitz")
    return LqiGain(k=k, ts=ts)


class LqiController:
    """Stateful 2 ms control law; one instance per simulation run."""

    name = "lqi"

    def __init__(self, model: LinearModel, cfg: LqiConfig | None = None):
        self.cfg = cfg or LqiConfig()
        self.gain = synthesize(model, self.cfg.q, self.cfg.r, self.cfg.ts)
        self.period = self.cfg.ts
        self.state = LqiState()

    def reset(self):
        self.state = LqiState()

    def describe(self) -> dict:
        """Synthesis result for the run report."""
        return {
            "gain": [float(v) for v in self.gain.k],
            "period_s": self.period,
            "q_diag": [float(v) for v in np.diag(self.cfg.q)],
            "r": self.cfg.r,
            "deriv_filter_tau_s": self.cfg.deriv_filter_tau,
        }

    def control(self, y: float, r: float, t: float) -> float:
        """Voltage for the current measurement y [rad] and target r [rad]."""
        st = self.state
        cfg = self.cfg
        raw_deriv = (y - st.prev_theta) / cfg.ts
        alpha = cfg.deriv_filter_tau / (cfg.deriv_filter_tau + cfg.ts)
        omega_hat = alpha * st.prev_deriv + (1.0 - alpha) * raw_deriv
        x_i_cand = st.x_i + (r - y) * cfg.ts
        k = self.gain.k
        u = -(k[0] * y + k[1] * omega_hat + k[2] * x_i_cand)
        if abs(u) <= cfg.u_limit:
            st.x_i = x_i_cand  # integrator holds while the output saturates
        else:
            u = cfg.u_limit if u > 0.0 else -cfg.u_limit
        st.prev_theta = y
        st.prev_deriv = omega_hat
        return u
