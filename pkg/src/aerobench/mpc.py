"""Offset-free model predictive pitch controller.

The sampled beam model is augmented with an integrating output disturbance
whose estimate, produced by a Luenberger observer, shifts the steady-state
target so constant model mismatch cannot bias tracking.  The finite-horizon
problem is condensed to a box-constrained QP over the input sequence and
solved by accelerated projected gradient with warm starting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics
from .model import DiscreteModel, LinearModel, discretize


class ObserverDesignError(RuntimeError):
    """Observer pole placement failed (pair not observable)."""


class TargetError(RuntimeError):
    """Steady-state target system is singular."""


@dataclass
class MpcConfig:
    horizon: int = 60
    ts: float = 0.02
    q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 1.0]))
    r: float = 0.01
    u_min: float = -24.0
    u_max: float = 24.0
    observer_poles: tuple = (0.80, 0.85, 0.90)
    qp_tol: float = 1e-6
    qp_max_iter: int = 400

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if self.ts <= 0.0 or self.r <= 0.0:
            raise ValueError("ts and r must be positive")
        if self.u_min >= self.u_max:
            raise ValueError("empty input box")

    @property
    def preview_span(self) -> float:
        return self.horizon * self.ts


@dataclass
class AugmentedModel:
    """Sampled model extended with an integrating output disturbance.

    a_tilde = [[ad, b_dist], [0, 1]] and c_tilde = [cd, c_dist] with
    b_dist = 0 and c_dist = 1: the disturbance acts on the output only.
    """

    a_tilde: np.ndarray
    b_tilde: np.ndarray
    c_tilde: np.ndarray

    @classmethod
    def from_discrete(cls, dmodel: DiscreteModel) -> "AugmentedModel":
        n = dmodel.ad.shape[0]
        a_tilde = np.zeros((n + 1, n + 1))
        a_tilde[:n, :n] = dmodel.ad
        a_tilde[n, n] = 1.0
        b_tilde = np.concatenate([dmodel.bd, [0.0]])
        c_tilde = np.concatenate([dmodel.cd, [1.0]])
        return cls(a_tilde=a_tilde, b_tilde=b_tilde, c_tilde=c_tilde)


@dataclass
class ObserverState:
    x_hat: np.ndarray
    k_l: np.ndarray


def design_observer(aug: AugmentedModel, poles) -> np.ndarray:
    """Observer gain by Ackermann's formula on the output pair.

    Places the eigenvalues of (a_tilde - k_l c_tilde') at the requested
    discrete poles; the placement is verified to 1e-8.
    """
    a = aug.a_tilde
    c = aug.c_tilde
    n = a.shape[0]
    poles = np.asarray(poles, dtype=float)
    if poles.shape != (n,):
        raise ValueError(f"expected {n} poles")
    if np.max(np.abs(poles)) >= 1.0:
        raise ValueError("observer poles must lie strictly inside the unit circle")
    obs_rows = [c]
    for _ in range(n - 1):
        obs_rows.append(obs_rows[-1] @ a)
    obs_matrix = np.vstack(obs_rows)
    if abs(np.linalg.det(obs_matrix)) < 1e-12:
        raise ObserverDesignError("output pair is not observable")
    coeffs = np.poly(poles)  # characteristic polynomial, highest power first
    phi = np.zeros_like(a)
    for coef in coeffs:
        phi = phi @ a + coef * np.eye(n)
    selector = np.zeros(n)
    selector[-1] = 1.0
    k_l = phi @ np.linalg.solve(obs_matrix, selector)
    placed = np.sort_complex(np.linalg.eigvals(a - np.outer(k_l, c)))
    wanted = np.sort_complex(poles.astype(complex))
    if np.max(np.abs(placed - wanted)) > 1e-8:
        raise ObserverDesignError("pole placement verification failed")
    return k_l


def observer_update(obs: ObserverState, u: float, y: float, aug: AugmentedModel) -> ObserverState:
    """One prediction-form Luenberger step: correct with y, advance with u."""
    innovation = y - float(aug.c_tilde @ obs.x_hat)
    x_next = aug.a_tilde @ obs.x_hat + aug.b_tilde * u + obs.k_l * innovation
    return ObserverState(x_hat=x_next, k_l=obs.k_l)


def steady_state_target(r: float, d_hat: float, dmodel: DiscreteModel):
    """Steady state (x_ss, u_ss) holding the output at r - d_hat.

    Solves [[I - ad, -bd], [cd', 0]] [x_ss; u_ss] = [0; r - d_hat].
    """
    n = dmodel.ad.shape[0]
    coeff = np.zeros((n + 1, n + 1))
    coeff[:n, :n] = np.eye(n) - dmodel.ad
    coeff[:n, n] = -dmodel.bd
    coeff[n, :n] = dmodel.cd
    rhs = np.zeros(n + 1)
    rhs[n] = r - d_hat
    try:
        sol = np.linalg.solve(coeff, rhs)
    except np.linalg.LinAlgError as exc:
        raise TargetError("steady-state target system is singular") from exc
    if not np.all(np.isfinite(sol)):
        raise TargetError("steady-state target system is singular")
    return sol[:n], float(sol[n])


@dataclass
class PlanResult:
    u: float
    iterations: int
    converged: bool
    u_ss: float
    x_ss: np.ndarray


class MpcController:
    """Receding-horizon controller; one instance per simulation run."""

    name = "mpc"

    def __init__(self, model: LinearModel, cfg: MpcConfig | None = None,
                 log_steps: bool = False):
        self.cfg = cfg or MpcConfig()
        self.period = self.cfg.ts
        self.model = discretize(model, self.cfg.ts)
        self.aug = AugmentedModel.from_discrete(self.model)
        self.k_l = design_observer(self.aug, self.cfg.observer_poles)
        self.p_terminal, _ = numerics.solve_dare(
            self.model.ad, self.model.bd, self.cfg.q, np.array([[self.cfg.r]])
        )
        self._build_condensed()
        self.log_steps = log_steps
        self.step_log: list[tuple] = []
        self.reset()

    def _build_condensed(self):
        """State-eliminated quadratic cost over the input deviation sequence.

        Predicted deviations stack as e = g v + f_free e0; the stage weight
        applies to e_1 .. e_{N-1} and the terminal weight to e_N, so
        h = 2 (g' s g + r I) and the linear term is (w e0)' v.
        """
        n_x = self.model.ad.shape[0]
        horizon = self.cfg.horizon
        ad, bd = self.model.ad, self.model.bd
        powers = [np.eye(n_x)]
        for _ in range(horizon):
            powers.append(ad @ powers[-1])
        g = np.zeros((n_x * horizon, horizon))
        f_free = np.zeros((n_x * horizon, n_x))
        for i in range(1, horizon + 1):
            rows = slice((i - 1) * n_x, i * n_x)
            f_free[rows] = powers[i]
            for j in range(i):
                g[rows, j] = powers[i - 1 - j] @ bd
        weights = [self.cfg.q] * (horizon - 1) + [self.p_terminal]
        s_blocks = np.zeros((n_x * horizon, n_x * horizon))
        for i, w in enumerate(weights):
            s_blocks[i * n_x : (i + 1) * n_x, i * n_x : (i + 1) * n_x] = w
        self._h = 2.0 * (g.T @ s_blocks @ g + self.cfg.r * np.eye(horizon))
        self._h = 0.5 * (self._h + self._h.T)
        self._w = 2.0 * g.T @ s_blocks @ f_free
        self._lipschitz = numerics.power_iteration(self._h) * 1.01

    def reset(self):
        n_aug = self.aug.a_tilde.shape[0]
        self.observer = ObserverState(x_hat=np.zeros(n_aug), k_l=self.k_l)
        self._u_plan = np.zeros(self.cfg.horizon)
        self._last_target = (np.zeros(self.model.ad.shape[0]), 0.0)
        self.qp_failures = 0
        self.target_failures = 0
        self.step_log = []

    def describe(self) -> dict:
        """Synthesis result for the run report."""
        return {
            "horizon": self.cfg.horizon,
            "period_s": self.cfg.ts,
            "q_diag": [float(v) for v in np.diag(self.cfg.q)],
            "r": self.cfg.r,
            "terminal_cost": [[float(v) for v in row] for row in self.p_terminal],
            "observer_poles": list(self.cfg.observer_poles),
            "observer_gain": [float(v) for v in self.k_l],
        }

    def plan(self, x_hat: np.ndarray, r: float,
             u_min: float | None = None, u_max: float | None = None) -> PlanResult:
        """First input of the optimal sequence from the augmented estimate."""
        cfg = self.cfg
        u_min = cfg.u_min if u_min is None else u_min
        u_max = cfg.u_max if u_max is None else u_max
        d_hat = float(x_hat[-1])
        try:
            x_ss, u_ss = steady_state_target(r, d_hat, self.model)
            self._last_target = (x_ss, u_ss)
        except TargetError:
            self.target_failures += 1
            x_ss, u_ss = self._last_target
        e0 = x_hat[:-1] - x_ss
        qp = numerics.BoxQp(
            h=self._h,
            f=self._w @ e0,
            lower=np.full(cfg.horizon, u_min - u_ss),
            upper=np.full(cfg.horizon, u_max - u_ss),
        )
        warm = np.clip(self._u_plan - u_ss, qp.lower, qp.upper)
        result = numerics.solve_box_qp(
            qp, tol=cfg.qp_tol, max_iter=cfg.qp_max_iter, z0=warm, lipschitz=self._lipschitz
        )
        if not result.converged:
            self.qp_failures += 1
        plan_abs = result.z + u_ss
        self._u_plan = np.concatenate([plan_abs[1:], plan_abs[-1:]])
        u = float(np.clip(plan_abs[0], u_min, u_max))
        return PlanResult(
            u=u, iterations=result.iterations, converged=result.converged, u_ss=u_ss, x_ss=x_ss
        )

    def control(self, y: float, r: float, t: float) -> float:
        started = time.perf_counter()
        plan = self.plan(self.observer.x_hat, r)
        self.observer = observer_update(self.observer, plan.u, y, self.aug)
        if self.log_steps:
            self.step_log.append(
                (
                    t,
                    r,
                    y,
                    self.observer.x_hat.copy(),
                    float(self.observer.x_hat[-1]),
                    plan.u,
                    plan.iterations,
                    time.perf_counter() - started,
                )
            )
        return plan.u
