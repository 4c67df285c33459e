"""Proximal policy optimization trained directly on the simulated beam.

Actor and critic are 2x64 tanh networks (numpy, hand-written backprop); the
agent acts every 0.1 s, observes (distance to target, pitch change, pitch)
and is rewarded the negative absolute distance to the target, in radians.
Training runs on the fixed 80-second target sequence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import rollout_held_input
from .nets import Adam, Mlp, clip_grad_norm
from .plant import DEG, PlantParams, SensorModel
from .scenario import SEQUENCE_DWELL, SEQUENCE_TARGETS_DEG

CHECKPOINT_FORMAT = "aerobench-policy"
CHECKPOINT_VERSION = 1

LOG_2PI = math.log(2.0 * math.pi)


class CheckpointError(ValueError):
    """Checkpoint file is missing, malformed, or has the wrong version."""


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    rollout_steps: int = 2048
    minibatch: int = 64
    epochs: int = 10
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    total_steps: int = 1_000_000
    eval_every: int = 20_480
    hidden: tuple = (64, 64)
    # initial exploration std of 3 V; the +-24 V action range makes the
    # usual unit-std start far too timid to find the tracking signal
    log_std_init: float = math.log(3.0)
    control_period: float = 0.1
    randomize_targets: bool = False


class TrackingEnv:
    """Beam tracking episode: 800 control steps of 0.1 s on the target sequence.

    Observations and rewards use the measured (possibly quantized) pitch;
    the pitch change of the first step of an episode is zero.
    """

    def __init__(
        self,
        params: PlantParams | None = None,
        sensor: SensorModel | None = None,
        control_period: float = 0.1,
        plant_dt: float = 0.001,
        targets_deg=SEQUENCE_TARGETS_DEG,
        dwell: float = SEQUENCE_DWELL,
        randomize_targets: bool = False,
    ):
        self.params = params or PlantParams()
        self.sensor = sensor or SensorModel()
        self.control_period = control_period
        self.plant_dt = plant_dt
        self.substeps = int(round(control_period / plant_dt))
        self.base_targets = np.asarray(targets_deg, dtype=float) * DEG
        self.steps_per_dwell = int(round(dwell / control_period))
        self.episode_steps = self.steps_per_dwell * self.base_targets.size
        self.randomize_targets = randomize_targets
        self._targets = self.base_targets.copy()
        self.reset()

    def _target(self, step_index: int) -> float:
        idx = min(step_index // self.steps_per_dwell, self._targets.size - 1)
        return float(self._targets[idx])

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        if self.randomize_targets and rng is not None:
            self._targets = self.base_targets.copy()
            self._targets[1:] = rng.uniform(-40.0 * DEG, 40.0 * DEG, self._targets.size - 1)
        self.theta = 0.0
        self.omega = 0.0
        self.k = 0
        meas = self.sensor.measure(self.theta)
        self._prev_meas = meas
        return np.array([meas - self._target(0), 0.0, meas])

    def step(self, u: float):
        p = self.params
        u = min(max(u, -p.u_limit), p.u_limit)
        self.theta, self.omega, _ = rollout_held_input(
            self.theta,
            self.omega,
            u,
            self.substeps,
            self.plant_dt,
            p.c_theta,
            p.c_omega,
            p.c_u,
            p.u_limit,
            p.theta_limit,
            p.imbalance,
            True,
            p.safety_band,
            p.safety_voltage,
        )
        self.k += 1
        meas = self.sensor.measure(self.theta)
        r_now = self._target(self.k)
        delta = meas - r_now
        obs = np.array([delta, meas - self._prev_meas, meas])
        self._prev_meas = meas
        reward = -abs(delta)
        done = self.k >= self.episode_steps
        return obs, reward, done


class GaussianPolicy:
    """Diagonal Gaussian over the fan voltage with a state-independent std."""

    def __init__(self, rng, hidden=(64, 64), log_std_init=0.0, obs_dim=3):
        self.net = Mlp((obs_dim, *hidden, 1), rng, out_gain=0.01)
        self.log_std = np.array([log_std_init])

    @property
    def params(self):
        return self.net.params + [self.log_std]

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self.net.forward(obs)[:, 0]

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Unclipped action sample and its log density."""
        mu = float(self.mean(obs[None])[0])
        sigma = float(np.exp(self.log_std[0]))
        action = mu + sigma * rng.standard_normal()
        return action, gaussian_log_prob(action, mu, sigma)


def gaussian_log_prob(action, mean, sigma):
    z = (action - mean) / sigma
    return -0.5 * z * z - np.log(sigma) - 0.5 * LOG_2PI


def make_value_net(rng, hidden=(64, 64), obs_dim=3) -> Mlp:
    return Mlp((obs_dim, *hidden, 1), rng, out_gain=1.0)


def gae_advantages(rewards, values, dones, gamma, lam) -> np.ndarray:
    """Raw generalized-advantage recursion.

    values has one trailing bootstrap entry for the state after the last
    step; episode ends (dones) cut both the bootstrap and the recursion.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = rewards.size
    if values.size != n + 1:
        raise ValueError("values must include the bootstrap entry")
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        acc = delta + gamma * lam * nonterminal * acc
        adv[t] = acc
    return adv


def compute_gae(rewards, values, dones, gamma, lam):
    """(normalized advantages, returns); returns use the raw advantages."""
    adv = gae_advantages(rewards, values, dones, gamma, lam)
    returns = adv + np.asarray(values, dtype=float)[:-1]
    normalized = (adv - adv.mean()) / (adv.std() + 1e-8)
    return normalized, returns


def ppo_update(policy, value_net, optimizer, batch, cfg, rng):
    """One set of clipped-surrogate epochs over a rollout batch.

    A non-finite loss aborts the whole update: parameters and optimizer
    state roll back to their values at entry and the stats flag it.
    """
    obs = batch["obs"]
    actions = batch["actions"]
    logp_old = batch["log_probs"]
    advantages = batch["advantages"]
    returns = batch["returns"]
    n = obs.shape[0]
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "approx_kl": 0.0,
             "clip_fraction": 0.0, "aborted": False}
    snapshot = (
        [p.copy() for p in optimizer.params],
        [m.copy() for m in optimizer.m],
        [v.copy() for v in optimizer.v],
        optimizer.t,
    )

    def rollback():
        params0, m0, v0, t0 = snapshot
        for dst, src in zip(optimizer.params, params0):
            dst[...] = src
        for dst, src in zip(optimizer.m, m0):
            dst[...] = src
        for dst, src in zip(optimizer.v, v0):
            dst[...] = src
        optimizer.t = t0

    batches = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start : start + cfg.minibatch]
            m = idx.size
            mu = policy.net.forward(obs[idx])[:, 0]
            sigma = float(np.exp(policy.log_std[0]))
            z = (actions[idx] - mu) / sigma
            logp = -0.5 * z * z - policy.log_std[0] - 0.5 * LOG_2PI
            ratio = np.exp(logp - logp_old[idx])
            adv = advantages[idx]
            surr1 = ratio * adv
            surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv
            policy_loss = -np.minimum(surr1, surr2).mean()
            vpred = value_net.forward(obs[idx])[:, 0]
            value_loss = np.mean((vpred - returns[idx]) ** 2)
            if not (np.isfinite(policy_loss) and np.isfinite(value_loss)):
                rollback()
                stats["aborted"] = True
                return stats
            # d(-min)/dlogp: the clipped branch has zero gradient wherever
            # it is strictly smaller, ties flow through the unclipped one
            active = surr1 <= surr2
            dlogp = np.where(active, -ratio * adv / m, 0.0)
            dmu = dlogp * (actions[idx] - mu) / sigma**2
            policy_grads = policy.net.backward(dmu[:, None])
            dlog_std = float(np.sum(dlogp * (z * z - 1.0)))
            if cfg.entropy_coef != 0.0:
                dlog_std -= cfg.entropy_coef  # d(entropy)/dlog_std = 1 per sample, meaned
            value_grads = value_net.backward(cfg.value_coef * 2.0 * (vpred - returns[idx])[:, None] / m)
            grads = policy_grads + [np.array([dlog_std])] + value_grads
            clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(grads)
            with np.errstate(divide="ignore", invalid="ignore"):
                stats["approx_kl"] += float(np.mean((ratio - 1.0) - np.log(ratio)))
            stats["clip_fraction"] += float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps))
            stats["policy_loss"] += float(policy_loss)
            stats["value_loss"] += float(value_loss)
            batches += 1
    for key in ("policy_loss", "value_loss", "approx_kl", "clip_fraction"):
        stats[key] /= max(batches, 1)
    return stats


def evaluate_policy(env: TrackingEnv, policy: GaussianPolicy) -> float:
    """Cumulative reward of one deterministic (mean-action) episode."""
    obs = env.reset()
    total = 0.0
    done = False
    while not done:
        u = float(np.clip(policy.mean(obs[None])[0], -env.params.u_limit, env.params.u_limit))
        obs, reward, done = env.step(u)
        total += reward
    return total


def reward_to_mean_deviation_deg(cumulative_reward: float, steps: int) -> float:
    """Cumulative radians-based reward expressed as mean |error| in degrees."""
    return abs(cumulative_reward) / steps * 180.0 / math.pi


@dataclass
class TrainResult:
    policy: GaussianPolicy
    value_net: Mlp
    curve: list  # (env_steps, eval_reward, mean_deviation_deg)
    best_reward: float
    best_step: int
    env_steps: int
    update_stats: list = field(default_factory=list)


def train(env: TrackingEnv, cfg: PpoConfig | None = None, seed: int = 0,
          progress=None) -> TrainResult:
    """Rollout/update loop to cfg.total_steps environment steps.

    The deterministic evaluation episode runs every cfg.eval_every steps;
    the best-scoring parameters are restored into the returned policy.
    """
    cfg = cfg or PpoConfig()
    rng = np.random.default_rng(seed)
    policy = GaussianPolicy(rng, hidden=cfg.hidden, log_std_init=cfg.log_std_init)
    value_net = make_value_net(rng, hidden=cfg.hidden)
    optimizer = Adam(policy.params + value_net.params, lr=cfg.lr)

    n_steps = cfg.rollout_steps
    obs_buf = np.zeros((n_steps, 3))
    act_buf = np.zeros(n_steps)
    logp_buf = np.zeros(n_steps)
    rew_buf = np.zeros(n_steps)
    done_buf = np.zeros(n_steps)

    curve = []
    update_stats = []
    best_reward = -np.inf
    best_step = 0
    best_params = [p.copy() for p in policy.params]
    steps_done = 0
    since_eval = cfg.eval_every  # evaluate after the first rollout too

    obs = env.reset(rng)
    while steps_done < cfg.total_steps:
        for t in range(n_steps):
            obs_buf[t] = obs
            action, logp = policy.sample(obs, rng)
            u = float(np.clip(action, -env.params.u_limit, env.params.u_limit))
            next_obs, reward, done = env.step(u)
            act_buf[t] = action
            logp_buf[t] = logp
            rew_buf[t] = reward
            done_buf[t] = 1.0 if done else 0.0
            obs = env.reset(rng) if done else next_obs
        steps_done += n_steps
        since_eval += n_steps

        values = value_net.forward(obs_buf)[:, 0]
        bootstrap = float(value_net.forward(obs[None])[0, 0])
        values_ext = np.append(values, bootstrap)
        advantages, returns = compute_gae(
            rew_buf, values_ext, done_buf, cfg.gamma, cfg.gae_lambda
        )
        batch = {
            "obs": obs_buf,
            "actions": act_buf,
            "log_probs": logp_buf,
            "advantages": advantages,
            "returns": returns,
        }
        stats = ppo_update(policy, value_net, optimizer, batch, cfg, rng)
        stats["env_steps"] = steps_done
        update_stats.append(stats)

        if since_eval >= cfg.eval_every or steps_done >= cfg.total_steps:
            since_eval = 0
            eval_reward = evaluate_policy(env, policy)
            curve.append(
                (steps_done, eval_reward,
                 reward_to_mean_deviation_deg(eval_reward, env.episode_steps))
            )
            if eval_reward > best_reward:
                best_reward = eval_reward
                best_step = steps_done
                best_params = [p.copy() for p in policy.params]
            if progress is not None:
                progress(steps_done, eval_reward)
            obs = env.reset(rng)  # evaluation consumed the env state

    for current, best in zip(policy.params, best_params):
        current[...] = best
    return TrainResult(
        policy=policy,
        value_net=value_net,
        curve=curve,
        best_reward=best_reward,
        best_step=best_step,
        env_steps=steps_done,
    )


def save_checkpoint(path, policy: GaussianPolicy, value_net: Mlp | None = None,
                    meta: dict | None = None):
    """Versioned JSON layout: layer sizes, row-major weights, log_std."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "observation": ["delta", "pitch_diff", "theta"],
        "log_std": policy.log_std.tolist(),
        "policy": {
            "sizes": list(policy.net.sizes),
            "weights": [w.tolist() for w in policy.net.weights],
            "biases": [b.tolist() for b in policy.net.biases],
        },
        "meta": meta or {},
    }
    if value_net is not None:
        payload["value"] = {
            "sizes": list(value_net.sizes),
            "weights": [w.tolist() for w in value_net.weights],
            "biases": [b.tolist() for b in value_net.biases],
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def _load_mlp(block: dict) -> Mlp:
    net = Mlp(block["sizes"], np.random.default_rng(0))
    weights = [np.asarray(w, dtype=float) for w in block["weights"]]
    biases = [np.asarray(b, dtype=float) for b in block["biases"]]
    if len(weights) != len(net.weights):
        raise CheckpointError("layer count mismatch")
    for tgt, src in zip(net.weights, weights):
        if tgt.shape != src.shape:
            raise CheckpointError(f"weight shape mismatch: {src.shape} vs {tgt.shape}")
        tgt[...] = src
    for tgt, src in zip(net.biases, biases):
        tgt[...] = src
    return net


def load_checkpoint(path):
    """Rebuild (policy, meta) from a checkpoint file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a policy checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    policy = GaussianPolicy(np.random.default_rng(0))
    policy.net = _load_mlp(payload["policy"])
    policy.log_std = np.asarray(payload["log_std"], dtype=float)
    return policy, payload.get("meta", {})


class PolicyController:
    """Deterministic deployment of a trained policy at the 0.1 s period."""

    name = "ppo"

    def __init__(self, policy: GaussianPolicy, period: float = 0.1, u_limit: float = 24.0):
        self.policy = policy
        self.period = period
        self.u_limit = u_limit
        self._prev_meas = None

    @classmethod
    def from_checkpoint(cls, path, period: float = 0.1) -> "PolicyController":
        policy, _ = load_checkpoint(path)
        return cls(policy, period=period)

    def reset(self):
        self._prev_meas = None

    def control(self, y: float, r: float, t: float) -> float:
        pitch_diff = 0.0 if self._prev_meas is None else y - self._prev_meas
        obs = np.array([y - r, pitch_diff, y])
        self._prev_meas = y
        u = float(self.policy.mean(obs[None])[0])
        return min(max(u, -self.u_limit), self.u_limit)
