"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as the
criteria complete.  The full-budget policy-training criterion is gated
behind AEROBENCH_FULL_PPO=1 (three seeds of one million steps, about ten
minutes); the always-on smoke variant trains 200k steps.
"""

import math
import os

import numpy as np
import pytest

from aerobench import numerics
from aerobench.bench import compare, run_scenario, step_metrics
from aerobench.lqi import LqiController, synthesize
from aerobench.model import discretize, linearize
from aerobench.mpc import MpcConfig, MpcController, steady_state_target
from aerobench.nets import Mlp
from aerobench.plant import DEG, PlantParams, PlantState, derivative
from aerobench.ppo import (
    GaussianPolicy,
    PolicyController,
    PpoConfig,
    TrackingEnv,
    gae_advantages,
    reward_to_mean_deviation_deg,
    train,
)
from aerobench.scenario import Scenario
from aerobench.sysid import fit, generate_test_sequence

PARAMS = PlantParams()
MODEL = linearize(PARAMS)


def report(criterion: str, detail: str):
    print(f"ACCEPTANCE {criterion}: PASS - {detail}")


@pytest.fixture(scope="module")
def smoke_train():
    env = TrackingEnv()
    cfg = PpoConfig(total_steps=200_000, eval_every=20_480)
    return train(env, cfg, seed=0), env


def test_criterion_1_linearization_identity():
    model = linearize(PARAMS)
    assert abs(model.a[1, 0] - (-0.8185)) < 1e-12
    assert abs(model.a[1, 1] - (-0.0503)) < 1e-12
    assert abs(model.b[1] - 0.0682) < 1e-12
    assert model.a[0, 0] == 0.0 and model.a[0, 1] == 1.0 and model.b[0] == 0.0
    # and the Jacobian really is the Jacobian of the nonlinear dynamics
    eps = 1e-6
    d_up = derivative(PlantState(eps, 0.0), 0.0, PARAMS)[1]
    d_dn = derivative(PlantState(-eps, 0.0), 0.0, PARAMS)[1]
    assert (d_up - d_dn) / (2 * eps) == pytest.approx(model.a[1, 0], abs=1e-9)
    report("1 (linearization identity)", "A and b entries exact to 1e-12")


def test_criterion_2_riccati_residuals():
    a_bar = np.zeros((3, 3))
    a_bar[:2, :2] = MODEL.a
    a_bar[2, :2] = -MODEL.c
    b_bar = np.concatenate([MODEL.b, [0.0]])
    q = np.diag([10.0, 1.0, 100.0])
    r = 0.001
    p = numerics.solve_care(a_bar, b_bar, q, np.array([[r]]))
    care_res = np.linalg.norm(
        a_bar.T @ p + p @ a_bar - np.outer(p @ b_bar, p @ b_bar) / r + q, "fro"
    )
    assert care_res < 1e-8
    k = (b_bar @ p) / r
    care_eig = numerics.max_real_eig(a_bar - np.outer(b_bar, k))
    assert care_eig < 0.0

    dmodel = discretize(MODEL, 0.02)
    qd = np.diag([10.0, 1.0])
    rd = np.array([[0.01]])
    pd, kd = numerics.solve_dare(dmodel.ad, dmodel.bd, qd, rd)
    dare_res = np.linalg.norm(
        dmodel.ad.T @ pd @ dmodel.ad - pd
        - dmodel.ad.T @ pd @ dmodel.bd.reshape(-1, 1) @ kd + qd,
        "fro",
    )
    assert dare_res < 1e-10
    rho = numerics.spectral_radius(dmodel.ad - np.outer(dmodel.bd, kd))
    assert rho < 1.0
    report(
        "2 (Riccati residuals)",
        f"CARE {care_res:.2e} < 1e-8, DARE {dare_res:.2e} < 1e-10, "
        f"max Re(eig) {care_eig:.3f} < 0, spectral radius {rho:.4f} < 1",
    )


def brute_force_box_qp(h, f, lower, upper):
    n = f.size
    best, best_val = None, np.inf
    for code in range(3**n):
        pattern, c = [], code
        for _ in range(n):
            pattern.append(c % 3)
            c //= 3
        z = np.zeros(n)
        fixed = [i for i, p in enumerate(pattern) if p != 1]
        free = [i for i, p in enumerate(pattern) if p == 1]
        for i in fixed:
            z[i] = lower[i] if pattern[i] == 0 else upper[i]
        if free:
            try:
                z[free] = np.linalg.solve(
                    h[np.ix_(free, free)], -(f[free] + h[np.ix_(free, fixed)] @ z[fixed])
                )
            except np.linalg.LinAlgError:
                continue
        if np.any(z < lower - 1e-9) or np.any(z > upper + 1e-9):
            continue
        g = h @ z + f
        if any(
            (pattern[i] == 0 and g[i] < -1e-7)
            or (pattern[i] == 2 and g[i] > 1e-7)
            or (pattern[i] == 1 and abs(g[i]) > 1e-7)
            for i in range(n)
        ):
            continue
        val = 0.5 * z @ h @ z + f @ z
        if val < best_val:
            best, best_val = z, val
    return best


def test_criterion_3_qp_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 4))
        m = rng.standard_normal((n, n))
        h = m.T @ m + 1e-3 * np.eye(n)
        f = 2.0 * rng.standard_normal(n)
        lower, upper = np.full(n, -1.0), np.full(n, 1.0)
        res = numerics.solve_box_qp(
            numerics.BoxQp(h, f, lower, upper), tol=1e-9, max_iter=50_000
        )
        oracle = brute_force_box_qp(h, f, lower, upper)
        assert oracle is not None
        worst = max(worst, float(np.linalg.norm(res.z - oracle)))
    assert worst < 1e-6
    report("3 (QP oracle equivalence)", f"200 random QPs, worst solution gap {worst:.2e} < 1e-6")


def test_criterion_4_unconstrained_mpc_equals_finite_horizon_lq():
    cfg = MpcConfig(qp_tol=1e-9, qp_max_iter=20_000)
    ctrl = MpcController(MODEL, cfg)
    ad, bd = ctrl.model.ad, ctrl.model.bd
    p_i = ctrl.p_terminal.copy()
    for _ in range(cfg.horizon - 1, 0, -1):
        gain = (bd @ p_i @ ad) / (cfg.r + bd @ p_i @ bd)
        p_i = cfg.q + ad.T @ p_i @ ad - np.outer(ad.T @ p_i @ bd, gain)
    k0 = (bd @ p_i @ ad) / (cfg.r + bd @ p_i @ bd)

    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-0.5, 0.5, 2)
        d = rng.uniform(-0.1, 0.1)
        target = rng.uniform(-0.6, 0.6)
        ctrl.reset()
        res = ctrl.plan(np.array([*x, d]), target, u_min=-1e6, u_max=1e6)
        x_ss, u_ss = steady_state_target(target, d, ctrl.model)
        worst = max(worst, abs(res.u - (u_ss - float(k0 @ (x - x_ss)))))
    assert worst < 1e-5
    report(
        "4 (unconstrained MPC = finite-horizon LQ)",
        f"100 random states, worst input gap {worst:.2e} < 1e-5",
    )


def test_criterion_5_offset_free_tracking_under_imbalance():
    scenario = Scenario.step(20.0, pre_hold=0.0, hold=35.0, imbalance=0.05)
    tails = {}
    for name, ctrl in (("mpc", MpcController(MODEL)), ("lqi", LqiController(MODEL))):
        trace = run_scenario(ctrl, scenario)
        tails[name] = float(np.max(np.abs(trace.y_deg[trace.t >= 30.0] - 20.0)))
        assert tails[name] < 0.25
    report(
        "5 (offset-free under imbalance)",
        f"|theta - 20 deg| after 30 s: mpc {tails['mpc']:.3f} deg, "
        f"lqi {tails['lqi']:.3f} deg, both < 0.25 deg",
    )


def test_criterion_6_step_response_desk_reproduction():
    results = {}
    for name, factory in (
        ("lqi", lambda: LqiController(MODEL)),
        ("mpc", lambda: MpcController(MODEL)),
    ):
        metrics = []
        for target in (5.0, 10.0, 20.0, 40.0, -5.0, -10.0, -20.0, -40.0):
            trace = run_scenario(factory(), Scenario.step(target))
            metrics.append(step_metrics(trace, target))
        avg_tr = float(np.mean([m.t_r for m in metrics]))
        avg_e = float(np.mean([abs(m.e_inf) for m in metrics]))
        avg_mp = float(np.mean([m.m_p for m in metrics]))
        results[name] = (avg_tr, avg_e, avg_mp)
    lqi_tr, lqi_e, _ = results["lqi"]
    mpc_tr, _, mpc_mp = results["mpc"]
    assert abs(lqi_tr - 0.95) <= 0.5
    assert lqi_e <= 0.2
    assert abs(mpc_tr - 1.20) <= 0.5
    assert mpc_mp <= 10.0
    report(
        "6 (step-response desk reproduction)",
        f"lqi avg t_r {lqi_tr:.2f} s (0.95 +- 0.5), avg |e_inf| {lqi_e:.3f} deg <= 0.2; "
        f"mpc avg t_r {mpc_tr:.2f} s (1.20 +- 0.5), avg M_p {mpc_mp:.2f}% <= 10",
    )


def test_criterion_7_gradients_and_gae_oracle():
    rng = np.random.default_rng(5)
    net = Mlp((3, 6, 5, 1), rng)
    x = rng.standard_normal((8, 3))
    w = rng.standard_normal((8, 1))
    flat0 = net.flat_params()
    net.forward(x)
    analytic = np.concatenate([g.ravel() for g in net.backward(w)])
    fd = np.zeros_like(flat0)
    for i in range(flat0.size):
        up, dn = flat0.copy(), flat0.copy()
        up[i] += 1e-5
        dn[i] -= 1e-5
        net.set_params(up)
        f_up = float(np.sum(net.forward(x) * w))
        net.set_params(dn)
        fd[i] = (f_up - float(np.sum(net.forward(x) * w))) / 2e-5
    net.set_params(flat0)
    grad_err = float(np.max(np.abs(analytic - fd) / (np.abs(fd) + 1e-8)))
    assert grad_err < 1e-4

    rewards = rng.standard_normal(128)
    values = rng.standard_normal(129)
    dones = (rng.random(128) < 0.1).astype(float)
    adv = gae_advantages(rewards, values, dones, 0.99, 0.95)
    deltas = rewards + 0.99 * values[1:] * (1 - dones) - values[:-1]
    brute = np.zeros(128)
    for t in range(128):
        total, weight = 0.0, 1.0
        for s in range(t, 128):
            total += weight * deltas[s]
            if dones[s]:
                break
            weight *= 0.99 * 0.95
        brute[t] = total
    gae_err = float(np.max(np.abs(adv - brute)))
    assert gae_err < 1e-10
    report(
        "7a (gradient + GAE oracles)",
        f"finite-difference gradient gap {grad_err:.2e} < 1e-4, GAE gap {gae_err:.2e} < 1e-10",
    )


def test_criterion_7_reward_bookkeeping():
    assert reward_to_mean_deviation_deg(-53.1, 800) == pytest.approx(3.80, abs=0.005)
    report("7b (reward bookkeeping)", "-53.1 over 800 steps = 3.80 deg mean deviation")


def test_criterion_7_training_smoke(smoke_train):
    result, env = smoke_train
    assert result.best_reward >= -150.0
    report(
        "7c (training smoke, 200k steps)",
        f"best deterministic eval reward {result.best_reward:.1f} >= -150 "
        f"({reward_to_mean_deviation_deg(result.best_reward, env.episode_steps):.2f} deg mean deviation; "
        "reference point: -53.1)",
    )


@pytest.mark.skipif(
    os.environ.get("AEROBENCH_FULL_PPO") != "1",
    reason="full-budget training (3 seeds x 1M steps, ~10 min); set AEROBENCH_FULL_PPO=1",
)
def test_criterion_7_training_full_budget():
    bests = []
    for seed in (0, 1, 2):
        env = TrackingEnv()
        result = train(env, PpoConfig(total_steps=1_000_000, eval_every=20_480), seed=seed)
        bests.append(result.best_reward)
    median = sorted(bests)[1]
    assert median >= -80.0
    report(
        "7 (training, full budget)",
        f"median best eval reward over 3 seeds {median:.1f} >= -80 "
        f"(all: {', '.join(f'{b:.1f}' for b in bests)}; reference point: -53.1)",
    )


def test_criterion_8_sysid_recovery():
    dataset = generate_test_sequence(PARAMS, seed=0, segment_duration=12.0)
    guess = PlantParams(
        c_theta=PARAMS.c_theta * 1.2, c_omega=PARAMS.c_omega * 0.8, c_u=PARAMS.c_u * 1.15
    )
    result = fit(dataset, guess, seed=0)
    errors = {
        "c_theta": abs(result.params.c_theta - PARAMS.c_theta) / PARAMS.c_theta,
        "c_omega": abs(result.params.c_omega - PARAMS.c_omega) / PARAMS.c_omega,
        "c_u": abs(result.params.c_u - PARAMS.c_u) / PARAMS.c_u,
    }
    assert all(err < 0.01 for err in errors.values())
    report(
        "8 (sysid recovery)",
        "relative errors "
        + ", ".join(f"{k} {v:.2%}" for k, v in errors.items())
        + ", all < 1%",
    )


def test_criterion_9_report_reproduction(smoke_train, tmp_path):
    result, env = smoke_train
    controllers = {
        "lqi": lambda: LqiController(MODEL),
        "mpc": lambda: MpcController(MODEL),
        "ppo": lambda: PolicyController(result.policy),
    }
    report_obj, traces = compare(controllers, out_dir=tmp_path)

    text = (tmp_path / "report.md").read_text(encoding="utf-8")
    for target in ("+5", "+10", "+20", "+40", "-5", "-10", "-20", "-40"):
        assert f"{target} deg" in text
    assert "computational effort" in text
    for name in controllers:
        assert len(report_obj.step_rows[name]) == 8
        avg_tr_report = report_obj.averages(name)[2]
        avg_tr_direct = float(np.mean([m.t_r for m in report_obj.step_rows[name]]))
        assert avg_tr_report == pytest.approx(avg_tr_direct, abs=1e-12)
    assert (tmp_path / "report.csv").exists()
    assert (tmp_path / "plotdata.csv").exists()
    assert len(list((tmp_path / "traces").glob("*.csv"))) == 27

    wall = report_obj.wall_mean
    assert wall["mpc"] > 10.0 * wall["lqi"]
    assert wall["mpc"] > wall["ppo"]
    report(
        "9 (report reproduction)",
        f"8 step targets x 3 controllers + sequence; per-step wall time "
        f"mpc {wall['mpc']*1e6:.0f} us > 10x lqi {wall['lqi']*1e6:.1f} us, "
        f"> ppo {wall['ppo']*1e6:.1f} us",
    )
