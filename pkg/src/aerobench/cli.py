"""Command-line entry point.

Subcommands: simulate, identify, train, evaluate, compare.  Exit codes:
0 ok, 1 domain error (bad config values, missing files, failed synthesis),
2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, ppo, sysid
from .config import ConfigError, RunConfig, load_config
from .lqi import LqiConfig, LqiController
from .model import linearize
from .mpc import MpcController
from .plant import DEG
from .ppo import PolicyController, TrackingEnv
from .scenario import Scenario


class CliError(Exception):
    """Domain error surfaced to the user with exit code 1."""


def _controller_factory(name: str, cfg: RunConfig, checkpoint=None, mpc_log=False):
    model = linearize(cfg.plant)
    if name == "lqi":
        lqi_cfg = LqiConfig(q=cfg.lqi_q, r=cfg.lqi_r, ts=cfg.lqi_period,
                            deriv_filter_tau=cfg.lqi_deriv_filter_tau,
                            u_limit=cfg.plant.u_limit)
        return lambda: LqiController(model, lqi_cfg)
    if name == "mpc":
        return lambda: MpcController(model, cfg.mpc, log_steps=mpc_log)
    if name == "ppo":
        if checkpoint is None:
            raise CliError("controller 'ppo' needs --checkpoint")
        policy, _ = ppo.load_checkpoint(checkpoint)
        return lambda: PolicyController(policy, period=cfg.ppo.control_period,
                                        u_limit=cfg.plant.u_limit)
    if name == "zero":
        return lambda: bench.ZeroController()
    raise CliError(f"unknown controller {name!r} (expected lqi, mpc, ppo or zero)")


def _scenario_from_args(args, cfg: RunConfig) -> Scenario:
    if args.scenario == "sequence":
        return cfg.sequence_scenario()
    if args.scenario == "step":
        if args.target_deg is None:
            raise CliError("--scenario step needs --target-deg")
        return Scenario.step(args.target_deg, cfg.step_pre_hold, cfg.step_hold)
    raise CliError(f"unknown scenario {args.scenario!r}")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    factory = _controller_factory(args.controller, cfg, args.checkpoint, mpc_log=True)
    scenario = _scenario_from_args(args, cfg)
    controller = factory()
    trace = bench.run_scenario(controller, scenario, cfg.plant, cfg.sensor, seed=cfg.seed)
    path = out / f"{trace.controller}_{scenario.name}.csv"
    bench.write_trace_csv(path, trace)
    if getattr(controller, "step_log", None):
        log_path = out / f"{trace.controller}_{scenario.name}_steps.csv"
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "r", "y", "x_hat_theta", "x_hat_omega", "d_hat",
                             "u", "qp_iterations", "solve_time"])
            for t, r, y, x_hat, d_hat, u, iters, solve_time in controller.step_log:
                writer.writerow([f"{t:.6g}", f"{r:.6g}", f"{y:.6g}",
                                 f"{x_hat[0]:.6g}", f"{x_hat[1]:.6g}", f"{d_hat:.6g}",
                                 f"{u:.6g}", iters, f"{solve_time:.6g}"])
        print(f"wrote {log_path} (per-step controller log)")
    dev = bench.sequence_deviation(trace)
    print(f"wrote {path} ({trace.t.size} rows); avg |y - r| = {dev:.4g} deg; "
          f"safety events: {trace.safety_events}")
    return 0


def cmd_identify(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    if args.data is not None:
        dataset = sysid.read_dataset_csv(args.data)
    else:
        dataset = sysid.generate_test_sequence(cfg.plant, seed=cfg.seed)
        path = out / "ident_dataset.csv"
        sysid.write_dataset_csv(path, dataset)
        print(f"wrote {path} (self-generated test sequence)")
    guess = replace(cfg.plant,
                    c_theta=cfg.plant.c_theta * args.init_scale,
                    c_omega=cfg.plant.c_omega * args.init_scale,
                    c_u=cfg.plant.c_u * args.init_scale)
    result = sysid.fit(dataset, guess, seed=cfg.seed)
    params_path = out / "fitted_params.txt"
    with open(params_path, "w", encoding="utf-8") as fh:
        fh.write(f"c_theta = {result.params.c_theta:.6g}\n")
        fh.write(f"c_omega = {result.params.c_omega:.6g}\n")
        fh.write(f"c_u = {result.params.c_u:.6g}\n")
    print(f"fit cost {result.cost:.6g} (initial {result.initial_cost:.6g}); wrote {params_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    ppo_cfg = cfg.ppo
    if args.total_steps is not None:
        ppo_cfg = replace(ppo_cfg, total_steps=args.total_steps)
    env = TrackingEnv(cfg.plant, cfg.sensor,
                      control_period=ppo_cfg.control_period,
                      targets_deg=cfg.sequence_targets_deg,
                      dwell=cfg.sequence_dwell,
                      randomize_targets=ppo_cfg.randomize_targets)
    progress = (lambda s, r: print(f"step {s}: eval reward {r:.1f}", flush=True)) \
        if not args.quiet else None
    result = ppo.train(env, ppo_cfg, seed=cfg.seed, progress=progress)
    ckpt = out / "policy.json"
    ppo.save_checkpoint(ckpt, result.policy, result.value_net,
                        meta={"seed": cfg.seed, "env_steps": result.env_steps,
                              "eval_reward": result.best_reward,
                              "eval_step": result.best_step})
    curve_path = out / "learning_curve.csv"
    with open(curve_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "eval_reward", "mean_deviation_deg"])
        writer.writerows(result.curve)
    print(f"best eval reward {result.best_reward:.2f} "
          f"({ppo.reward_to_mean_deviation_deg(result.best_reward, env.episode_steps):.2f} deg mean deviation) "
          f"at step {result.best_step}; wrote {ckpt} and {curve_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    factory = _controller_factory("ppo", cfg, args.checkpoint)
    scenario = cfg.sequence_scenario()
    trace = bench.run_scenario(factory(), scenario, cfg.plant, cfg.sensor, seed=cfg.seed)
    path = out / "ppo_sequence.csv"
    bench.write_trace_csv(path, trace)
    dev = bench.sequence_deviation(trace)
    print(f"80 s sequence: avg |y - r| = {dev:.3f} deg; wrote {path}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    names = [n.strip() for n in args.controllers.split(",") if n.strip()]
    factories = {}
    for name in names:
        factories[name] = _controller_factory(name, cfg, args.checkpoint)
    report, _ = bench.compare(factories, cfg.scenarios(), out, cfg.plant, cfg.sensor,
                              seed=cfg.seed)
    for name in names:
        e, mp, tr = report.averages(name)
        seq = report.seq_deviation.get(name, float("nan"))
        print(f"{name}: avg|e_inf|={e:.3f} deg, avg M_p={mp:.2f}%, avg t_r={tr:.3f} s, "
              f"seq avg|delta|={seq:.3f} deg, wall={report.wall_mean[name]*1e6:.1f} us/step")
    print(f"report written to {out}")
    return 0


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aerobench",
                                     description="1-DOF beam control benchmark workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory override")

    p = sub.add_parser("simulate", help="run one controller through one scenario")
    common(p)
    p.add_argument("--controller", default="lqi", help="lqi, mpc, ppo or zero")
    p.add_argument("--scenario", default="sequence", help="sequence or step")
    p.add_argument("--target-deg", type=float, default=None, help="step target")
    p.add_argument("--checkpoint", default=None, help="policy checkpoint for ppo")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="fit plant coefficients from a dataset")
    common(p)
    p.add_argument("--data", default=None, help="dataset CSV (t,u,theta,omega); "
                                                "generated from the plant config when omitted")
    p.add_argument("--init-scale", type=float, default=1.2,
                   help="multiplier applied to the true coefficients for the initial guess")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("train", help="train the tracking policy")
    common(p)
    p.add_argument("--total-steps", type=int, default=None, help="environment step budget")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run a trained policy on the 80 s sequence")
    common(p)
    p.add_argument("--checkpoint", required=True, help="policy checkpoint")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="full metric comparison across controllers")
    common(p)
    p.add_argument("--controllers", default="lqi,mpc,ppo", help="comma-separated list")
    p.add_argument("--checkpoint", default=None, help="policy checkpoint for ppo")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
