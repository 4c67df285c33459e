"""Evaluation harness: multi-rate closed-loop runs, step metrics, reports.

Controllers plug in through a tiny duck-typed interface: a ``name``, a
``period`` in seconds, ``reset()``, and ``control(y, r, t) -> volts`` with
y and r in radians.  The plant integrates at 1 ms, the controller fires at
its own period with the command held in between, and the protective
override is re-evaluated every plant step.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .kernels import rollout_held_input, safety_command
from .plant import DEG, PlantParams, SensorModel, SimulationFault
from .scenario import Scenario, standard_scenarios

LOG_PERIOD = 0.01  # trace sampling [s]
PLANT_DT = 0.001  # internal integration step [s]


class ZeroController:
    """Does nothing; useful as a baseline and in tests."""

    name = "zero"
    period = 0.1

    def reset(self):
        pass

    def control(self, y, r, t):
        return 0.0


@dataclass
class TimeSeries:
    """One closed-loop run logged at 10 ms (angles in degrees)."""

    controller: str
    scenario: str
    t: np.ndarray
    r_deg: np.ndarray
    y_deg: np.ndarray
    u: np.ndarray
    ticks: int = 0
    safety_events: int = 0
    qp_failures: int = 0
    wall_mean: float = 0.0
    wall_max: float = 0.0


@dataclass
class StepMetrics:
    target: float  # deg
    e_inf: float  # deg
    m_p: float | None  # percent, None when the settled value is too small
    t_r: float  # s


@dataclass
class RunReport:
    controllers: list
    step_rows: dict  # controller -> list[StepMetrics]
    seq_deviation: dict  # controller -> deg
    wall_mean: dict  # controller -> s per control step
    wall_max: dict
    qp_failures: dict
    safety_events: dict

    def averages(self, controller: str):
        """(mean |e_inf|, mean M_p, mean t_r) recomputed from the step rows."""
        rows = self.step_rows[controller]
        if not rows:
            return float("nan"), float("nan"), float("nan")
        e = float(np.mean([abs(m.e_inf) for m in rows]))
        mp_vals = [m.m_p for m in rows if m.m_p is not None]
        mp = float(np.mean(mp_vals)) if mp_vals else float("nan")
        tr = float(np.mean([m.t_r for m in rows]))
        return e, mp, tr


def run_scenario(
    controller,
    scenario: Scenario,
    plant_params: PlantParams | None = None,
    sensor: SensorModel | None = None,
    seed: int = 0,
) -> TimeSeries:
    """Simulate one scenario; deterministic for a given seed and controller."""
    params = plant_params or PlantParams()
    if scenario.plant_overrides:
        params = replace(params, **scenario.plant_overrides)
    sensor = sensor or SensorModel()
    if np.max(np.abs(scenario.targets_deg)) * DEG > params.theta_limit:
        raise ValueError("scenario target exceeds the mechanical pitch limit")

    substeps_per_tick = int(round(controller.period / PLANT_DT))
    if abs(substeps_per_tick * PLANT_DT - controller.period) > 1e-9 or substeps_per_tick < 1:
        raise ValueError(f"controller period {controller.period} is not a multiple of {PLANT_DT}")
    log_stride = int(round(LOG_PERIOD / PLANT_DT))
    chunk = math.gcd(substeps_per_tick, log_stride)
    n_steps = int(round(scenario.duration / PLANT_DT))

    controller.reset()
    theta = omega = 0.0
    u_cmd = 0.0
    events = 0
    ticks = 0
    walls = []
    t_log, r_log, y_log, u_log = [], [], [], []

    for i in range(0, n_steps, chunk):
        t = i * PLANT_DT
        r = scenario.target_rad(t)
        if i % substeps_per_tick == 0:
            y = sensor.measure(theta)
            started = time.perf_counter()
            u_cmd = controller.control(y, r, t)
            walls.append(time.perf_counter() - started)
            ticks += 1
        if i % log_stride == 0:
            u_now = float(
                safety_command(
                    theta, omega, u_cmd, params.theta_limit, params.safety_band, params.safety_voltage
                )
            )
            u_now = min(max(u_now, -params.u_limit), params.u_limit)
            t_log.append(t)
            r_log.append(r / DEG)
            y_log.append(theta / DEG)
            u_log.append(u_now)
        theta, omega, ev = rollout_held_input(
            theta,
            omega,
            u_cmd,
            chunk,
            PLANT_DT,
            params.c_theta,
            params.c_omega,
            params.c_u,
            params.u_limit,
            params.theta_limit,
            params.imbalance,
            True,
            params.safety_band,
            params.safety_voltage,
        )
        events += ev
        if not (math.isfinite(theta) and math.isfinite(omega)):
            raise SimulationFault(
                f"non-finite state at t={t:.3f}s in {scenario.name} under {controller.name}"
            )

    return TimeSeries(
        controller=controller.name,
        scenario=scenario.name,
        t=np.asarray(t_log),
        r_deg=np.asarray(r_log),
        y_deg=np.asarray(y_log),
        u=np.asarray(u_log),
        ticks=ticks,
        safety_events=int(events),
        qp_failures=getattr(controller, "qp_failures", 0),
        wall_mean=float(np.mean(walls)),
        wall_max=float(np.max(walls)),
    )


def step_metrics(trace: TimeSeries, target_deg: float, step_time: float = 10.0,
                 settle_window: float = 10.0) -> StepMetrics:
    """Steady-state deviation, overshoot and 10-90% rise time of a step run.

    The settled value is the mean over the final ``settle_window`` seconds;
    overshoot is computed on the sign-normalized response and floored at
    zero; rise time spans the first 10% and 90% crossings after the step.
    """
    mask = trace.t >= step_time
    if not np.any(mask) or trace.t[-1] - step_time < settle_window:
        raise ValueError("trace does not cover the post-step window")
    tt = trace.t[mask] - step_time
    yy = trace.y_deg[mask]
    y_inf = float(np.mean(yy[tt >= tt[-1] - settle_window]))
    e_inf = target_deg - y_inf
    if abs(y_inf) < 0.5:
        m_p = None
    else:
        sign = math.copysign(1.0, target_deg)
        s = yy * sign
        s_inf = y_inf * sign
        m_p = max(0.0, (float(np.max(s)) - s_inf) / s_inf * 100.0)
    sign = math.copysign(1.0, target_deg if target_deg != 0.0 else 1.0)
    s = yy * sign
    s_inf = y_inf * sign
    above10 = s >= 0.1 * s_inf
    above90 = s >= 0.9 * s_inf
    if not (np.any(above10) and np.any(above90)):
        raise ValueError("response never crosses the rise thresholds")
    t_r = float(tt[np.argmax(above90)] - tt[np.argmax(above10)])
    return StepMetrics(target=target_deg, e_inf=e_inf, m_p=m_p, t_r=t_r)


def sequence_deviation(trace: TimeSeries) -> float:
    """Mean absolute target deviation over the run, in degrees."""
    return float(np.mean(np.abs(trace.y_deg - trace.r_deg)))


def effort_bucket(wall_mean: float, fastest: float) -> str:
    ratio = wall_mean / fastest if fastest > 0.0 else 1.0
    if ratio <= 10.0:
        return "low"
    if ratio <= 100.0:
        return "medium"
    return "high"


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and math.isnan(value):
        return "n/a"
    return f"{value:.6g}"


def write_trace_csv(path, trace: TimeSeries):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "r", "y", "u"])
        for row in zip(trace.t, trace.r_deg, trace.y_deg, trace.u):
            writer.writerow([_fmt(v) for v in row])


def compare(
    controllers: dict,
    scenarios: list[Scenario] | None = None,
    out_dir=None,
    plant_params: PlantParams | None = None,
    sensor: SensorModel | None = None,
    seed: int = 0,
):
    """Run every controller through every scenario and assemble the report.

    ``controllers`` maps name -> zero-argument factory (fresh controller per
    run).  A failing scenario marks its cells and the sweep continues.
    Returns (RunReport, {(controller, scenario): TimeSeries}).
    """
    scenarios = scenarios if scenarios is not None else standard_scenarios()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        (out_dir / "traces").mkdir(parents=True, exist_ok=True)

    traces = {}
    step_rows = {name: [] for name in controllers}
    seq_dev = {}
    wall_mean = {}
    wall_max = {}
    qp_fail = {}
    safety = {}
    failures = []
    descriptions = {}

    for name, factory in controllers.items():
        walls = []
        wmax = 0.0
        qp = 0
        ev = 0
        for scenario in scenarios:
            try:
                ctrl = factory()
                if name not in descriptions and hasattr(ctrl, "describe"):
                    descriptions[name] = ctrl.describe()
                trace = run_scenario(ctrl, scenario, plant_params, sensor, seed)
            except Exception as exc:  # keep sweeping, report the hole
                failures.append((name, scenario.name, str(exc)))
                continue
            traces[(name, scenario.name)] = trace
            walls.append(trace.wall_mean)
            wmax = max(wmax, trace.wall_max)
            qp += trace.qp_failures
            ev += trace.safety_events
            if scenario.kind == "step":
                step_rows[name].append(step_metrics(trace, float(scenario.targets_deg[-1])))
            else:
                seq_dev[name] = sequence_deviation(trace)
            if out_dir is not None:
                write_trace_csv(out_dir / "traces" / f"{name}_{scenario.name}.csv", trace)
        wall_mean[name] = float(np.mean(walls)) if walls else float("nan")
        wall_max[name] = wmax
        qp_fail[name] = qp
        safety[name] = ev

    report = RunReport(
        controllers=list(controllers),
        step_rows=step_rows,
        seq_deviation=seq_dev,
        wall_mean=wall_mean,
        wall_max=wall_max,
        qp_failures=qp_fail,
        safety_events=safety,
    )
    if out_dir is not None:
        write_report_markdown(out_dir / "report.md", report, failures, descriptions)
        write_report_csv(out_dir / "report.csv", report)
        write_plotdata_csv(out_dir / "plotdata.csv", report, traces)
    return report, traces


def _bold_minima(values: dict) -> dict:
    """Markdown-bold every entry whose |value| attains the row minimum."""
    finite = {k: abs(v) for k, v in values.items() if v is not None and not math.isnan(v)}
    if not finite:
        return {k: _fmt(v) for k, v in values.items()}
    low = min(finite.values())
    out = {}
    for key, value in values.items():
        text = _fmt(value)
        if key in finite and abs(finite[key] - low) <= 1e-12 + 1e-9 * low:
            text = f"**{text}**"
        out[key] = text
    return out


def write_report_markdown(path, report: RunReport, failures=(), descriptions=None):
    names = report.controllers
    lines = ["# Controller comparison", ""]
    lines.append("| Metric | r | " + " | ".join(names) + " |")
    lines.append("|---|---|" + "---|" * len(names))

    targets = [m.target for m in report.step_rows[names[0]]] if names else []

    def metric_block(label, getter, unit=""):
        for i, tgt in enumerate(targets):
            row = {n: getter(report.step_rows[n][i]) for n in names}
            cells = _bold_minima(row)
            lines.append(
                f"| {label} | {tgt:+g} deg | " + " | ".join(cells[n] + unit if cells[n] != "n/a" else "n/a" for n in names) + " |"
            )
        avg = {}
        for n in names:
            vals = [getter(m) for m in report.step_rows[n]]
            vals = [v for v in vals if v is not None]
            avg[n] = float(np.mean([abs(v) for v in vals])) if vals else None
        cells = _bold_minima(avg)
        lines.append(f"| avg \\|{label}\\| |  | " + " | ".join(cells[n] + unit if cells[n] != "n/a" else "n/a" for n in names) + " |")

    metric_block("e_inf", lambda m: m.e_inf, " deg")
    metric_block("M_p", lambda m: m.m_p, " %")
    metric_block("t_r", lambda m: m.t_r, " s")

    seq = {n: report.seq_deviation.get(n, float("nan")) for n in names}
    cells = _bold_minima(seq)
    lines.append("| avg \\|delta\\| (80 s) |  | " + " | ".join(cells[n] + " deg" for n in names) + " |")

    fastest = min(v for v in report.wall_mean.values() if not math.isnan(v))
    wall = {n: report.wall_mean[n] * 1e6 for n in names}
    cells = _bold_minima(wall)
    lines.append("| control step wall time |  | " + " | ".join(cells[n] + " us" for n in names) + " |")
    buckets = {n: effort_bucket(report.wall_mean[n], fastest) for n in names}
    lines.append("| computational effort |  | " + " | ".join(buckets[n] for n in names) + " |")
    lines.append("| QP failures |  | " + " | ".join(str(report.qp_failures[n]) for n in names) + " |")
    lines.append("")
    lines.append("Implementation complexity (design-time judgement, not measured): "
                 "lqi low; mpc medium (observer plus QP solver); ppo medium (training pipeline).")
    if descriptions:
        lines.append("")
        lines.append("## Controller parameters")
        for name, desc in descriptions.items():
            rendered = ", ".join(f"{k}={_fmt_param(v)}" for k, v in desc.items())
            lines.append(f"- {name}: {rendered}")
    if failures:
        lines.append("")
        lines.append("## Failed cells")
        for name, scen, msg in failures:
            lines.append(f"- {name} / {scen}: {msg}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt_param(value):
    if isinstance(value, float):
        return _fmt(value)
    if isinstance(value, list):
        return "[" + ", ".join(_fmt_param(v) for v in value) + "]"
    return str(value)


def write_report_csv(path, report: RunReport):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["controller", "metric", "target_deg", "value"])
        for name in report.controllers:
            for m in report.step_rows[name]:
                writer.writerow([name, "e_inf_deg", _fmt(m.target), _fmt(m.e_inf)])
                writer.writerow([name, "m_p_percent", _fmt(m.target), _fmt(m.m_p)])
                writer.writerow([name, "t_r_s", _fmt(m.target), _fmt(m.t_r)])
            e, mp, tr = report.averages(name)
            writer.writerow([name, "avg_abs_e_inf_deg", "", _fmt(e)])
            writer.writerow([name, "avg_m_p_percent", "", _fmt(mp)])
            writer.writerow([name, "avg_t_r_s", "", _fmt(tr)])
            writer.writerow([name, "seq_avg_abs_delta_deg", "",
                             _fmt(report.seq_deviation.get(name))])
            writer.writerow([name, "wall_mean_s", "", _fmt(report.wall_mean[name])])
            writer.writerow([name, "wall_max_s", "", _fmt(report.wall_max[name])])
            writer.writerow([name, "qp_failures", "", str(report.qp_failures[name])])
            writer.writerow([name, "safety_events", "", str(report.safety_events[name])])


def write_plotdata_csv(path, report: RunReport, traces: dict):
    """Sequence-run panels: t, r, then y and u per controller."""
    names = [n for n in report.controllers if (n, "sequence") in traces]
    if not names:
        return
    base = traces[(names[0], "sequence")]
    header = ["t", "r"] + [f"y_{n}" for n in names] + [f"u_{n}" for n in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(base.t.size):
            row = [base.t[i], base.r_deg[i]]
            row += [traces[(n, "sequence")].y_deg[i] for n in names]
            row += [traces[(n, "sequence")].u[i] for n in names]
            writer.writerow([_fmt(v) for v in row])
