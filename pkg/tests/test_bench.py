import math

import numpy as np
import pytest

from aerobench.bench import (
    RunReport,
    StepMetrics,
    TimeSeries,
    ZeroController,
    compare,
    effort_bucket,
    run_scenario,
    sequence_deviation,
    step_metrics,
)
from aerobench.lqi import LqiController
from aerobench.mpc import MpcController
from aerobench.plant import DEG, PlantParams
from aerobench.scenario import Scenario, standard_scenarios


def synthetic_trace(t, y, r=None, controller="x", scenario="step_+20deg"):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.zeros_like(t) if r is None else np.asarray(r, dtype=float)
    return TimeSeries(controller=controller, scenario=scenario, t=t, r_deg=r,
                      y_deg=y, u=np.zeros_like(t))


class TestRunScenario:
    def test_zero_controller_stays_at_origin(self):
        trace = run_scenario(ZeroController(), Scenario.sequence(targets_deg=[0.0] * 8))
        assert np.all(trace.y_deg == 0.0)
        assert trace.t.size == 8000  # 80 s at 10 ms

    def test_tick_count_exact(self, beam_model):
        trace = run_scenario(LqiController(beam_model), Scenario.sequence())
        assert trace.ticks == 40000  # 80 s at 2 ms
        trace = run_scenario(MpcController(beam_model), Scenario.step(5.0))
        assert trace.ticks == 3500  # 70 s at 20 ms

    def test_deterministic_traces(self, beam_model):
        t1 = run_scenario(LqiController(beam_model), Scenario.step(20.0), seed=7)
        t2 = run_scenario(LqiController(beam_model), Scenario.step(20.0), seed=7)
        assert np.array_equal(t1.y_deg, t2.y_deg)
        assert np.array_equal(t1.u, t2.u)

    def test_lqi_40deg_rise_time_in_reference_band(self, beam_model):
        trace = run_scenario(LqiController(beam_model), Scenario.step(40.0))
        m = step_metrics(trace, 40.0)
        assert m.t_r == pytest.approx(1.10, abs=0.5)

    def test_target_beyond_limit_rejected(self, beam_model):
        with pytest.raises(ValueError):
            run_scenario(LqiController(beam_model), Scenario.step(55.0))

    def test_incompatible_period_rejected(self):
        ctrl = ZeroController()
        ctrl.period = 0.0007
        with pytest.raises(ValueError):
            run_scenario(ctrl, Scenario.step(5.0))


class TestStepMetrics:
    def test_first_order_exponential_closed_form(self):
        t = np.arange(0.0, 70.0, 0.01)
        tau = 0.5
        y = np.where(t >= 10.0, 20.0 * (1.0 - np.exp(-(t - 10.0) / tau)), 0.0)
        m = step_metrics(synthetic_trace(t, y), 20.0)
        assert m.t_r == pytest.approx(tau * math.log(9.0), abs=0.02)
        assert m.m_p == pytest.approx(0.0, abs=1e-6)
        assert m.e_inf == pytest.approx(0.0, abs=1e-6)

    def test_exact_tracking(self):
        t = np.arange(0.0, 70.0, 0.01)
        y = np.where(t >= 10.0, 15.0, 0.0)
        y[t >= 10.0] = 15.0
        m = step_metrics(synthetic_trace(t, y), 15.0)
        assert m.e_inf == 0.0
        assert m.m_p == 0.0
        assert m.t_r == 0.0

    def test_negative_step_mirrors_positive(self):
        t = np.arange(0.0, 70.0, 0.01)
        base = np.where(t >= 10.0, 1.0 - np.exp(-(t - 10.0) / 0.8), 0.0)
        base += np.where(t >= 10.0, 0.3 * np.exp(-(t - 10.0)) * np.sin(3.0 * (t - 10.0)), 0.0)
        pos = step_metrics(synthetic_trace(t, 20.0 * base), 20.0)
        neg = step_metrics(synthetic_trace(t, -20.0 * base), -20.0)
        assert neg.e_inf == pytest.approx(-pos.e_inf, abs=1e-12)
        assert neg.m_p == pytest.approx(pos.m_p, abs=1e-9)
        assert neg.t_r == pytest.approx(pos.t_r, abs=1e-12)

    def test_small_settled_value_has_no_overshoot_metric(self):
        t = np.arange(0.0, 70.0, 0.01)
        y = np.where(t >= 10.0, 0.3, 0.0)  # below the 0.5 deg floor
        m = step_metrics(synthetic_trace(t, y), 0.3)
        assert m.m_p is None

    def test_short_trace_rejected(self):
        t = np.arange(0.0, 12.0, 0.01)
        with pytest.raises(ValueError):
            step_metrics(synthetic_trace(t, np.zeros_like(t)), 5.0)

    def test_metrics_pure(self):
        t = np.arange(0.0, 70.0, 0.01)
        y = np.where(t >= 10.0, 10.0 * (1 - np.exp(-(t - 10.0))), 0.0)
        tr = synthetic_trace(t, y)
        assert step_metrics(tr, 10.0) == step_metrics(tr, 10.0)


class TestSequenceDeviation:
    def test_perfect_tracking(self):
        t = np.arange(0.0, 80.0, 0.01)
        r = np.sin(t)
        trace = synthetic_trace(t, r, r=r, scenario="sequence")
        assert sequence_deviation(trace) == 0.0

    def test_constant_offset(self):
        t = np.arange(0.0, 80.0, 0.01)
        trace = synthetic_trace(t, np.ones_like(t), r=np.zeros_like(t), scenario="sequence")
        assert sequence_deviation(trace) == 1.0


class TestCompare:
    def test_single_controller_single_step(self, beam_model, tmp_path):
        report, traces = compare(
            {"lqi": lambda: LqiController(beam_model)},
            [Scenario.step(10.0)],
            tmp_path,
        )
        assert len(report.step_rows["lqi"]) == 1
        assert (tmp_path / "report.md").exists()
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "traces" / "lqi_step_+10deg.csv").exists()

    def test_averages_recomputed_from_rows(self):
        rows = [
            StepMetrics(target=5.0, e_inf=0.2, m_p=1.0, t_r=0.5),
            StepMetrics(target=-5.0, e_inf=-0.4, m_p=None, t_r=1.5),
        ]
        report = RunReport(
            controllers=["x"], step_rows={"x": rows}, seq_deviation={"x": 1.0},
            wall_mean={"x": 1e-6}, wall_max={"x": 2e-6}, qp_failures={"x": 0},
            safety_events={"x": 0},
        )
        e, mp, tr = report.averages("x")
        assert e == pytest.approx(0.3)
        assert mp == pytest.approx(1.0)  # None rows excluded
        assert tr == pytest.approx(1.0)

    def test_report_exports_controller_parameters(self, beam_model, tmp_path):
        compare({"lqi": lambda: LqiController(beam_model)}, [Scenario.step(5.0)], tmp_path)
        text = (tmp_path / "report.md").read_text()
        assert "Controller parameters" in text
        assert "gain=" in text

    def test_failed_cell_keeps_sweeping(self, beam_model, tmp_path):
        class Exploding(ZeroController):
            name = "boom"

            def control(self, y, r, t):
                raise RuntimeError("controller fault")

        report, traces = compare(
            {"boom": Exploding, "lqi": lambda: LqiController(beam_model)},
            [Scenario.step(5.0)],
            tmp_path,
        )
        assert len(report.step_rows["boom"]) == 0
        assert len(report.step_rows["lqi"]) == 1
        text = (tmp_path / "report.md").read_text()
        assert "Failed cells" in text and "boom" in text


def test_effort_buckets():
    assert effort_bucket(1e-6, 1e-6) == "low"
    assert effort_bucket(5e-5, 1e-6) == "medium"
    assert effort_bucket(5e-4, 1e-6) == "high"


def test_standard_scenarios_cover_protocol():
    scenarios = standard_scenarios()
    steps = [s for s in scenarios if s.kind == "step"]
    assert sorted(s.targets_deg[-1] for s in steps) == [-40, -20, -10, -5, 5, 10, 20, 40]
    seq = [s for s in scenarios if s.kind == "sequence"]
    assert len(seq) == 1
    assert seq[0].duration == 80.0
    assert list(seq[0].targets_deg) == [0, 5, -5, 20, -20, 40, -40, 0]
