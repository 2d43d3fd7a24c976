"""Trace post-processing: histograms, occupancy, cohesion, speed stats."""

import numpy as np
import pytest

from swarmsim.behavior import AgentMode
from swarmsim.engine import BoidRecord, StepTrace, WorldConfig, run
from swarmsim.errors import EmptyTrace
from swarmsim.metrics import RunMetrics, compute_metrics, histogram_csv, is_unimodal


def record(i, degree=1, mode=AgentMode.NOMINAL, speed=0.125, g=-0.5, px=1.0, py=1.0):
    return BoidRecord(
        id=i, px=px, py=py, vx=speed, vy=0.0, ux=0.0, uy=0.0, mode=mode, degree=degree, g_max=g
    )


class TestComputeMetrics:
    def test_two_boid_world_single_bin(self):
        cfg = WorldConfig(n_boids=2, duration=1.0, seed=0)
        m = compute_metrics(run(cfg), cfg)
        assert set(m.neighborhood_histogram) == {1}
        assert m.neighborhood_histogram[1] == 2 * 20
        assert m.degree_mode == 1

    def test_hand_built_tally(self):
        cfg = WorldConfig(n_boids=2, duration=1.0, seed=0)
        steps = [
            StepTrace(t=0.05, boids=(record(0, degree=1), record(1, degree=2)), predator_position=None),
            StepTrace(t=0.10, boids=(record(0, degree=2), record(1, degree=2, mode=AgentMode.STRAINED)), predator_position=(0.0, 0.0)),
            StepTrace(t=0.15, boids=(record(0, degree=1, g=1e-6), record(1, degree=3)), predator_position=None),
        ]
        m = compute_metrics(steps, cfg, transient_cutoff=100.0)
        assert m.neighborhood_histogram == {1: 2, 2: 3, 3: 1}
        assert m.degree_mode == 2
        assert m.mode_occupancy["S"] == pytest.approx(1 / 6)
        assert m.mode_occupancy["N"] == pytest.approx(5 / 6)
        assert sum(m.mode_occupancy.values()) == pytest.approx(1.0, abs=1e-12)
        assert m.wall_violation_count == 1
        assert m.min_predator_distance == pytest.approx(np.hypot(1.0, 1.0))

    def test_histogram_mass_conservation(self):
        cfg = WorldConfig(duration=5.0, seed=2)
        traces = list(run(cfg))
        m = compute_metrics(traces, cfg)
        assert sum(m.neighborhood_histogram.values()) == cfg.n_boids * len(traces)

    def test_speed_statistics_post_transient(self):
        cfg = WorldConfig(duration=50.0, seed=0)
        m = compute_metrics(run(cfg), cfg, transient_cutoff=40.0)
        assert m.median_speed == pytest.approx(cfg.v_star, rel=1e-6)
        assert m.median_abs_speed_error < 1e-6
        assert m.mean_abs_speed_error < 0.01
        assert m.mean_r_norm > 0

    def test_no_predator_distance_is_none(self):
        cfg = WorldConfig(n_boids=2, duration=1.0, seed=0)
        m = compute_metrics(run(cfg), cfg)
        assert m.min_predator_distance is None

    def test_empty_trace_raises(self):
        with pytest.raises(EmptyTrace):
            compute_metrics([], WorldConfig())

    def test_to_dict_json_safe(self):
        import json

        cfg = WorldConfig(n_boids=2, duration=1.0, seed=0)
        m = compute_metrics(run(cfg), cfg)
        json.dumps(m.to_dict(), allow_nan=False)


class TestHistogramCsv:
    def test_single_bin(self):
        m = RunMetrics({1: 40}, 1, 0.0, 0.0, 0.0, 0.0, None, {"N": 1.0}, 0)
        assert histogram_csv(m) == "degree,count\n1,40\n"

    def test_empty_header_only(self):
        m = RunMetrics({}, 0, 0.0, 0.0, 0.0, 0.0, None, {}, 0)
        assert histogram_csv(m) == "degree,count\n"

    def test_contiguous_bins(self):
        m = RunMetrics({2: 5, 5: 1}, 2, 0.0, 0.0, 0.0, 0.0, None, {"N": 1.0}, 0)
        assert histogram_csv(m) == "degree,count\n2,5\n3,0\n4,0\n5,1\n"


class TestUnimodal:
    def test_rising_falling(self):
        assert is_unimodal({2: 1, 3: 5, 4: 9, 5: 4, 6: 1})

    def test_plateau_allowed(self):
        assert is_unimodal({2: 1, 3: 5, 4: 5, 5: 2})

    def test_double_peak_rejected(self):
        assert not is_unimodal({2: 5, 3: 1, 4: 5})

    def test_ignores_low_degrees(self):
        assert is_unimodal({1: 100, 2: 1, 3: 5, 4: 2})
