import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskbench.models import BicycleParams, ControlInput, EgoState, bicycle_step
from deskbench.predict import (
    AgentForecast,
    AgentHistory,
    AgentState,
    Mode,
    TrajectorySet,
    dumps_trajectory_set,
    inflate,
    predict_cv,
    predict_rollout,
)


def history(vx, vy, x0=0.0, y0=0.0, n=11, dt=0.1, kind="vehicle"):
    t = np.arange(-(n - 1), 1) * dt
    return AgentHistory("a", kind, np.column_stack([t, x0 + vx * t, y0 + vy * t, np.zeros(n)]), 4.0, 2.0)


class TestConstantVelocity:
    def test_final_point(self):
        ts = predict_cv([history(5.0, 0.0)], 80, 0.1)
        f = ts.agents[0]
        assert f.steps == 80
        assert f.modes[0].points[-1, 1:3] == pytest.approx((40.0, 0.0))
        assert f.modes[0].probability == 1.0

    def test_stationary(self):
        pts = predict_cv([history(0.0, 0.0, 3.0, 4.0)], 80, 0.1).agents[0].modes[0].points
        assert np.all(pts[:, 1] == 3.0) and np.all(pts[:, 2] == 4.0)

    def test_last_two_samples(self):
        samples = np.array([[-0.2, 0, 0, 0], [-0.1, 1.0, 0.0, 0], [0.0, 1.3, 0.4, 0]])
        pts = predict_cv([AgentHistory("c", "vehicle", samples, 4, 2)], 5, 0.1).agents[0].modes[0].points
        steps = np.diff(np.vstack([[1.3, 0.4], pts[:, 1:3]]), axis=0)
        assert np.allclose(steps, [0.3, 0.4])

    def test_single_sample_flag(self):
        diag = {}
        h = AgentHistory("p", "pedestrian", np.array([[0.0, 2.0, 3.0, 0.5]]), 0.6, 0.6)
        ts = predict_cv([h], 10, 0.1, diag)
        assert diag["zero_velocity"] == ["p"]
        assert np.all(ts.agents[0].modes[0].points[:, 1:3] == [2.0, 3.0])

    def test_unordered_history(self):
        with pytest.raises(ValueError):
            AgentHistory("a", "vehicle", np.array([[0, 0, 0, 0], [-0.1, 1, 0, 0]]), 4, 2)


class TestRollout:
    def test_straight(self):
        a = AgentState("v", "vehicle", EgoState(0, 0, 0, 10), 4, 2)
        pts = predict_rollout([a], 2.0, 0.05).agents[0].modes[0].points
        assert len(pts) == 40
        assert pts[-1, 1] == pytest.approx(20.0)

    def test_matches_direct_iteration(self):
        a = AgentState("v", "vehicle", EgoState(1, 2, 0.3, 8), 4, 2, steer=0.1, accel=0.5)
        pts = predict_rollout([a], 2.0, 0.05).agents[0].modes[0].points
        s = a.state
        for _ in range(40):
            s = bicycle_step(s, ControlInput(0.1, 0.5), 0.05, BicycleParams())
        assert tuple(pts[-1, 1:]) == (s.x, s.y, s.heading)

    @settings(max_examples=25)
    @given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-3, 3), st.floats(0, 15),
           st.floats(-0.5, 0.5), st.floats(-4, 2))
    def test_exact_on_random_states(self, x, y, h, v, d, acc):
        a = AgentState("v", "vehicle", EgoState(x, y, h, v), 4, 2, steer=d, accel=acc)
        pts = predict_rollout([a], 1.0, 0.05).agents[0].modes[0].points
        s = a.state
        for k in range(20):
            s = bicycle_step(s, ControlInput(d, acc), 0.05)
            assert tuple(pts[k, 1:]) == (s.x, s.y, s.heading)

    def test_pedestrian_crossing(self):
        a = AgentState("p", "pedestrian", EgoState(0, 0, math.pi / 2, 1.5), 0.6, 0.6)
        pts = predict_rollout([a], 2.0, 0.05).agents[0].modes[0].points
        assert pts[-1, 2] == pytest.approx(3.0)
        assert pts[-1, 1] == pytest.approx(0.0, abs=1e-12)

    def test_horizon_limit(self):
        with pytest.raises(ValueError):
            predict_rollout([], 3.0)


class TestInflate:
    def setup_method(self):
        a = AgentState("v", "vehicle", EgoState(0, 0, 0, 5), 4, 2)
        self.ts = predict_rollout([a], 2.0, 0.05)

    def test_terminal(self):
        ext = inflate(self.ts, 2.0).agents[0].half_extents
        assert ext[-1] == pytest.approx((4.0, 2.0))

    def test_identity(self):
        ext = inflate(self.ts, 1.0, 1.0, 1.0).agents[0].half_extents
        assert np.array_equal(ext, self.ts.agents[0].half_extents)

    def test_mid_horizon(self):
        ext = inflate(self.ts, 2.0).agents[0].half_extents
        assert ext[19] == pytest.approx((3.0, 1.5))

    def test_monotone(self):
        lo = inflate(self.ts, 1.5).agents[0].half_extents
        hi = inflate(self.ts, 2.0).agents[0].half_extents
        assert np.all(np.diff(hi[:, 0]) > 0)
        assert np.all(hi >= lo)

    def test_factor_below_one(self):
        with pytest.raises(ValueError):
            inflate(self.ts, 0.9)


def test_probabilities_normalized():
    pts = np.zeros((5, 4))
    f = AgentForecast("a", "vehicle", (0, 0, 0), [Mode(2.0, pts), Mode(6.0, pts)], np.ones((5, 2)))
    assert sum(m.probability for m in f.modes) == pytest.approx(1.0, abs=1e-12)
    assert f.best_mode().probability == pytest.approx(0.75)
    again = inflate(TrajectorySet([f]), 2.0)
    assert sum(m.probability for m in again.agents[0].modes) == pytest.approx(1.0, abs=1e-6)


def test_mode_count_limit():
    pts = np.zeros((3, 4))
    with pytest.raises(ValueError):
        AgentForecast("a", "vehicle", (0, 0, 0), [Mode(1.0, pts)] * 7, np.ones((3, 2)))


def test_serialization_records():
    text = dumps_trajectory_set(predict_cv([history(1.0, 0.0)], 4, 0.1))
    recs = [json.loads(line) for line in text.splitlines()]
    assert recs[0]["type"] == "forecast" and len(recs[0]["points"]) == 4
