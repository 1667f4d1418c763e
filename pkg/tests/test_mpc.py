import math

import numpy as np
import pytest

from deskbench.errors import ConfigError, NumericError
from deskbench.mapkit import Route, desk_map_path, extract_route, load_map
from deskbench.models import BicycleParams, EgoState, euler_update
from deskbench.planner_mpc import (
    MpcParams,
    MpcPlanner,
    build_nlp,
    max_violation,
    objective,
    objective_and_gradient,
    resample_prediction,
    rollout,
    solve,
)
from deskbench.predict import AgentHistory, predict_cv
from deskbench.sim import Actor, SimWorld
from oracles import canonical_problems, central_difference, crossing_predictions, grid_oracle, mpc_problem

LANE = "1:0:-1"


def plain_rollout(x0, U, dt=0.1, wheelbase=2.5):
    """Forward Euler on floats, independent of the solver's rollout."""
    x, y, h, v = x0
    out = [(x, y, h, v)]
    for d, a in U:
        x, y, h, v = (x + v * math.cos(h) * dt, y + v * math.sin(h) * dt,
                      h + v / wheelbase * math.tan(d) * dt, v + a * dt)
        out.append((x, y, h, v))
    return np.array(out)


def random_controls(problem, rng):
    lo, hi = problem.lower(), problem.upper()
    return lo + rng.random(len(lo)) * (hi - lo)


def standing_agent(x, y, length=4.5, width=2.0):
    samples = np.array([[-0.1, x, y, 0.0], [0.0, x, y, 0.0]])
    return predict_cv([AgentHistory("a", "vehicle", samples, length, width)], 80, 0.1)


@pytest.fixture(scope="module")
def solved():
    return {name: (p, solve(p)) for name, p in canonical_problems().items()}


class TestObjective:
    def test_empty_problem_terms(self):
        pr = mpc_problem()
        rng = np.random.default_rng(0)
        for _ in range(5):
            U = random_controls(pr, rng)
            X = plain_rollout(pr.x0, U.reshape(-1, 2))
            steer = U[0::2]
            expected = (np.sum((X[19, :2] - pr.p_dest) ** 2)
                        + 10.0 * np.sum(np.diff(steer) ** 2))
            assert objective(pr, U) == pytest.approx(expected, rel=1e-12)

    def test_far_agent_inactive(self):
        far = mpc_problem(predictions=standing_agent(10.0, 100.0))
        empty = mpc_problem()
        assert far.dyn_radius.max() < 10.0
        rng = np.random.default_rng(1)
        for _ in range(5):
            U = random_controls(far, rng)
            assert objective(far, U) == pytest.approx(objective(empty, U), rel=1e-14)

    def test_dynamic_hinge_value(self):
        pr = mpc_problem(predictions=standing_agent(12.0, 1.0))
        r = math.hypot(2.25, 1.0) + 2.462 + 0.5
        assert np.allclose(pr.dyn_radius, r)
        U = np.zeros(pr.n_controls)
        X = plain_rollout(pr.x0, U.reshape(-1, 2))
        d2 = np.sum((X[:20, :2] - (12.0, 1.0)) ** 2, axis=1)
        extra = 100.0 * np.sum(np.maximum(0.0, r * r - d2) ** 2)
        assert extra > 0
        assert objective(pr, U) - objective(mpc_problem(), U) == pytest.approx(extra, rel=1e-9)

    def test_destination_lookup(self):
        pr = mpc_problem()
        assert pr.p_dest == pytest.approx((20.0, 0.0))

    def test_gradient_matches_finite_differences(self):
        pr = canonical_problems()["crossing vehicle"]
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 10:
            U = random_controls(pr, rng)
            if max_violation(pr, U) > 0.0:
                continue
            _, g = objective_and_gradient(pr, U)
            fd = central_difference(lambda u: objective(pr, u), U)
            assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1.0)
            checked += 1


class TestSolve:
    @pytest.mark.parametrize("name", ["empty straight", "static obstacle", "crossing vehicle"])
    def test_grid_oracle(self, solved, name):
        pr, sol = solved[name]
        assert sol.status == "optimal"
        assert sol.violation <= 1e-4
        assert sol.objective <= grid_oracle(pr)

    @pytest.mark.parametrize("name", ["empty straight", "static obstacle", "crossing vehicle"])
    def test_bounds_and_dynamics(self, solved, name):
        pr, sol = solved[name]
        U = sol.controls.ravel()
        assert np.all(U >= pr.lower()) and np.all(U <= pr.upper())
        for k in range(pr.params.horizon):
            nxt = euler_update(*sol.states[k], *sol.controls[k], pr.params.dt, 2.5)
            assert tuple(sol.states[k + 1]) == tuple(nxt)

    @pytest.mark.parametrize("name", ["empty straight", "static obstacle", "crossing vehicle"])
    def test_violation_trace_monotone(self, solved, name):
        _, sol = solved[name]
        assert np.all(np.diff(sol.violation_trace) <= 0.0)

    def test_terminal_reaches_destination(self, solved):
        pr, sol = solved["empty straight"]
        assert np.hypot(*(sol.states[19, :2] - (20.0, 0.0))) <= 0.5

    def test_static_clearance(self, solved):
        pr, sol = solved["static obstacle"]
        assert grid_oracle(pr) < math.inf  # a constant-steer swerve is feasible
        dist = np.hypot(*(sol.states[:20, :2] - (10.0, 0.0)).T)
        assert dist.min() >= 3.0 - pr.params.eps_g

    def test_stationary_at_destination(self):
        pr = mpc_problem(ego=EgoState(0, 0, 0, 0), vref=0.0)
        sol = solve(pr)
        assert sol.status == "optimal"
        assert sol.objective <= 1e-6
        assert np.abs(sol.controls).max() <= 1e-3

    @pytest.mark.parametrize("offset", [(123.4, -56.7), (-1e3, 2e3)])
    def test_translation_invariance(self, offset):
        # an off-centre obstacle: a centred one has two mirror-image optima
        pr = mpc_problem([(10.0, 0.7)], MpcParams(safe_distance=3.0))
        sol = solve(pr)
        moved = solve(pr.translated(offset))
        assert sol.status == moved.status == "optimal"
        assert moved.objective == pytest.approx(sol.objective, abs=1e-6)
        assert np.abs(moved.controls - sol.controls).max() <= 1e-4

    def test_centred_obstacle_mirror_optima(self, solved):
        pr, sol = solved["static obstacle"]
        moved = solve(pr.translated((123.4, -56.7)))
        assert moved.objective == pytest.approx(sol.objective, abs=1e-6)
        same = np.abs(moved.controls - sol.controls).max()
        mirrored = np.abs(moved.controls * [-1, 1] - sol.controls).max()
        assert min(same, mirrored) <= 1e-4

    def test_random_problems_monotone(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            pr = mpc_problem([(rng.uniform(8, 16), rng.uniform(-1.5, 1.5))], MpcParams(safe_distance=3.0))
            sol = solve(pr)
            assert sol.status == "optimal"
            assert np.all(np.diff(sol.violation_trace) <= 0.0)

    def test_non_finite_raises(self):
        pr = mpc_problem(predictions=crossing_predictions())
        pr.dyn[:] = np.nan
        with pytest.raises(NumericError) as exc:
            solve(pr)
        assert exc.value.last_iterate is not None


class TestBuild:
    def test_resample_identity(self):
        t = 0.1 * np.arange(81)
        pts = np.column_stack([t, 3.0 * t, t ** 2, 0.1 * t])
        out = resample_prediction(pts, 0.05, 161)
        assert np.allclose(out[::2], pts)
        mid = 0.5 * (pts[:-1] + pts[1:])
        assert np.allclose(out[1::2], mid)

    def test_short_prediction(self):
        pts = np.column_stack([0.1 * np.arange(5), np.zeros((5, 3))])
        with pytest.raises(ConfigError):
            resample_prediction(pts, 0.1, 20)

    def test_empty_route(self):
        with pytest.raises(ConfigError):
            build_nlp(EgoState(0, 0, 0, 0), None, None, np.zeros((0, 2)))
        with pytest.raises(ConfigError):
            build_nlp(EgoState(0, 0, 0, 0), Route.from_points(np.zeros((1, 3)), 10.0), None,
                      np.zeros((0, 2)))

    @pytest.mark.parametrize("kw", [{"horizon": 1}, {"dt": 0.0}, {"steer_rate_weight": -1.0},
                                    {"safe_distance": 0.0}, {"eps_g": 0.0}, {"dynamic_cost": "log"}])
    def test_params_validation(self, kw):
        with pytest.raises(ConfigError):
            MpcParams(**kw)


@pytest.fixture(scope="module")
def straight():
    vmap = load_map(desk_map_path("straight"))
    return vmap, extract_route(vmap, (LANE, 10.0), (LANE, 210.0))


def world(straight, actors=(), v=0.0):
    vmap, route = straight
    x, y, h = route.points[0]
    return SimWorld(vmap, route, EgoState(x, y, h, v), list(actors), [])


class TestPlanner:
    def test_first_call_accelerates(self, straight):
        w = world(straight)
        u = MpcPlanner(*straight, dt=w.dt).plan(w.observe())
        assert u.accel > 0.0
        # the grid oracle agrees on the sign
        pr = mpc_problem(ego=EgoState(0, 0, 0, 0))
        b = BicycleParams()
        best = min(((objective(pr, np.tile([0.0, a], 20)), a)
                    for a in np.linspace(b.accel_min, b.accel_max, 21)
                    if max_violation(pr, np.tile([0.0, a], 20)) <= 1e-4))
        assert best[1] > 0.0

    def test_wall_brakes(self, straight):
        vmap, route = straight
        x, y, h = route.pose_at(6.0)
        wall = Actor("wall", "static", "static", EgoState(x, y, h, 0.0), 1.0, 30.0)
        w = world(straight, [wall], v=10.0)
        planner = MpcPlanner(vmap, route, dt=w.dt)
        u = planner.plan(w.observe())
        assert planner.last_diagnostics["status"] == "infeasible"
        assert u.steer == 0.0 and u.accel == BicycleParams().accel_min

    def test_control_held_between_solves(self, straight):
        w = world(straight)
        planner = MpcPlanner(*straight, dt=w.dt)
        u0 = planner.plan(w.observe())
        w.step(u0)
        assert planner.plan(w.observe()) == u0
        assert planner.last_diagnostics is None

    def test_warm_start_halves_iterations(self, straight):
        vmap, route = straight
        rng = np.random.default_rng(0)
        first, second = [], []
        for _ in range(20):
            x, y, h = route.pose_at(rng.uniform(12.0, 25.0))
            lat = rng.uniform(-1.0, 1.0)
            box = Actor("box", "static", "static",
                        EgoState(x - lat * math.sin(h), y + lat * math.cos(h), h, 0.0), 1.0, 1.0)
            w = world(straight, [box], v=8.0)
            planner = MpcPlanner(vmap, route, dt=w.dt)
            obs = w.observe()
            planner.plan(obs)
            first.append(planner.last_diagnostics["iterations"])
            planner.plan(obs)
            assert planner.last_diagnostics["warm_start"]
            second.append(planner.last_diagnostics["iterations"])
        assert np.median(second) <= 0.5 * np.median(first)

    def test_deterministic(self, straight):
        vmap, route = straight
        x, y, h = route.pose_at(15.0)
        box = Actor("box", "static", "static", EgoState(x, y, h, 0.0), 1.0, 1.0)
        outs = []
        for _ in range(2):
            w = world(straight, [box], v=8.0)
            planner = MpcPlanner(vmap, route, dt=w.dt)
            outs.append([planner.plan(w.observe()) for _ in range(1)][0])
        assert outs[0] == outs[1]
