"""Receding-horizon planner: observation -> NLP -> first control of the optimum."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from ..geometry import box_outline_points, segment_crosses_polyline
from ..mapkit import Route, VectorMap, route_room
from ..models import ControlInput
from ..predict import HISTORY_DT, AgentHistory, predict_cv
from .nlp import MpcParams, build_nlp, max_violation, objective
from .solver import MpcSolution, solve


@dataclass(frozen=True)
class MpcPlannerConfig:
    params: MpcParams = MpcParams()
    speed_cap_ratio: float = 0.72  # p_dest lies cap * N * dt ahead
    static_spacing: float = 0.5  # static boxes and stop lines become points this far apart
    relevance_range: float = 60.0
    history_samples: int = 11  # 1 s at 10 Hz
    prediction_steps: int = 80
    route_extension: float = 30.0  # straight run-out past the goal so p_dest never stalls on it
    stop_sign_radius: float = 3.0
    road_edge_spacing: float = 2.0


@dataclass
class MpcPlannerState:
    warm: np.ndarray | None = None  # previous U*, (N, 2)
    multipliers: np.ndarray | None = None  # reused while the constraint count is unchanged
    held: ControlInput | None = None
    histories: dict = field(default_factory=dict)  # actor id -> deque of (t, x, y, heading)
    cleared_stop_signs: set = field(default_factory=set)
    last_sample: float = -math.inf


def extend_route(route: Route, length: float) -> Route:
    """``route`` plus a straight run-out along its final heading."""
    if length <= 0:
        return route
    x, y, h = route.points[-1]
    n = max(2, int(math.ceil(length / 0.5)))
    d = np.linspace(0.0, length, n + 1)[1:]
    tail = np.column_stack([x + d * math.cos(h), y + d * math.sin(h), np.full(n, h)])
    pts = np.vstack([route.points, tail])
    limits = np.concatenate([route.speed_limits, np.full(n, route.speed_limits[-1])])
    lanes = list(route.lane_ids) + [route.lane_ids[-1]] * n
    return Route.from_points(pts, limits, lanes)


class MpcPlanner:
    """Predict agents at constant velocity, then solve the NLP each MPC period.

    The solution's first control is held for ``params.dt`` (two sim steps at
    the defaults). Warm starts shift the previous optimum by one MPC step,
    falling back to the unshifted optimum when that scores better.
    """

    name = "mpc"

    def __init__(self, vmap: VectorMap, route: Route, config: MpcPlannerConfig = MpcPlannerConfig(),
                 dt: float = 0.05):
        self.map = vmap
        self.route = route
        self.config = config
        self.dt = dt
        self.interval = max(1, int(round(config.params.dt / dt)))
        self.plan_route = extend_route(route, config.route_extension)
        self.state = MpcPlannerState()
        self.last_diagnostics = None
        self.last_solution: MpcSolution | None = None
        self.room_left, self.room_right = route_room(vmap, route)
        self._edges = self._road_edges() if config.params.road_edges else None

    # -- inputs ----------------------------------------------------------------
    def _road_edges(self):
        h = self.route.points[:, 2]
        normal = np.column_stack([-np.sin(h), np.cos(h)])
        xy = self.route.points[:, :2]
        return np.vstack([xy + self.room_left[:, None] * normal, xy - self.room_right[:, None] * normal])

    def _record_history(self, obs):
        st = self.state
        if obs.time - st.last_sample < HISTORY_DT - 1e-9:
            return
        st.last_sample = obs.time
        for a in obs.actors:
            if a.behavior == "static":
                continue
            buf = st.histories.setdefault(a.id, deque(maxlen=self.config.history_samples))
            buf.append((obs.time, a.state.x, a.state.y, a.state.heading))

    def _near(self, obs, x, y) -> bool:
        return math.hypot(x - obs.ego.x, y - obs.ego.y) <= self.config.relevance_range

    def static_points(self, obs) -> np.ndarray:
        """Hard obstacle points within reach of the horizon.

        Static boxes are sampled along their outline; red-light and uncleared
        stop-sign lines along their length; road edges when enabled.
        """
        cfg = self.config
        p = cfg.params
        pts = []
        for a in obs.actors:
            if (a.behavior == "static" or a.kind == "static") and self._near(obs, a.state.x, a.state.y):
                pts.append(box_outline_points(a.box(), cfg.static_spacing))
        pts.extend(self._stop_lines(obs))
        if self._edges is not None:
            pts.append(self._edges[::max(1, int(round(cfg.road_edge_spacing / 0.5)))])
        if not pts:
            return np.zeros((0, 2))
        pts = np.vstack(pts)
        speed = max(obs.ego.v, cfg.speed_cap_ratio * obs.speed_limit)
        reach = speed * p.horizon * p.dt + p.safe_distance + 5.0
        return pts[np.hypot(*(pts - (obs.ego.x, obs.ego.y)).T) <= reach]

    def _stop_lines(self, obs):
        cfg = self.config
        ego = obs.ego
        route = self.route
        i = obs.route_index
        hi = int(np.searchsorted(route.s, obs.progress + cfg.relevance_range))
        lo = max(0, i - 2)
        half_len = 0.5 * obs.ego_length
        braking = ego.v ** 2 / (2.0 * -cfg.params.bicycle.accel_min)
        out = []
        for light in obs.lights:
            if light.kind == "traffic-light" and light.state not in ("red", "yellow"):
                continue
            if light.kind == "stop-sign" and light.id in self.state.cleared_stop_signs:
                continue
            seg = segment_crosses_polyline(light.stop_line[0], light.stop_line[1],
                                           route.points[:, :2], lo, hi)
            if seg is None or math.cos(route.points[seg, 2] - light.heading) <= 0.0:
                continue
            gap = float(route.s[seg]) - obs.progress - half_len
            if light.kind == "stop-sign" and gap < cfg.stop_sign_radius + cfg.params.safe_distance \
                    and ego.v < 0.1:
                self.state.cleared_stop_signs.add(light.id)
                continue
            if gap < braking:
                continue  # committed: stopping before the line is no longer possible
            out.append(self._wall(seg))
        return out

    def _wall(self, i):
        """Points across the whole drivable width at route index ``i``, padded by d_safe.

        A stop line only spans its lane; as bare points the optimizer would
        simply steer around its end.
        """
        cfg = self.config
        x, y, h = self.route.points[i]
        pad = cfg.params.safe_distance
        offsets = np.arange(-self.room_right[i] - pad, self.room_left[i] + pad + 1e-9, cfg.static_spacing)
        return np.column_stack([x - offsets * math.sin(h), y + offsets * math.cos(h)])

    def predictions(self, obs):
        cfg = self.config
        hist = []
        for a in obs.actors:
            if a.behavior == "static" or not self._near(obs, a.state.x, a.state.y):
                continue
            buf = self.state.histories.get(a.id)
            if not buf:
                continue
            hist.append(AgentHistory(a.id, a.kind, np.array(buf), a.length, a.width))
        return predict_cv(hist, cfg.prediction_steps, HISTORY_DT)

    # -- control -------------------------------------------------------------------
    def _fallback(self) -> ControlInput:
        self.state.warm = None
        self.state.multipliers = None
        return ControlInput(0.0, self.config.params.bicycle.accel_min)

    @staticmethod
    def _warm_start(problem, previous):
        """Shifted previous optimum, or the unshifted one if it scores better.

        The shift suits a world that advanced one MPC step; when the world did
        not move (a repeated call), the previous optimum itself is the better
        start. Candidates are ranked by violation above ``eps_g``, then objective.
        """
        shifted = np.vstack([previous[1:], previous[-1:]]).ravel()
        eps = problem.params.eps_g

        def rank(U):
            return max(max_violation(problem, U) - eps, 0.0), objective(problem, U)

        return min((shifted, previous.ravel()), key=rank)

    def plan(self, obs) -> ControlInput:
        self._record_history(obs)
        st = self.state
        if st.held is not None and obs.step % self.interval != 0:
            self.last_diagnostics = None
            return st.held
        cfg = self.config
        p = cfg.params
        ego_radius = math.hypot(0.5 * obs.ego_length, 0.5 * obs.ego_width)
        problem = build_nlp(obs.ego, self.plan_route, self.predictions(obs), self.static_points(obs), p,
                            reference_speed=cfg.speed_cap_ratio * obs.speed_limit, ego_radius=ego_radius)
        warm = None
        if st.warm is not None:
            warm = self._warm_start(problem, st.warm)
        try:
            sol = solve(problem, warm, st.multipliers)
        except NumericError as exc:
            self.last_diagnostics = {"status": "numeric-error", "detail": str(exc)}
            st.held = self._fallback()
            return st.held
        self.last_solution = sol
        self.last_diagnostics = {
            "status": sol.status,
            "iterations": sol.iterations,
            "outer_iterations": sol.outer_iterations,
            "objective": sol.objective,
            "violation": sol.violation,
            "stationarity": sol.stationarity,
            "violation_trace": sol.violation_trace,
            "objective_trace": sol.objective_trace,
            "warm_start": warm is not None,
        }
        if sol.status == "infeasible":
            st.held = self._fallback()
            return st.held
        st.warm = sol.controls.copy()
        st.multipliers = sol.multipliers
        st.held = ControlInput(float(sol.controls[0, 0]), float(sol.controls[0, 1]))
        return st.held

    __call__ = plan

