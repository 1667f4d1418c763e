"""Rule-based planner: cosine detours, IDM target speed, forecast gating and PID steering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleDetourError
from .geometry import (
    Box,
    box_corners,
    boxes_overlap,
    cumulative_length,
    project_onto_polyline,
    segment_crosses_polyline,
)
from .mapkit import Route, VectorMap, route_room
from .models import (
    BicycleParams,
    ControlInput,
    IdmParams,
    LongitudinalParams,
    PidGains,
    PidState,
    idm_accel,
    longitudinal_control,
    pedals_to_accel,
    pid_steer,
)
from .predict import AgentState, inflate, predict_rollout


@dataclass(frozen=True)
class RulePlannerConfig:
    speed_cap_ratio: float = 0.72
    clearance: float = 0.5
    ramp_length: float = 12.0
    lookahead_min: float = 3.0
    lookahead_time: float = 0.5
    reaction_time: float = 0.5  # converts an IDM acceleration into a target speed
    leader_range: float = 60.0
    leader_margin: float = 0.3
    detour_range: float = 60.0
    hazard_speed: float = 2.0  # moving actors slower than this are detoured around
    hazard_sweep: float = 6.0  # seconds of motion swept into a slow hazard's footprint
    forecast_horizon: float = 2.0
    forecast_dt: float = 0.05
    vehicle_inflation: float = 2.0
    pedestrian_inflation: float = 2.0
    ego_inflation: float = 1.3
    stop_sign_radius: float = 3.0
    idm: IdmParams = IdmParams()
    pid: PidGains = PidGains()
    longitudinal: LongitudinalParams = LongitudinalParams()
    bicycle: BicycleParams = BicycleParams()


@dataclass
class Detour:
    obstacle_ids: tuple
    start_s: float
    end_s: float
    offset: float


@dataclass
class RulePlannerState:
    detours: list = field(default_factory=list)
    pid: PidState = field(default_factory=PidState)
    last_target: float = 0.0
    cleared_stop_signs: set = field(default_factory=set)
    blocked: bool = False  # infeasible detour ahead


def _frenet(points, path_pts, path_s):
    out = np.empty((len(points), 2))
    for i, p in enumerate(points):
        s, lat, _, _ = project_onto_polyline(p, path_pts, path_s)
        out[i] = s, lat
    return out


def cosine_profile(s, start, end, peak, ramp):
    """Offset ``peak*(1-cos(pi*u))/2`` ramping in before ``start`` and out after ``end``."""
    s = np.asarray(s, dtype=float)
    u_in = np.clip((s - (start - ramp)) / ramp, 0.0, 1.0)
    u_out = np.clip(((end + ramp) - s) / ramp, 0.0, 1.0)
    u = np.minimum(u_in, u_out)
    value = peak * 0.5 * (1.0 - np.cos(np.pi * u))
    slope_in = np.where((u_in > 0) & (u_in < 1) & (u_in <= u_out), 1.0, 0.0)
    slope_out = np.where((u_out > 0) & (u_out < 1) & (u_out < u_in), -1.0, 0.0)
    slope = peak * 0.5 * np.pi / ramp * np.sin(np.pi * u) * (slope_in + slope_out)
    return value, slope


def apply_offsets(points, s, offsets, slopes):
    """Shift a polyline laterally, keeping headings consistent with the shift."""
    pts = np.asarray(points, dtype=float)
    h = pts[:, 2]
    kappa = np.gradient(np.unwrap(h), s) if len(s) > 1 else np.zeros(1)
    out = pts.copy()
    out[:, 0] = pts[:, 0] - offsets * np.sin(h)
    out[:, 1] = pts[:, 1] + offsets * np.cos(h)
    out[:, 2] = h + np.arctan2(slopes, 1.0 - kappa * offsets)
    return out


def plan_detour(footprint_sl, room_left, room_right, ego_half_width, clearance):
    """Pick the smaller-magnitude lateral offset that clears ``footprint_sl``.

    ``footprint_sl`` is an ``(n, 2)`` array of (s, lateral) obstacle points.
    Returns 0.0 when the obstacle already misses the corridor. Raises
    :class:`InfeasibleDetourError` when neither side has room.
    """
    lo, hi = float(footprint_sl[:, 1].min()), float(footprint_sl[:, 1].max())
    reach = ego_half_width + clearance
    if lo >= reach or hi <= -reach:
        return 0.0
    left = hi + reach
    right = lo - reach
    options = []
    if left + ego_half_width <= room_left + 1e-9:
        options.append(left)
    if -right + ego_half_width <= room_right + 1e-9:
        options.append(right)
    if not options:
        raise InfeasibleDetourError(
            f"need offset {left:.2f} (left room {room_left:.2f}) or {right:.2f} "
            f"(right room {room_right:.2f})")
    return min(options, key=lambda o: (abs(o), -o))


def cosine_detour(points, footprint, clearance: float = 0.5, ego_half_width: float = 1.0,
                  ego_half_length: float = 2.25, ramp_length: float = 12.0,
                  room_left=None, room_right=None):
    """Offset a route slice around an obstacle footprint with cosine ramps.

    ``points`` is an ``(n, 3)`` slice (x, y, heading); ``footprint`` is an
    ``(m, 2)`` array of obstacle outline points in world coordinates. The
    slice is returned unchanged when the obstacle misses the corridor.
    """
    if clearance <= 0:
        raise ValueError("clearance must be > 0")
    pts = np.asarray(points, dtype=float)
    s = cumulative_length(pts)
    sl = _frenet(np.asarray(footprint, dtype=float), pts, s)
    n = len(pts)
    rl = np.full(n, np.inf) if room_left is None else np.broadcast_to(room_left, (n,))
    rr = np.full(n, np.inf) if room_right is None else np.broadcast_to(room_right, (n,))
    pad = ego_half_length + clearance
    start, end = float(sl[:, 0].min()) - pad, float(sl[:, 0].max()) + pad
    zone = (s >= start - ramp_length) & (s <= end + ramp_length)
    offset = plan_detour(sl, float(rl[zone].min()) if zone.any() else np.inf,
                         float(rr[zone].min()) if zone.any() else np.inf,
                         ego_half_width, clearance)
    if offset == 0.0:
        return pts.copy()
    if start - ramp_length < s[0] - 1e-9 or end + ramp_length > s[-1] + 1e-9:
        raise InfeasibleDetourError("slice too short to ramp in and out around the obstacle")
    value, slope = cosine_profile(s, start, end, offset, ramp_length)
    return apply_offsets(pts, s, value, slope)


class RulePlanner:
    """Privileged rule-based planner; one instance per episode."""

    name = "rule"

    def __init__(self, vmap: VectorMap, route: Route, config: RulePlannerConfig = RulePlannerConfig(),
                 dt: float = 0.05):
        self.map = vmap
        self.route = route
        self.config = config
        self.dt = dt
        self.state = RulePlannerState()
        self.room_left, self.room_right = route_room(vmap, route)
        self.diagnostics = {}

    # -- detours -------------------------------------------------------------
    def _is_detour_obstacle(self, actor) -> bool:
        if actor.kind == "pedestrian":
            return False
        if actor.behavior == "static":
            return True
        return actor.kind == "vehicle" and actor.behavior == "scripted-path" \
            and actor.state.v < self.config.hazard_speed

    def _footprint(self, actor):
        corners = box_corners(actor.box())
        if actor.state.v <= 0.0 or actor.behavior == "static":
            return corners
        shift = actor.state.v * self.config.hazard_sweep
        d = np.array([math.cos(actor.state.heading), math.sin(actor.state.heading)]) * shift
        return np.vstack([corners, corners + d])

    def driving_path(self, obs):
        """Route with cosine detours around relevant obstacles; ``(points, s, detours)``.

        Raises :class:`InfeasibleDetourError` when an obstacle cannot be passed.
        """
        cfg = self.config
        route = self.route
        ego_s = obs.progress
        ego_hw = 0.5 * obs.ego_width
        pad = 0.5 * obs.ego_length + cfg.clearance
        items = []
        for a in obs.actors:
            if not self._is_detour_obstacle(a):
                continue
            if np.hypot(a.state.x - obs.ego.x, a.state.y - obs.ego.y) > cfg.detour_range + 20.0:
                continue
            sl = _frenet(self._footprint(a), route.points, route.s)
            s_lo, s_hi = sl[:, 0].min(), sl[:, 0].max()
            if s_hi + pad + cfg.ramp_length < ego_s - 1.0 or s_lo - ego_s > cfg.detour_range:
                continue
            reach = ego_hw + cfg.clearance
            if sl[:, 1].min() >= reach or sl[:, 1].max() <= -reach:
                continue
            items.append((s_lo, s_hi, a.id, sl))
        items.sort(key=lambda t: t[0])
        # merge obstacles whose detour zones touch
        groups = []
        for s_lo, s_hi, aid, sl in items:
            if groups and s_lo - pad - cfg.ramp_length <= groups[-1][1] + pad + cfg.ramp_length:
                g = groups[-1]
                groups[-1] = (g[0], max(g[1], s_hi), g[2] + (aid,), np.vstack([g[3], sl]))
            else:
                groups.append((s_lo, s_hi, (aid,), sl))
        offsets = np.zeros(len(route.s))
        slopes = np.zeros(len(route.s))
        detours = []
        for s_lo, s_hi, ids, sl in groups:
            start, end = s_lo - pad, s_hi + pad
            zone = (route.s >= start - cfg.ramp_length) & (route.s <= end + cfg.ramp_length)
            if not zone.any():
                zone = np.abs(route.s - 0.5 * (start + end)) <= 1.0
            d = plan_detour(sl, float(self.room_left[zone].min()), float(self.room_right[zone].min()),
                            ego_hw, cfg.clearance)
            value, slope = cosine_profile(route.s, start, end, d, cfg.ramp_length)
            offsets += value
            slopes += slope
            detours.append(Detour(ids, start, end, d))
        if not detours:
            return route.points, route.s, detours
        pts = apply_offsets(route.points, route.s, offsets, slopes)
        return pts, cumulative_length(pts), detours

    # -- speed ---------------------------------------------------------------
    def _idm_speed(self, v, gap, lead_v, cap):
        cfg = self.config
        params = IdmParams(max(cap, 0.1), cfg.idm.time_headway, cfg.idm.min_gap,
                           cfg.idm.max_accel, cfg.idm.comfort_decel, cfg.idm.exponent)
        return max(0.0, v + cfg.reaction_time * idm_accel(v, gap, lead_v, params))

    def target_speed(self, obs, path_pts, path_s, ego_i, diag=None) -> float:
        cfg = self.config
        ego = obs.ego
        cap = cfg.speed_cap_ratio * obs.speed_limit
        ego_s, _, _, _ = project_onto_polyline((ego.x, ego.y), path_pts, path_s,
                                               max(0, ego_i - 20), ego_i + 40)
        half_len = 0.5 * obs.ego_length
        candidates = [cap]
        reasons = []
        hi = int(np.searchsorted(path_s, ego_s + cfg.leader_range))
        lo = max(0, int(np.searchsorted(path_s, ego_s)) - 1)
        # leaders in the corridor
        for a in obs.actors:
            if np.hypot(a.state.x - ego.x, a.state.y - ego.y) > cfg.leader_range + 10.0:
                continue
            corners = box_corners(a.box())
            sl = np.array([project_onto_polyline(c, path_pts, path_s, lo, hi)[:2] for c in corners])
            reach = 0.5 * obs.ego_width + cfg.leader_margin
            if sl[:, 1].min() >= reach or sl[:, 1].max() <= -reach:
                continue
            gap = sl[:, 0].min() - ego_s - half_len
            if sl[:, 0].max() < ego_s or gap > cfg.leader_range:
                continue
            j = min(int(np.searchsorted(path_s, sl[:, 0].min())), len(path_pts) - 1)
            lead_v = max(0.0, a.state.v * math.cos(a.state.heading - path_pts[j, 2]))
            candidates.append(self._idm_speed(ego.v, gap, lead_v, cap))
            reasons.append(("leader", a.id))
        # lights and stop signs
        path_xy = path_pts[:, :2]
        for light in obs.lights:
            if light.kind == "traffic-light" and light.state not in ("red", "yellow"):
                continue
            if light.kind == "stop-sign" and light.id in self.state.cleared_stop_signs:
                continue
            seg = segment_crosses_polyline(light.stop_line[0], light.stop_line[1], path_xy, lo, hi)
            if seg is None or math.cos(path_pts[seg, 2] - light.heading) <= 0.0:
                continue
            s_line = float(path_s[seg])
            gap = s_line - ego_s - half_len
            if light.kind == "stop-sign" and gap < cfg.stop_sign_radius \
                    and ego.v < 0.1:
                self.state.cleared_stop_signs.add(light.id)
                continue
            if gap < -half_len:
                continue
            candidates.append(self._idm_speed(ego.v, max(gap, 1e-3), 0.0, cap))
            reasons.append((light.kind, light.id))
        v_t = min(candidates)
        v_t = self._forecast_gate(obs, path_pts, path_s, ego_s, v_t, cap, reasons)
        if diag is not None:
            diag["reasons"] = reasons
        return min(v_t, cap)

    def _forecast_gate(self, obs, path_pts, path_s, ego_s, v_t, cap, reasons):
        cfg = self.config
        steps = int(round(cfg.forecast_horizon / cfg.forecast_dt))
        t = cfg.forecast_dt * np.arange(1, steps + 1)
        ego = obs.ego
        s_fut = np.minimum(ego_s + v_t * t, path_s[-1])
        ex = np.interp(s_fut, path_s, path_pts[:, 0])
        ey = np.interp(s_fut, path_s, path_pts[:, 1])
        eh = np.interp(s_fut, path_s, np.unwrap(path_pts[:, 2]))
        ego_scale = 1.0 + (cfg.ego_inflation - 1.0) * t / t[-1]
        near = [a for a in obs.actors
                if np.hypot(a.state.x - ego.x, a.state.y - ego.y)
                < v_t * cfg.forecast_horizon + a.state.v * cfg.forecast_horizon + 15.0]
        if not near:
            return v_t
        # obstacles handled by detours are forecast without inflation
        agents = [AgentState(a.id, "static" if self._is_detour_obstacle(a) else a.kind, a.state,
                             a.length, a.width) for a in near]
        forecast = inflate(predict_rollout(agents, cfg.forecast_horizon, cfg.forecast_dt, cfg.bicycle),
                           cfg.vehicle_inflation, cfg.pedestrian_inflation, cfg.ego_inflation)
        for a, fc in zip(near, forecast.agents):
            pts = fc.modes[0].points
            reach = 0.5 * math.hypot(obs.ego_length, obs.ego_width) * cfg.ego_inflation
            for k in range(steps):
                other = Box(pts[k, 1], pts[k, 2], pts[k, 3], 2 * fc.half_extents[k, 0],
                            2 * fc.half_extents[k, 1])
                if math.hypot(other.x - ex[k], other.y - ey[k]) > reach + math.hypot(
                        other.length, other.width) * 0.5:
                    continue
                mine = Box(ex[k], ey[k], eh[k], obs.ego_length * ego_scale[k],
                           obs.ego_width * ego_scale[k])
                if not boxes_overlap(mine, other):
                    continue
                if a.kind == "vehicle" and not self._is_detour_obstacle(a):
                    reasons.append(("forecast-vehicle", a.id))
                    return 0.0
                # pedestrians and parked obstacles: fresh IDM query with the actor as leader
                s_a, _, _, _ = project_onto_polyline((a.state.x, a.state.y), path_pts, path_s)
                gap = s_a - ego_s - 0.5 * obs.ego_length - 0.5 * max(a.length, a.width)
                if s_a > ego_s:
                    v_t = min(v_t, self._idm_speed(ego.v, max(gap, 1e-3), 0.0, cap))
                    reasons.append(("forecast-" + a.kind, a.id))
                break
        return v_t

    # -- control -------------------------------------------------------------
    def plan(self, obs) -> ControlInput:
        cfg = self.config
        diag = {}
        try:
            path_pts, path_s, detours = self.driving_path(obs)
        except InfeasibleDetourError as exc:
            self.state.blocked = True
            self.state.last_target = 0.0
            self.diagnostics = {"infeasible_detour": str(exc)}
            return ControlInput(0.0, cfg.bicycle.accel_min)
        self.state.blocked = False
        self.state.detours = detours
        ego = obs.ego
        i = obs.route_index
        s_ego, _, seg, _ = project_onto_polyline((ego.x, ego.y), path_pts, path_s,
                                                 max(0, i - 20), i + 40)
        v_t = self.target_speed(obs, path_pts, path_s, seg, diag)
        self.state.last_target = v_t
        lookahead = max(cfg.lookahead_min, cfg.lookahead_time * ego.v)
        j = int(np.searchsorted(path_s, s_ego + lookahead, side="right"))
        j = min(j, len(path_pts) - 2)
        aim = path_pts[j:j + 2, :2].mean(axis=0) if j + 1 < len(path_pts) else path_pts[-1, :2]
        if np.hypot(*(aim - (ego.x, ego.y))) < 0.5:
            # past the route end: extrapolate along the final heading
            h = path_pts[-1, 2]
            aim = path_pts[-1, :2] + lookahead * np.array([math.cos(h), math.sin(h)])
        steer = pid_steer(ego, aim, cfg.pid, self.dt, self.state.pid, cfg.bicycle.max_steer)
        accel = pedals_to_accel(longitudinal_control(ego.v, v_t, cfg.longitudinal), cfg.longitudinal)
        self.diagnostics = {"target_speed": v_t,
                            "detours": len(detours),
                            "reasons": [f"{k}:{v}" for k, v in diag.get("reasons", [])]}
        return ControlInput(steer, accel)

    __call__ = plan
