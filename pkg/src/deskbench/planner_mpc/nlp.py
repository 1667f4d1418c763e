"""Single-shooting transcription of the receding-horizon NLP.

Decision variables are ``U = [delta_0, a_0, ..., delta_{N-1}, a_{N-1}]``.
States are rolled out through the unclamped forward-Euler bicycle update,
so ``X`` always reproduces ``U`` exactly. Every objective term is a squared
residual, which lets the solver use Gauss-Newton curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..geometry import project_onto_polyline
from ..models import BicycleParams, EgoState, euler_update


@dataclass(frozen=True)
class MpcParams:
    horizon: int = 20
    dt: float = 0.1
    terminal_weight: float = 1.0  # C_T
    steer_rate_weight: float = 10.0  # lambda_delta, rad^-2
    dynamic_weight: float = 100.0  # lambda_dyn
    safe_distance: float = 2.0  # d_safe, static points
    soft_distance: float = 1.0  # d_safe_soft
    soft_weight: float = 100.0
    waypoint_tolerance: float = 2.0  # d_tol
    dynamic_margin: float = 0.5
    dynamic_cost: str = "hinge"  # hinge | exp
    multimodal: bool = False  # probability-weighted cost over all modes
    low_probability: float = 0.1  # modes below this feed the soft set when multimodal
    road_edges: bool = False
    bicycle: BicycleParams = BicycleParams()
    eps_g: float = 1e-4
    eps_kkt: float = 1e-3
    max_outer: int = 200
    max_inner: int = 50
    rho_init: float = 10.0
    rho_max: float = 1e8

    def __post_init__(self):
        if self.horizon < 2:
            raise ConfigError("MPC horizon must be >= 2")
        if self.dt <= 0:
            raise ConfigError("MPC dt must be > 0")
        for name in ("terminal_weight", "steer_rate_weight", "dynamic_weight", "soft_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("safe_distance", "soft_distance", "waypoint_tolerance", "eps_g", "eps_kkt"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.dynamic_cost not in ("hinge", "exp"):
            raise ConfigError(f"unknown dynamic cost {self.dynamic_cost!r}")


@dataclass
class NlpProblem:
    x0: np.ndarray  # (4,)
    p_dest: np.ndarray  # (2,)
    wp0: np.ndarray  # (2,) reference waypoint for p_0
    route_xy: np.ndarray  # (r, 2) polyline whose distance bounds p_{N-1}
    statics: np.ndarray  # (N, M, 2)
    static_mask: np.ndarray  # (N, M)
    soft: np.ndarray  # (N, S, 2)
    soft_mask: np.ndarray  # (N, S)
    dyn: np.ndarray  # (N, A, 2) predicted agent positions
    dyn_radius: np.ndarray  # (N, A) r_dyn, zero where absent
    dyn_weight: np.ndarray  # (A,) mode probability weights
    params: MpcParams

    def __post_init__(self):
        n = self.params.horizon
        self.x0 = np.asarray(self.x0, dtype=float)
        if not np.all(np.isfinite(self.x0)):
            raise ConfigError("initial state must be finite")
        for name in ("statics", "soft", "dyn"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise ConfigError(f"{name} has {arr.shape[0]} time slices, expected {n}")

    @property
    def n_controls(self) -> int:
        return 2 * self.params.horizon

    def lower(self) -> np.ndarray:
        b = self.params.bicycle
        return np.tile([-b.max_steer, b.accel_min], self.params.horizon)

    def upper(self) -> np.ndarray:
        b = self.params.bicycle
        return np.tile([b.max_steer, b.accel_max], self.params.horizon)

    def translated(self, offset) -> "NlpProblem":
        d = np.asarray(offset, dtype=float)
        x0 = self.x0.copy()
        x0[:2] += d
        return NlpProblem(x0, self.p_dest + d, self.wp0 + d, self.route_xy + d,
                          self.statics + d, self.static_mask, self.soft + d, self.soft_mask,
                          self.dyn + d, self.dyn_radius, self.dyn_weight, self.params)


# -- rollout -----------------------------------------------------------------

def rollout(problem: NlpProblem, U, sensitivities: bool = True):
    """States ``X`` (N+1, 4) and, optionally, ``dX/dU`` as (N+1, 4, 2N)."""
    p = problem.params
    n, dt, L = p.horizon, p.dt, p.bicycle.wheelbase
    U = np.asarray(U, dtype=float).reshape(n, 2)
    X = np.empty((n + 1, 4))
    X[0] = problem.x0
    S = np.zeros((n + 1, 4, 2 * n)) if sensitivities else None
    for k in range(n):
        x, y, h, v = X[k]
        d, a = U[k]
        X[k + 1] = euler_update(x, y, h, v, d, a, dt, L)
        if sensitivities:
            c, s, t = math.cos(h), math.sin(h), math.tan(d)
            A = np.array([[1.0, 0.0, -v * s * dt, c * dt],
                          [0.0, 1.0, v * c * dt, s * dt],
                          [0.0, 0.0, 1.0, t / L * dt],
                          [0.0, 0.0, 0.0, 1.0]])
            S[k + 1] = A @ S[k]
            S[k + 1, 2, 2 * k] += v * (1.0 + t * t) / L * dt
            S[k + 1, 3, 2 * k + 1] += dt
    return X, S


# -- terms ---------------------------------------------------------------------

def _point_to_polyline(p, poly):
    """Distance from ``p`` to a polyline and its gradient with respect to ``p``."""
    if len(poly) == 1:
        diff = p - poly[0]
    else:
        s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(poly, axis=0).T))])
        _, _, _, foot = project_onto_polyline(p, poly, s)
        diff = p - foot
    dist = float(np.hypot(*diff))
    grad = diff / dist if dist > 1e-12 else np.zeros(2)
    return dist, grad


def objective_residuals(problem: NlpProblem, U, X, S):
    """Residual vector ``r`` with ``J = r @ r`` and its Jacobian (None without ``S``)."""
    p = problem.params
    n = p.horizon
    m = 2 * n
    res, rows = [], []
    want = S is not None
    # terminal deviation from destination, at state index N-1
    w = math.sqrt(p.terminal_weight)
    res.append(w * (X[n - 1, :2] - problem.p_dest))
    if want:
        rows.append(w * S[n - 1, :2])
    # steering-rate smoothness
    w = math.sqrt(p.steer_rate_weight)
    idx = np.arange(n - 1)
    D = np.zeros((n - 1, m))
    D[idx, 2 * idx + 2] = w
    D[idx, 2 * idx] = -w
    steer = np.asarray(U, dtype=float).reshape(n, 2)[:, 0]
    res.append(w * np.diff(steer))
    if want:
        rows.append(D)
    # dynamic-agent collision cost, k = 0..N-1
    if problem.dyn.shape[1]:
        P = X[:n, None, :2]  # (N, 1, 2)
        diff = P - problem.dyn  # (N, A, 2)
        d2 = np.einsum("kai,kai->ka", diff, diff)
        r2 = problem.dyn_radius ** 2
        wa = np.sqrt(p.dynamic_weight * problem.dyn_weight)[None, :]
        if p.dynamic_cost == "hinge":
            h = np.maximum(0.0, r2 - d2)
            active = (h > 0.0) & (problem.dyn_radius > 0.0)
            val = np.where(active, wa * h, 0.0)
            dval = np.where(active, -2.0 * wa, 0.0)[..., None] * diff  # d val / d p
        else:
            safe_r2 = np.where(r2 > 0, r2, 1.0)
            e = np.exp(-d2 / safe_r2)
            present = problem.dyn_radius > 0.0
            val = np.where(present, wa * e, 0.0)
            dval = np.where(present, wa * e * (-2.0 / safe_r2), 0.0)[..., None] * diff
        res.append(val.ravel())
        if want:
            rows.append(np.einsum("kai,kij->kaj", dval, S[:n, :2]).reshape(-1, m))
    # soft obstacle penalty (pedestrians, low-probability modes)
    if problem.soft.shape[1]:
        P = X[:n, None, :2]
        diff = P - problem.soft
        dist = np.sqrt(np.einsum("ksi,ksi->ks", diff, diff))
        h = np.maximum(0.0, p.soft_distance - dist)
        active = (h > 0.0) & problem.soft_mask
        w = math.sqrt(p.soft_weight)
        res.append(np.where(active, w * h, 0.0).ravel())
        if want:
            unit = diff / np.where(dist > 1e-12, dist, 1.0)[..., None]
            dval = np.where(active, -w, 0.0)[..., None] * unit
            rows.append(np.einsum("ksi,kij->ksj", dval, S[:n, :2]).reshape(-1, m))
    return np.concatenate(res), (np.vstack(rows) if want else None)


def objective(problem: NlpProblem, U) -> float:
    X, _ = rollout(problem, U, sensitivities=False)
    r, _ = objective_residuals(problem, U, X, None)
    return float(r @ r)


def objective_and_gradient(problem: NlpProblem, U):
    X, S = rollout(problem, U)
    r, Jr = objective_residuals(problem, U, X, S)
    return float(r @ r), 2.0 * Jr.T @ r


def constraints(problem: NlpProblem, X, S):
    """Inequalities ``g(U) <= 0`` in distance units, with Jacobian (or None).

    Order: static points (k, i), waypoint tolerance at p_0 and p_{N-1},
    then speed bounds 0 <= v_k <= v_max for k = 1..N-1.
    """
    p = problem.params
    n = p.horizon
    m = 2 * n
    want = S is not None
    gs, rows = [], []
    if problem.statics.shape[1]:
        diff = X[:n, None, :2] - problem.statics
        dist = np.sqrt(np.einsum("kmi,kmi->km", diff, diff))
        mask = problem.static_mask
        g = np.where(mask, p.safe_distance - dist, -np.inf)
        gs.append(g[mask])
        if want:
            unit = diff / np.where(dist > 1e-12, dist, 1.0)[..., None]
            jac = -np.einsum("kmi,kij->kmj", unit, S[:n, :2])
            rows.append(jac[mask])
    d0, _ = _point_to_polyline(X[0, :2], problem.wp0[None, :])
    gs.append(np.array([d0 - p.waypoint_tolerance]))
    if want:
        rows.append(np.zeros((1, m)))
    dN, gradN = _point_to_polyline(X[n - 1, :2], problem.route_xy)
    gs.append(np.array([dN - p.waypoint_tolerance]))
    if want:
        rows.append((gradN @ S[n - 1, :2])[None, :])
    v = X[1:n, 3]
    gs.append(-v)
    gs.append(v - p.bicycle.max_speed)
    if want:
        rows.append(-S[1:n, 3])
        rows.append(S[1:n, 3])
    g = np.concatenate(gs)
    return g, (np.vstack(rows) if want else None)


def max_violation(problem: NlpProblem, U) -> float:
    X, _ = rollout(problem, U, sensitivities=False)
    g, _ = constraints(problem, X, None)
    return float(max(0.0, g.max())) if len(g) else 0.0


# -- construction ------------------------------------------------------------

def resample_prediction(points, dt: float, steps: int, origin=None):
    """Linear interpolation of a timed ``(n, 4)`` trajectory at ``k*dt``, k = 0..steps-1.

    ``origin`` supplies the t = 0 pose when the trajectory starts later.
    """
    pts = np.asarray(points, dtype=float)
    if origin is not None and pts[0, 0] > 0.0:
        pts = np.vstack([[0.0, origin[0], origin[1], origin[2]], pts])
    t = dt * np.arange(steps)
    if t[-1] > pts[-1, 0] + 1e-9:
        raise ConfigError(
            f"prediction covers {pts[-1, 0]:.2f} s, horizon needs {t[-1]:.2f} s")
    heading = np.unwrap(pts[:, 3])
    return np.column_stack([t, np.interp(t, pts[:, 0], pts[:, 1]),
                            np.interp(t, pts[:, 0], pts[:, 2]), np.interp(t, pts[:, 0], heading)])


def destination(route, s_ego: float, speed: float, params: MpcParams):
    """Route point ``speed * N * dt`` ahead of ``s_ego``, clamped to the route end."""
    x, y, _ = route.pose_at(s_ego + speed * params.horizon * params.dt)
    return np.array([x, y])


def build_nlp(ego: EgoState, route, predictions, statics, params: MpcParams = MpcParams(),
              soft=(), reference_speed: float | None = None, ego_radius: float = 2.462) -> NlpProblem:
    """Assemble the NLP for one planning cycle.

    ``statics`` is an ``(M, 2)`` array of hard obstacle points (the same at
    every step), ``soft`` an ``(S, 2)`` array of penalty-only points. Agents
    of kind ``pedestrian`` also join the soft set along their predicted path.
    ``reference_speed`` sets how far ahead ``p_dest`` lies; by default the
    current speed.
    """
    if route is None or len(route.points) < 2:
        raise ConfigError("MPC needs a route with at least two points")
    n = params.horizon
    s_ego, _, idx = route.project((ego.x, ego.y))
    v_ref = ego.v if reference_speed is None else reference_speed
    p_dest = destination(route, s_ego, v_ref, params)
    wx, wy, _ = route.pose_at(s_ego)
    reach = v_ref * n * params.dt + 30.0
    lo = max(0, int(np.searchsorted(route.s, s_ego - 10.0)) - 1)
    hi = int(np.searchsorted(route.s, s_ego + reach)) + 1
    route_xy = route.points[lo:hi + 1, :2]

    st = np.asarray(statics, dtype=float).reshape(-1, 2)
    statics_k = np.broadcast_to(st, (n,) + st.shape).copy()
    static_mask = np.ones(statics_k.shape[:2], dtype=bool)

    dyn, radius, weights, soft_tracks = [], [], [], []
    agents = predictions.agents if predictions is not None else []
    for agent in agents:
        modes = agent.modes if params.multimodal else [agent.best_mode()]
        for mode in modes:
            track = resample_prediction(mode.points, params.dt, n, agent.origin)
            ext = agent.half_extents
            r_agent = np.hypot(ext[:, 0], ext[:, 1])
            r_k = np.interp(track[:, 0], mode.points[:, 0], r_agent)
            if params.multimodal and mode.probability < params.low_probability:
                soft_tracks.append(track[:, 1:3])
                continue
            dyn.append(track[:, 1:3])
            radius.append(r_k + ego_radius + params.dynamic_margin)
            weights.append(mode.probability if params.multimodal else 1.0)
            if agent.kind == "pedestrian":
                soft_tracks.append(track[:, 1:3])
    dyn_arr = np.stack(dyn, axis=1) if dyn else np.zeros((n, 0, 2))
    rad_arr = np.stack(radius, axis=1) if radius else np.zeros((n, 0))
    sp = np.asarray(soft, dtype=float).reshape(-1, 2)
    soft_k = [np.broadcast_to(sp, (n,) + sp.shape)] + [t[:, None, :] for t in soft_tracks]
    soft_arr = np.concatenate(soft_k, axis=1) if soft_k else np.zeros((n, 0, 2))
    soft_mask = np.ones(soft_arr.shape[:2], dtype=bool)
    return NlpProblem(np.array(ego.as_array(), dtype=float), p_dest, np.array([wx, wy]), route_xy,
                      statics_k, static_mask, soft_arr, soft_mask, dyn_arr, rad_arr,
                      np.asarray(weights, dtype=float), params)
