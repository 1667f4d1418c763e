"""Stand-in trajectory predictors behind a multimodal interface.

The :class:`TrajectorySet` layout follows the motion-forecasting convention
(up to 6 modes per agent, each a fixed number of timed poses with a
probability), so a learned predictor can be dropped in later.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .models import BicycleParams, ControlInput, EgoState, bicycle_step

MAX_MODES = 6
HISTORY_SAMPLES = 11
HISTORY_DT = 0.1


@dataclass
class AgentHistory:
    id: str
    kind: str
    samples: np.ndarray  # (n, 4): t, x, y, heading; time-ordered
    length: float
    width: float

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if len(self.samples) == 0:
            raise ValueError(f"agent {self.id}: empty history")
        if np.any(np.diff(self.samples[:, 0]) <= 0):
            raise ValueError(f"agent {self.id}: history not strictly time-ordered")


@dataclass
class Mode:
    probability: float
    points: np.ndarray  # (steps, 4): t, x, y, heading


@dataclass
class AgentForecast:
    id: str
    kind: str
    origin: tuple  # (x, y, heading) at t = 0
    modes: list
    half_extents: np.ndarray  # (steps, 2): half length, half width

    def __post_init__(self):
        if not 1 <= len(self.modes) <= MAX_MODES:
            raise ValueError(f"agent {self.id}: {len(self.modes)} modes (1..{MAX_MODES} allowed)")
        total = sum(m.probability for m in self.modes)
        if total <= 0:
            raise ValueError(f"agent {self.id}: mode probabilities sum to {total}")
        for m in self.modes:
            m.probability = m.probability / total
        steps = {len(m.points) for m in self.modes}
        if len(steps) != 1 or len(self.half_extents) not in steps:
            raise ValueError(f"agent {self.id}: modes/extents disagree on step count")

    @property
    def steps(self) -> int:
        return len(self.modes[0].points)

    def best_mode(self) -> Mode:
        return max(self.modes, key=lambda m: m.probability)


@dataclass
class TrajectorySet:
    agents: list = field(default_factory=list)

    def by_id(self) -> dict:
        return {a.id: a for a in self.agents}


@dataclass
class AgentState:
    """Current privileged state of one agent, used for short rollouts."""

    id: str
    kind: str  # vehicle | pedestrian | static | ego
    state: EgoState
    length: float
    width: float
    steer: float = 0.0
    accel: float = 0.0


def predict_cv(histories, steps: int = 80, dt: float = 0.1,
               diagnostics: dict | None = None) -> TrajectorySet:
    """Constant-velocity forecast from the last two history samples."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if diagnostics is not None:
        diagnostics.setdefault("zero_velocity", [])
    t = dt * np.arange(1, steps + 1)
    agents = []
    for h in histories:
        last = h.samples[-1]
        if len(h.samples) < 2:
            vel = np.zeros(2)
            if diagnostics is not None:
                diagnostics["zero_velocity"].append(h.id)
        else:
            prev = h.samples[-2]
            vel = (last[1:3] - prev[1:3]) / (last[0] - prev[0])
        speed = float(np.hypot(*vel))
        heading = math.atan2(vel[1], vel[0]) if speed > 1e-3 else float(last[3])
        xy = last[1:3] + t[:, None] * vel
        pts = np.column_stack([t, xy, np.full(steps, heading)])
        ext = np.tile([0.5 * h.length, 0.5 * h.width], (steps, 1))
        agents.append(AgentForecast(h.id, h.kind, (float(last[1]), float(last[2]), float(last[3])),
                                    [Mode(1.0, pts)], ext))
    return TrajectorySet(agents)


def predict_rollout(agents, horizon: float = 2.0, dt: float = 0.05,
                    params: BicycleParams = BicycleParams()) -> TrajectorySet:
    """Short-horizon rollout: bicycle model for vehicles, straight lines otherwise."""
    if horizon > 2.0 + 1e-9:
        raise ValueError("rollout horizon is limited to 2 s")
    steps = int(round(horizon / dt))
    out = []
    for a in agents:
        pts = np.empty((steps, 4))
        st = a.state
        if a.kind == "vehicle":
            control = ControlInput(a.steer, a.accel)
            for k in range(steps):
                st = bicycle_step(st, control, dt, params)
                pts[k] = ((k + 1) * dt, st.x, st.y, st.heading)
        else:
            c, s = math.cos(st.heading), math.sin(st.heading)
            t = dt * np.arange(1, steps + 1)
            pts[:, 0] = t
            pts[:, 1] = st.x + st.v * c * t
            pts[:, 2] = st.y + st.v * s * t
            pts[:, 3] = st.heading
        ext = np.tile([0.5 * a.length, 0.5 * a.width], (steps, 1))
        origin = (a.state.x, a.state.y, a.state.heading)
        out.append(AgentForecast(a.id, a.kind, origin, [Mode(1.0, pts)], ext))
    return TrajectorySet(out)


def inflate(trajs: TrajectorySet, vehicle_factor: float = 2.0, pedestrian_factor: float = 2.0,
            ego_factor: float = 1.3) -> TrajectorySet:
    """Grow half-extents linearly in time up to a terminal factor.

    Static agents are never inflated.
    """
    for f in (vehicle_factor, pedestrian_factor, ego_factor):
        if f < 1.0:
            raise ValueError("inflation factors must be >= 1")
    factors = {"vehicle": vehicle_factor, "pedestrian": pedestrian_factor, "ego": ego_factor}
    out = []
    for a in trajs.agents:
        f = factors.get(a.kind, 1.0)
        t = a.modes[0].points[:, 0]
        frac = t / t[-1] if t[-1] > 0 else np.ones_like(t)
        scale = 1.0 + (f - 1.0) * frac
        out.append(AgentForecast(a.id, a.kind, a.origin,
                                 [Mode(m.probability, m.points.copy()) for m in a.modes],
                                 a.half_extents * scale[:, None]))
    return TrajectorySet(out)


def trajectory_set_to_records(trajs: TrajectorySet) -> list:
    """Line records in the same JSON-lines style as episode logs."""
    recs = []
    for a in trajs.agents:
        for mi, m in enumerate(a.modes):
            recs.append({
                "type": "forecast", "agent": a.id, "kind": a.kind, "mode": mi,
                "probability": round(m.probability, 9),
                "points": [[round(float(v), 6) for v in row] for row in m.points],
                "half_extents": [[round(float(v), 6) for v in row] for row in a.half_extents],
            })
    return recs


def dumps_trajectory_set(trajs: TrajectorySet) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in trajectory_set_to_records(trajs))
