"""Fixed-step closed-loop world."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import LifecycleError
from ..geometry import Box, boxes_overlap
from ..mapkit import Route, VectorMap
from ..models import (
    BicycleParams,
    ControlInput,
    EgoState,
    IdmParams,
    bicycle_step,
    idm_accel,
)

DT = 0.05
EGO_LENGTH = 4.5
EGO_WIDTH = 2.0

COLLISION_KINDS = {
    "pedestrian": "collision-pedestrian",
    "vehicle": "collision-vehicle",
    "static": "collision-static",
}
EVENT_KINDS = (
    "collision-pedestrian", "collision-vehicle", "collision-static",
    "red-light", "stop-sign", "route-deviation", "agent-blocked",
)
TERMINATIONS = ("completed", "blocked", "deviated", "timeout", "planner-error")


@dataclass(frozen=True)
class SimSettings:
    dt: float = DT
    block_timeout: float = 90.0
    deviation_threshold: float = 15.0
    stopped_speed: float = 0.1
    stop_sign_radius: float = 5.0


@dataclass
class InfractionEvent:
    kind: str
    step: int
    position: tuple
    actor_id: str | None = None
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown infraction kind {self.kind!r}")
        if self.kind.startswith("collision") and self.actor_id is None:
            raise ValueError("collision events need an actor id")


@dataclass
class ScriptedPath:
    """Polyline walked at constant speed once the actor is activated."""

    points: np.ndarray  # (n, 2)
    speed: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        self.s = np.concatenate([[0.0], np.cumsum(seg)])

    def pose(self, dist):
        d = min(max(dist, 0.0), self.s[-1])
        i = int(np.clip(np.searchsorted(self.s, d, side="right") - 1, 0, len(self.s) - 2))
        p, q = self.points[i], self.points[i + 1]
        seg = self.s[i + 1] - self.s[i]
        t = (d - self.s[i]) / seg if seg > 0 else 0.0
        return p + t * (q - p), math.atan2(q[1] - p[1], q[0] - p[0])


@dataclass
class Actor:
    id: str
    kind: str  # vehicle | pedestrian | static
    behavior: str  # idm-follower | scripted-path | static
    state: EgoState
    length: float
    width: float
    present: bool = True
    active: bool = False
    path: Route | None = None  # idm followers
    path_s: float = 0.0
    desired_speed: float = 8.0
    initial_speed: float = 0.0
    ignore_lights: bool = False
    script: ScriptedPath | None = None
    script_dist: float = 0.0
    light_stops: list = field(default_factory=list)  # (light id, s along path)

    def box(self) -> Box:
        return Box(self.state.x, self.state.y, self.state.heading, self.length, self.width)


@dataclass
class TrafficLight:
    id: str
    kind: str  # traffic-light | stop-sign
    stop_line: tuple
    lane_ids: tuple
    heading: float
    schedule: tuple = ()  # ((state, duration), ...) cycled; empty = always green
    offset: float = 0.0

    def state_at(self, t: float) -> str:
        if self.kind == "stop-sign":
            return "stop"
        if not self.schedule:
            return "green"
        cycle = sum(d for _, d in self.schedule)
        tau = (t + self.offset) % cycle
        for state, duration in self.schedule:
            if tau < duration:
                return state
            tau -= duration
        return self.schedule[-1][0]


@dataclass
class Trigger:
    scenario_index: int
    template: str
    trigger_s: float
    actor_ids: tuple = ()
    impulses: tuple = ()  # (offset steps, duration steps, steer delta)
    fired: bool = False


@dataclass
class ActorView:
    id: str
    kind: str
    behavior: str
    state: EgoState
    length: float
    width: float

    def box(self) -> Box:
        return Box(self.state.x, self.state.y, self.state.heading, self.length, self.width)


@dataclass
class LightView:
    id: str
    kind: str
    state: str
    stop_line: tuple
    heading: float
    lane_ids: tuple


@dataclass
class Observation:
    step: int
    time: float
    ego: EgoState
    ego_length: float
    ego_width: float
    actors: list
    lights: list
    route: Route
    progress: float
    route_index: int
    speed_limit: float


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """Whether motion ``p1 -> p2`` crosses segment ``q1 q2``.

    A start point lying on the segment does not count, so a crossing that ends
    exactly on a line is reported once, not again on the next step.
    """
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 != 0.0 and (d1 * d2 <= 0.0) and (d3 * d4 <= 0.0)


def _point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    d = b - a
    t = 0.0 if not np.any(d) else float(np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0))
    return float(np.hypot(*(p - (a + t * d))))


class SimWorld:
    """Deterministic 20 Hz world owned by a single episode runner."""

    def __init__(self, vmap: VectorMap, route: Route, ego: EgoState, actors, lights,
                 triggers=(), settings: SimSettings = SimSettings(),
                 bicycle: BicycleParams = BicycleParams(), idm: IdmParams = IdmParams(),
                 ego_length: float = EGO_LENGTH, ego_width: float = EGO_WIDTH,
                 scenario_specs=()):
        ids = [a.id for a in actors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate actor ids in {ids}")
        self.map = vmap
        self.route = route
        self.ego = ego
        self.ego_length = ego_length
        self.ego_width = ego_width
        self.actors = {a.id: a for a in actors}
        self.lights = {l.id: l for l in lights}
        self.triggers = list(triggers)
        self.settings = settings
        self.bicycle = bicycle
        self.idm = idm
        self.scenario_specs = list(scenario_specs)
        self.clock = 0
        self.events: list[InfractionEvent] = []
        self.progress = 0.0
        self.route_index = 0
        self.termination: str | None = None
        self.contacts: set = set()
        self.still_steps = 0
        self.stop_sign_ok: set = set()
        self.perturbations: list = []  # (start, end, steer delta)
        self._update_progress()
        self._fire_triggers()

    # -- state ---------------------------------------------------------------
    @property
    def dt(self) -> float:
        return self.settings.dt

    @property
    def time(self) -> float:
        return self.clock * self.settings.dt

    @property
    def terminated(self) -> bool:
        return self.termination is not None

    def ego_box(self) -> Box:
        return Box(self.ego.x, self.ego.y, self.ego.heading, self.ego_length, self.ego_width)

    def observe(self) -> Observation:
        actors = [ActorView(a.id, a.kind, a.behavior, a.state, a.length, a.width)
                  for a in self.actors.values() if a.present]
        lights = [LightView(l.id, l.kind, l.state_at(self.time), l.stop_line, l.heading, l.lane_ids)
                  for l in self.lights.values()]
        return Observation(self.clock, self.time, self.ego, self.ego_length, self.ego_width,
                           actors, lights, self.route, self.progress, self.route_index,
                           self.route.speed_limit_at(self.progress))

    # -- stepping ------------------------------------------------------------
    def _update_progress(self):
        s, lat, idx = self.route.project((self.ego.x, self.ego.y), self.route_index, window=400)
        self.route_index = idx
        self.lateral = lat
        self.progress = min(max(self.progress, s), self.route.total_length)

    def _fire_triggers(self):
        for trig in self.triggers:
            if trig.fired or self.progress < trig.trigger_s:
                continue
            trig.fired = True
            for aid in trig.actor_ids:
                actor = self.actors[aid]
                actor.present = True
                actor.active = actor.behavior != "static"
                if actor.behavior == "idm-follower":
                    actor.state = actor.state._replace(v=actor.initial_speed)
            for offset, duration, delta in trig.impulses:
                start = self.clock + offset
                self.perturbations.append((start, start + duration, delta))

    def _perturbation(self) -> float:
        return sum(d for a, b, d in self.perturbations if a <= self.clock < b)

    def _advance_actors(self):
        dt = self.settings.dt
        t_next = self.time + dt
        for actor in self.actors.values():
            if not actor.active:
                continue
            if actor.behavior == "scripted-path" and actor.script is not None:
                actor.script_dist += actor.script.speed * dt
                xy, heading = actor.script.pose(actor.script_dist)
                moving = actor.script_dist < actor.script.s[-1]
                actor.state = EgoState(float(xy[0]), float(xy[1]), heading,
                                       actor.script.speed if moving else 0.0)
            elif actor.behavior == "idm-follower" and actor.path is not None:
                gap, lead_v = self._leader_for(actor, t_next)
                params = IdmParams(actor.desired_speed, self.idm.time_headway, self.idm.min_gap,
                                   self.idm.max_accel, self.idm.comfort_decel, self.idm.exponent)
                a = idm_accel(actor.state.v, gap, lead_v, params)
                v = max(0.0, actor.state.v + a * dt)
                actor.path_s = min(actor.path_s + v * dt, actor.path.total_length)
                x, y, h = actor.path.pose_at(actor.path_s)
                if actor.path_s >= actor.path.total_length:
                    v = 0.0
                actor.state = EgoState(x, y, h, v)

    def _leader_for(self, actor: Actor, t_next: float):
        gap, lead_v = math.inf, 0.0
        half = 0.5 * actor.length
        others = [(self.ego_box(), self.ego.v)] + [
            (o.box(), o.state.v) for o in self.actors.values()
            if o.present and o.id != actor.id]
        for box, v in others:
            s, lat, _ = actor.path.project((box.x, box.y))
            ahead = s - actor.path_s
            if 0.0 < ahead < 60.0 and abs(lat) < 0.5 * (actor.width + box.width):
                g = ahead - half - 0.5 * box.length
                if g < gap:
                    gap, lead_v = g, v
        if not actor.ignore_lights:
            for light_id, s_line in actor.light_stops:
                light = self.lights[light_id]
                if light.state_at(t_next) in ("red", "yellow"):
                    g = s_line - actor.path_s - half
                    if 0.0 < g < gap:
                        gap, lead_v = g, 0.0
        return gap, lead_v

    def step(self, control: ControlInput):
        """Advance the world by one tick and return ``(observation, new_events)``."""
        if self.terminated:
            raise LifecycleError(f"episode already terminated ({self.termination})")
        prev = self.ego
        applied = ControlInput(control.steer + self._perturbation(), control.accel)
        self.ego = bicycle_step(self.ego, applied, self.settings.dt, self.bicycle)
        self.clock += 1
        self._update_progress()
        self._fire_triggers()
        self._advance_actors()
        new = []
        new += self._collisions()
        new += self._signal_infractions(prev)
        if abs(self.lateral) > self.settings.deviation_threshold:
            new.append(self._event("route-deviation"))
            self.termination = "deviated"
        elif self.progress >= self.route.total_length - 1e-9:
            self.termination = "completed"
        if self.ego.v < self.settings.stopped_speed:
            self.still_steps += 1
        else:
            self.still_steps = 0
        if (self.termination is None
                and self.still_steps * self.settings.dt >= self.settings.block_timeout - 1e-9):
            new.append(self._event("agent-blocked"))
            self.termination = "blocked"
        self.events.extend(new)
        return self.observe(), new

    def _event(self, kind, actor_id=None) -> InfractionEvent:
        return InfractionEvent(kind, self.clock, (self.ego.x, self.ego.y), actor_id, self.progress)

    def _collisions(self):
        ego_box = self.ego_box()
        out = []
        touching = set()
        for actor in self.actors.values():
            if not actor.present:
                continue
            if boxes_overlap(ego_box, actor.box()):
                touching.add(actor.id)
                if actor.id not in self.contacts:
                    out.append(self._event(COLLISION_KINDS[actor.kind], actor.id))
        self.contacts = touching
        return out

    def _signal_infractions(self, prev: EgoState):
        out = []
        p1, p2 = (prev.x, prev.y), (self.ego.x, self.ego.y)
        for light in self.lights.values():
            a, b = light.stop_line
            if light.kind == "stop-sign":
                near = _point_segment_distance(p2, a, b) <= self.settings.stop_sign_radius
                if near and self.ego.v < self.settings.stopped_speed:
                    self.stop_sign_ok.add(light.id)
            if p1 == p2 or not _segments_intersect(p1, p2, a, b):
                continue
            if math.cos(math.atan2(p2[1] - p1[1], p2[0] - p1[0]) - light.heading) <= 0.0:
                continue
            if light.kind == "traffic-light" and light.state_at(self.time) == "red":
                out.append(self._event("red-light"))
            elif light.kind == "stop-sign":
                if light.id not in self.stop_sign_ok:
                    out.append(self._event("stop-sign"))
                self.stop_sign_ok.discard(light.id)
        return out


def _r(v, nd=6):
    return round(float(v), nd)


def world_to_dict(world: SimWorld) -> dict:
    """Plain-data snapshot of a world, used for determinism checks and debugging."""
    return {
        "clock": world.clock,
        "ego": [_r(v) for v in world.ego],
        "ego_box": [_r(world.ego_length), _r(world.ego_width)],
        "progress": _r(world.progress),
        "route": [[_r(v) for v in p] for p in world.route.points],
        "actors": [{
            "id": a.id, "kind": a.kind, "behavior": a.behavior,
            "state": [_r(v) for v in a.state], "box": [_r(a.length), _r(a.width)],
            "present": a.present, "active": a.active,
            "script": None if a.script is None else [[_r(v) for v in p] for p in a.script.points],
            "path": None if a.path is None else a.path.lane_ids[0] + ".." + a.path.lane_ids[-1],
        } for a in world.actors.values()],
        "lights": [{"id": l.id, "kind": l.kind, "schedule": [list(p) for p in l.schedule],
                    "stop_line": [[_r(v) for v in p] for p in l.stop_line]}
                   for l in world.lights.values()],
        "triggers": [{"template": t.template, "s": _r(t.trigger_s), "actors": list(t.actor_ids),
                      "impulses": [list(i) for i in t.impulses], "fired": t.fired}
                     for t in world.triggers],
    }


def dumps_world(world: SimWorld) -> str:
    return json.dumps(world_to_dict(world), sort_keys=True)
