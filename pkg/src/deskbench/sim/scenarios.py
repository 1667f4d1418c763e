"""Scenario templates, scenario files and world construction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..errors import ConfigError, PlacementError
from ..geometry import project_onto_polyline
from ..mapkit import Route, VectorMap, desk_map_path, extract_route, load_map
from ..models import EgoState
from .world import Actor, ScriptedPath, SimSettings, SimWorld, TrafficLight, Trigger

SCHEMA = "deskbench.scenario/1"
DESK_SCENARIO_DIR = Path(__file__).resolve().parent.parent / "data" / "scenarios"

# Shared defaults; per-template defaults below override these.
_COMMON = {"trigger_distance": 20.0, "extent": 20.0, "lights": {}}

TEMPLATE_DEFAULTS = {
    "ControlLoss": {"trigger_distance": 5.0, "extent": 40.0, "impulses": 3,
                    "magnitude": 0.15, "duration": 0.5, "window": 3.0},
    "ParkingExit": {"trigger_distance": 1.0, "extent": 20.0, "front_gap": 6.0,
                    "rear_gap": 1.5, "vehicle_length": 4.5, "vehicle_width": 2.0},
    "SignalizedJunctionLeftTurn": {"trigger_distance": 40.0, "extent": 40.0,
                                   "other_start": None, "other_goal": None,
                                   "other_speed": 8.0},
    "OppositeVehicleRunningRedLight": {"trigger_distance": 35.0, "extent": 40.0,
                                       "other_start": None, "other_goal": None,
                                       "other_speed": 10.0},
    "ConstructionObstacle": {"trigger_distance": 30.0, "extent": 25.0, "length": 9.0,
                             "box_size": 1.5, "spacing": 3.0, "lateral": 0.0},
    "ParkedObstacleTwoWays": {"trigger_distance": 30.0, "extent": 15.0, "lateral": 0.0,
                              "vehicle_length": 4.5, "vehicle_width": 2.0},
    "HazardAtSideLane": {"trigger_distance": 40.0, "extent": 40.0, "count": 2,
                         "lateral": -1.0, "speed": 1.0, "spacing": 4.0,
                         "bike_length": 1.8, "bike_width": 0.8},
    "VehicleOpensDoorTwoWays": {"trigger_distance": 25.0, "extent": 15.0, "lateral": -0.9,
                                "vehicle_length": 4.5, "vehicle_width": 2.0,
                                "door_length": 1.0, "door_width": 0.9},
    "DynamicObjectCrossing": {"trigger_distance": 30.0, "extent": 20.0, "start_lateral": -4.5,
                              "end_lateral": 6.5, "speed": 1.5, "size": 0.5},
    "VehicleTurningRoutePedestrian": {"trigger_distance": 25.0, "extent": 20.0,
                                      "start_lateral": -4.5, "end_lateral": 6.5,
                                      "speed": 1.5, "size": 0.5},
}
TEMPLATES = tuple(TEMPLATE_DEFAULTS)


@dataclass(frozen=True)
class ScenarioSpec:
    template: str
    anchor: float
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.template not in TEMPLATE_DEFAULTS:
            raise ConfigError(f"unknown scenario template {self.template!r}")
        unknown = set(self.params) - set(TEMPLATE_DEFAULTS[self.template]) - set(_COMMON)
        if unknown:
            raise ConfigError(f"{self.template}: unknown parameters {sorted(unknown)}")
        if self.param("trigger_distance") <= 0:
            raise ConfigError(f"{self.template}: trigger distance must be > 0")

    def param(self, name):
        if name in self.params:
            return self.params[name]
        return TEMPLATE_DEFAULTS[self.template].get(name, _COMMON.get(name))

    @property
    def trigger_distance(self) -> float:
        return float(self.param("trigger_distance"))

    @property
    def extent(self) -> float:
        return float(self.param("extent"))


@dataclass(frozen=True)
class ScenarioFile:
    """A route plus an ordered list of scenario instances."""

    id: str
    map: str
    start: tuple  # (lane id, s)
    goal: tuple
    scenarios: tuple = ()
    max_steps: int = 4000
    path: str | None = None

    def map_path(self) -> Path:
        if self.map in ("straight", "curve", "junction"):
            return desk_map_path(self.map)
        p = Path(self.map)
        if not p.is_absolute() and self.path is not None:
            p = Path(self.path).parent / p
        return p


def _endpoint(node, what, where):
    try:
        return (str(node["lane"]), float(node["s"]))
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"{where}: route {what} needs 'lane' and 's'") from exc


def parse_scenario_file(text: str, path: str | None = None) -> ScenarioFile:
    where = path or "<scenario>"
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping at top level")
    if data.get("schema") != SCHEMA:
        raise ConfigError(f"{where}: schema must be {SCHEMA!r}, got {data.get('schema')!r}")
    for key in ("id", "map", "route"):
        if key not in data:
            raise ConfigError(f"{where}: missing key {key!r}")
    route = data["route"]
    specs = []
    for i, item in enumerate(data.get("scenarios") or []):
        if not isinstance(item, dict) or "template" not in item or "anchor" not in item:
            raise ConfigError(f"{where}: scenario {i} needs 'template' and 'anchor'")
        specs.append(ScenarioSpec(item["template"], float(item["anchor"]),
                                  dict(item.get("params") or {}), int(item.get("seed", i))))
    return ScenarioFile(str(data["id"]), str(data["map"]), _endpoint(route.get("start"), "start", where),
                        _endpoint(route.get("goal"), "goal", where), tuple(specs),
                        int(data.get("max_steps", 4000)), path)


def read_scenario_file(path) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario_file(text, str(path))


def desk_scenario_paths() -> list:
    return sorted(DESK_SCENARIO_DIR.glob("*.yaml"))


def build_route(vmap: VectorMap, sfile: ScenarioFile) -> Route:
    return extract_route(vmap, sfile.start, sfile.goal)


# -- placement helpers -------------------------------------------------------

class _Context:
    def __init__(self, vmap: VectorMap, route: Route):
        self.map = vmap
        self.route = route

    def pose(self, s, lateral=0.0):
        x, y, h = self.route.pose_at(s)
        return x - lateral * math.sin(h), y + lateral * math.cos(h), h

    def on_drivable(self, x, y) -> bool:
        for lane in self.map.lanes.values():
            _, lat, idx, _ = project_onto_polyline((x, y), lane.points, lane.s)
            i = min(idx, len(lane.widths) - 1)
            if -lane.drivable_right[i] - 1e-6 <= lat <= lane.drivable_left[i] + 1e-6:
                return True
        return False

    def lane_path(self, endpoints, what) -> Route:
        if not endpoints:
            raise ConfigError(f"{what} path needs start and goal")
        return extract_route(self.map, endpoints[0], endpoints[1])


def _vehicle(aid, x, y, h, length, width, behavior="static"):
    return Actor(aid, "vehicle", behavior, EgoState(x, y, h, 0.0), length, width)


def _static_box(aid, x, y, h, length, width, present=True):
    return Actor(aid, "static", "static", EgoState(x, y, h, 0.0), length, width, present=present)


def _check_drivable(ctx, actors, template):
    for a in actors:
        if a.kind != "pedestrian" and not ctx.on_drivable(a.state.x, a.state.y):
            raise PlacementError(
                f"{template}: actor {a.id} at ({a.state.x:.2f}, {a.state.y:.2f}) is off the drivable area")


def _endpoint_pair(spec, start_key, goal_key):
    start, goal = spec.param(start_key), spec.param(goal_key)
    if start is None or goal is None:
        return None
    return (str(start["lane"]), float(start["s"])), (str(goal["lane"]), float(goal["s"]))


# -- templates ---------------------------------------------------------------
# Each returns (actors, impulses); ``prefix`` keeps ids unique across instances.

def _control_loss(ctx, spec, prefix, dt):
    rng = np.random.default_rng(spec.seed)
    n = int(spec.param("impulses"))
    steps = max(1, int(round(spec.param("duration") / dt)))
    window = int(round(spec.param("window") / dt))
    offsets = np.sort(rng.integers(0, window + 1, size=n))
    signs = rng.choice([-1.0, 1.0], size=n)
    mags = spec.param("magnitude") * rng.uniform(0.5, 1.0, size=n)
    impulses = tuple((int(o), steps, float(sg * m)) for o, sg, m in zip(offsets, signs, mags))
    return [], impulses


def _parking_exit(ctx, spec, prefix, dt):
    x, y, h = ctx.route.points[0]
    c, s = math.cos(h), math.sin(h)
    length, width = spec.param("vehicle_length"), spec.param("vehicle_width")
    ego_half = 2.25
    front = ego_half + spec.param("front_gap") + 0.5 * length
    rear = ego_half + spec.param("rear_gap") + 0.5 * length
    return [
        _vehicle(f"{prefix}front", x + front * c, y + front * s, h, length, width),
        _vehicle(f"{prefix}rear", x - rear * c, y - rear * s, h, length, width),
    ], ()


def _lane_vehicle(ctx, spec, prefix, ignore_lights):
    pair = _endpoint_pair(spec, "other_start", "other_goal")
    if pair is None:
        raise ConfigError(f"{spec.template}: other_start and other_goal are required")
    path = ctx.lane_path(pair, spec.template)
    x, y, h = path.pose_at(0.0)
    actor = _vehicle(f"{prefix}other", x, y, h, 4.5, 2.0, behavior="idm-follower")
    actor.path = path
    actor.desired_speed = float(spec.param("other_speed"))
    actor.initial_speed = float(spec.param("other_speed"))
    actor.ignore_lights = ignore_lights
    return [actor], ()


def _left_turn(ctx, spec, prefix, dt):
    return _lane_vehicle(ctx, spec, prefix, ignore_lights=False)


def _red_light_runner(ctx, spec, prefix, dt):
    return _lane_vehicle(ctx, spec, prefix, ignore_lights=True)


def _construction(ctx, spec, prefix, dt):
    size, spacing = spec.param("box_size"), spec.param("spacing")
    n = int(math.floor(spec.param("length") / spacing + 1e-9)) + 1
    actors = []
    for i in range(n):
        x, y, h = ctx.pose(spec.anchor + i * spacing, spec.param("lateral"))
        actors.append(_static_box(f"{prefix}box{i}", x, y, h, size, size))
    return actors, ()


def _parked(ctx, spec, prefix, dt):
    x, y, h = ctx.pose(spec.anchor, spec.param("lateral"))
    return [_vehicle(f"{prefix}parked", x, y, h, spec.param("vehicle_length"),
                     spec.param("vehicle_width"))], ()


def _hazard_side_lane(ctx, spec, prefix, dt):
    actors = []
    lat = spec.param("lateral")
    for i in range(int(spec.param("count"))):
        s0 = spec.anchor + i * spec.param("spacing")
        ss = np.arange(s0, min(s0 + 150.0, ctx.route.total_length) + 1e-9, 1.0)
        pts = np.array([ctx.pose(s, lat)[:2] for s in ss])
        x, y, h = ctx.pose(s0, lat)
        a = Actor(f"{prefix}bike{i}", "vehicle", "scripted-path", EgoState(x, y, h, 0.0),
                  spec.param("bike_length"), spec.param("bike_width"))
        a.script = ScriptedPath(pts, float(spec.param("speed")))
        actors.append(a)
    return actors, ()


def _opens_door(ctx, spec, prefix, dt):
    lat = spec.param("lateral")
    length, width = spec.param("vehicle_length"), spec.param("vehicle_width")
    x, y, h = ctx.pose(spec.anchor, lat)
    car = _vehicle(f"{prefix}parked", x, y, h, length, width)
    door_lat = lat + 0.5 * width + 0.5 * spec.param("door_width")
    dx, dy, dh = ctx.pose(spec.anchor + 0.15 * length, door_lat)
    door = _static_box(f"{prefix}door", dx, dy, dh, spec.param("door_length"),
                       spec.param("door_width"), present=False)
    return [car, door], ()


def _crossing_pedestrian(ctx, spec, prefix, dt):
    sx, sy, h = ctx.pose(spec.anchor, spec.param("start_lateral"))
    ex, ey, _ = ctx.pose(spec.anchor, spec.param("end_lateral"))
    heading = math.atan2(ey - sy, ex - sx)
    size = spec.param("size")
    a = Actor(f"{prefix}walker", "pedestrian", "scripted-path", EgoState(sx, sy, heading, 0.0),
              size, size)
    a.script = ScriptedPath([(sx, sy), (ex, ey)], float(spec.param("speed")))
    return [a], ()


_BUILDERS = {
    "ControlLoss": _control_loss,
    "ParkingExit": _parking_exit,
    "SignalizedJunctionLeftTurn": _left_turn,
    "OppositeVehicleRunningRedLight": _red_light_runner,
    "ConstructionObstacle": _construction,
    "ParkedObstacleTwoWays": _parked,
    "HazardAtSideLane": _hazard_side_lane,
    "VehicleOpensDoorTwoWays": _opens_door,
    "DynamicObjectCrossing": _crossing_pedestrian,
    "VehicleTurningRoutePedestrian": _crossing_pedestrian,
}


def _lights(vmap: VectorMap, overrides: dict):
    lights = []
    for anchor in vmap.traffic_controls:
        lane = vmap.lanes[anchor.lane_ids[0]]
        mid = np.asarray(anchor.position)
        idx = int(np.argmin(np.hypot(*(lane.points[:, :2] - mid).T)))
        schedule = tuple((str(st), float(d)) for st, d in overrides.get(anchor.id, ()))
        kind = "traffic-light" if anchor.kind == "traffic-light" else "stop-sign"
        lights.append(TrafficLight(anchor.id, kind, anchor.stop_line, tuple(anchor.lane_ids),
                                   float(lane.points[idx, 2]), schedule))
    return lights


def _light_stops(actor: Actor, lights):
    out = []
    lanes = set(actor.path.lane_ids)
    for light in lights:
        if lanes & set(light.lane_ids):
            mid = np.mean(np.asarray(light.stop_line), axis=0)
            s, _, _ = actor.path.project(mid)
            out.append((light.id, s))
    return out


def load_scenario(specs, vmap: VectorMap, route: Route, settings: SimSettings = SimSettings(),
                  **world_kwargs) -> SimWorld:
    """Stage the ego at the route start and the scenario actors, dormant until triggered."""
    if isinstance(specs, ScenarioSpec):
        specs = [specs]
    ctx = _Context(vmap, route)
    actors, triggers, overrides = [], [], {}
    for i, spec in enumerate(specs):
        if not 0.0 <= spec.anchor <= route.total_length:
            raise PlacementError(
                f"{spec.template}: anchor {spec.anchor} outside route [0, {route.total_length:.3f}]")
        ax, ay, _ = ctx.pose(spec.anchor)
        if not ctx.on_drivable(ax, ay):
            raise PlacementError(f"{spec.template}: anchor {spec.anchor} is off the drivable area")
        new, impulses = _BUILDERS[spec.template](ctx, spec, f"s{i}_", settings.dt)
        _check_drivable(ctx, new, spec.template)
        actors += new
        overrides.update(spec.param("lights") or {})
        trigger_s = max(0.0, spec.anchor - spec.trigger_distance)
        triggers.append(Trigger(i, spec.template, trigger_s,
                                tuple(a.id for a in new if a.behavior != "static" or not a.present),
                                impulses))
    lights = _lights(vmap, overrides)
    for a in actors:
        if a.behavior == "idm-follower":
            a.light_stops = _light_stops(a, lights)
    # lane heading at the start, not the direction of a leading lane-change segment
    x, y, h = (float(v) for v in route.points[0])
    ego = EgoState(x, y, h, 0.0)
    return SimWorld(vmap, route, ego, actors, lights, triggers, settings,
                    scenario_specs=list(specs), **world_kwargs)


def load_scenario_file(sfile: ScenarioFile, settings: SimSettings = SimSettings(),
                       vmap: VectorMap | None = None, seed: int = 0) -> SimWorld:
    """Build map, route and world for a scenario file; ``seed`` re-seeds every instance."""
    vmap = vmap if vmap is not None else load_map(sfile.map_path())
    route = build_route(vmap, sfile)
    specs = [ScenarioSpec(s.template, s.anchor, s.params, mix_seed(seed, s.seed))
             for s in sfile.scenarios]
    return load_scenario(specs, vmap, route, settings)


def mix_seed(global_seed: int, local_seed: int) -> int:
    return int(np.random.SeedSequence([int(global_seed), int(local_seed)]).generate_state(1)[0])
