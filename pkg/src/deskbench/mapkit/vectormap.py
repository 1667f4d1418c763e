"""Sampled lane-graph map built from a :class:`RoadNetwork`.

Lane ids are ``"<road>:<section>:<lane>"``. Centerlines are stored in the
direction of travel: lanes with positive OpenDRIVE ids run against the
reference line, so their samples are reversed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import GeometryError, MapParseError, TopologyError
from ..geometry import cumulative_length, wrap_angle
from .opendrive import RoadNetwork, adjacent_section

DEFAULT_SPEED_LIMIT = 13.89
FORMAT_NAME = "deskbench.vectormap"
FORMAT_VERSION = 1
CONTINUITY_TOL = 0.5


def lane_key(road_id, section, lane_id) -> str:
    return f"{road_id}:{section}:{lane_id}"


@dataclass
class Lane:
    id: str
    road_id: str
    section: int
    odr_id: int
    points: np.ndarray  # (n, 3) x, y, heading
    widths: np.ndarray
    ref_s: np.ndarray  # reference-line s of each sample
    drivable_left: np.ndarray  # lateral room to the left edge of drivable surface
    drivable_right: np.ndarray
    speed_limit: float
    successors: list = field(default_factory=list)
    predecessors: list = field(default_factory=list)
    left_neighbor: str | None = None
    right_neighbor: str | None = None

    @property
    def s(self) -> np.ndarray:
        return cumulative_length(self.points)

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def index_at(self, s: float) -> int:
        """Sample index closest to arc length ``s``."""
        arc = self.s
        return int(np.argmin(np.abs(arc - s)))


@dataclass(frozen=True)
class TrafficLightAnchor:
    id: str
    kind: str
    position: tuple
    stop_line: tuple  # ((x1, y1), (x2, y2))
    lane_ids: tuple


@dataclass
class VectorMap:
    lanes: dict
    crosswalks: list
    stop_lines: list
    traffic_controls: list
    spacing: float

    def lane(self, lane_id) -> Lane:
        try:
            return self.lanes[lane_id]
        except KeyError:
            raise KeyError(f"unknown lane {lane_id!r}") from None

    def find_lane(self, road_id, odr_id, section=None) -> Lane:
        """First (or given-section) lane of a road with OpenDRIVE id ``odr_id``."""
        for lane in self.lanes.values():
            if lane.road_id == str(road_id) and lane.odr_id == int(odr_id):
                if section is None or lane.section == section:
                    return lane
        raise KeyError(f"no lane {odr_id} on road {road_id}")


def _section_samples(road, index, spacing):
    s0, s1 = road.section_bounds(index)
    section = road.sections[index]
    probe = np.linspace(s0, s1, 21)
    max_t = 0.0
    for s in probe:
        for side in (1, -1):
            total = sum(max(section.lanes[i].width(s - s0), 0.0) for i in section.ordered(side))
            max_t = max(max_t, total)
    max_k = max((abs(g.curvature) for g in road.geometries
                 if g.s < s1 and g.s + g.length > s0), default=0.0)
    stretch = 1.0 + max_k * max_t
    n = max(1, int(math.ceil((s1 - s0) * stretch / spacing - 1e-9)))
    return np.linspace(s0, s1, n + 1)


def build_vector_map(network: RoadNetwork, spacing: float = 0.5) -> VectorMap:
    """Sample every drivable lane of ``network`` at most ``spacing`` apart."""
    if not 0.1 <= spacing <= 2.0:
        raise GeometryError(f"spacing {spacing} outside [0.1, 2.0] m")
    lanes: dict[str, Lane] = {}
    for road in network.roads.values():
        limit_road = road.speed_limit if road.speed_limit is not None else DEFAULT_SPEED_LIMIT
        for si, section in enumerate(road.sections):
            ss = _section_samples(road, si, spacing)
            ref = np.array([road.reference_pose(s) for s in ss])
            ds = ss - section.s
            widths = {}
            slopes = {}
            for lid, lane in section.lanes.items():
                w = np.array([lane.width(d) for d in ds])
                bad = np.nonzero(w < 0.0)[0]
                if bad.size:
                    raise GeometryError(
                        f"negative width {w[bad[0]]:.4f} m for lane {lid} on road {road.id} "
                        f"at s={ss[bad[0]]:.3f}")
                widths[lid] = w
                slopes[lid] = np.array([lane.width_slope(d) for d in ds])
            for side in (1, -1):
                inner = np.zeros_like(ss)
                inner_slope = np.zeros_like(ss)
                order = section.ordered(side)
                for lid in order:
                    lane = section.lanes[lid]
                    w, dw = widths[lid], slopes[lid]
                    t = side * (inner + 0.5 * w)
                    dt = side * (inner_slope + 0.5 * dw)
                    inner = inner + w
                    inner_slope = inner_slope + dw
                    if not lane.drivable:
                        continue
                    nx, ny = -np.sin(ref[:, 2]), np.cos(ref[:, 2])
                    x = ref[:, 0] + t * nx
                    y = ref[:, 1] + t * ny
                    heading = ref[:, 2] + np.arctan2(dt, 1.0 - ref[:, 3] * t)
                    left_room, right_room = _drivable_room(section, lid, widths)
                    pts = np.column_stack([x, y, heading])
                    rs = ss.copy()
                    w_lane = w.copy()
                    if lid > 0:
                        pts = pts[::-1].copy()
                        pts[:, 2] = pts[:, 2] + math.pi
                        rs = rs[::-1].copy()
                        w_lane = w_lane[::-1].copy()
                        left_room, right_room = right_room[::-1].copy(), left_room[::-1].copy()
                    pts[:, 2] = wrap_angle(pts[:, 2])
                    key = lane_key(road.id, si, lid)
                    lanes[key] = Lane(key, road.id, si, lid, pts, w_lane, rs,
                                      left_room, right_room,
                                      lane.speed_limit if lane.speed_limit is not None else limit_road)
    _link_lanes(network, lanes)
    _check_continuity(lanes)
    crosswalks, stop_lines, controls = _traffic_elements(network, lanes)
    return VectorMap(lanes, crosswalks, stop_lines, controls, spacing)


def _drivable_room(section, lid, widths):
    """Room from the lane centerline to the drivable edge toward +t and -t."""
    w = widths[lid]
    up = 0.5 * w
    down = 0.5 * w
    # walk toward +t (larger ids) and toward -t (smaller ids), skipping the center lane 0
    ids = sorted(section.lanes)
    pos = ids.index(lid)
    for other in ids[pos + 1:]:
        if not section.lanes[other].drivable:
            break
        up = up + widths[other]
    for other in reversed(ids[:pos]):
        if not section.lanes[other].drivable:
            break
        down = down + widths[other]
    # +t is the left side of the reference direction
    return up, down


def _add_edge(lanes, src, dst):
    if src in lanes and dst in lanes and dst not in lanes[src].successors:
        lanes[src].successors.append(dst)
        lanes[dst].predecessors.append(src)


def _link_lanes(network, lanes):
    for road in network.roads.values():
        last = len(road.sections) - 1
        for si, section in enumerate(road.sections):
            for lid, lane in section.lanes.items():
                if not lane.drivable:
                    continue
                me = lane_key(road.id, si, lid)
                # neighbors share direction; "left" is toward the reference line
                toward_ref = lid + 1 if lid < 0 else lid - 1
                away = lid - 1 if lid < 0 else lid + 1
                for nb, attr in ((toward_ref, "left_neighbor"), (away, "right_neighbor")):
                    if nb != 0 and nb in section.lanes and section.lanes[nb].drivable:
                        setattr(lanes[me], attr, lane_key(road.id, si, nb))
                # within-road section transitions
                if si < last and lane.successor is not None:
                    other = lane_key(road.id, si + 1, lane.successor)
                    if lid < 0:
                        _add_edge(lanes, me, other)
                    else:
                        _add_edge(lanes, other, me)
                if si > 0 and lane.predecessor is not None:
                    other = lane_key(road.id, si - 1, lane.predecessor)
                    if lid < 0:
                        _add_edge(lanes, other, me)
                    else:
                        _add_edge(lanes, me, other)
                # road-to-road links
                for which, link, sec_index in (("predecessor", road.predecessor, 0),
                                               ("successor", road.successor, last)):
                    if si != sec_index or link is None or link.element_type != "road":
                        continue
                    target_lane = getattr(lane, which)
                    if target_lane is None:
                        continue
                    other_road = network.roads[link.element_id]
                    other_si = 0 if link.contact_point == "start" else len(other_road.sections) - 1
                    if target_lane not in adjacent_section(other_road, link.contact_point).lanes:
                        raise TopologyError(f"{me} links to missing lane {target_lane}")
                    other = lane_key(other_road.id, other_si, target_lane)
                    forward = (which == "successor") == (lid < 0)
                    if forward:
                        _add_edge(lanes, me, other)
                    else:
                        _add_edge(lanes, other, me)
    for lane in lanes.values():
        lane.successors.sort()
        lane.predecessors.sort()


def _check_continuity(lanes):
    for lane in lanes.values():
        end = lane.points[-1, :2]
        for succ in lane.successors:
            start = lanes[succ].points[0, :2]
            gap = float(np.hypot(*(start - end)))
            if gap > CONTINUITY_TOL:
                raise TopologyError(f"lane {lane.id} ends {gap:.3f} m away from successor {succ}")


def _traffic_elements(network, lanes):
    crosswalks = []
    for cw in network.crosswalks:
        road = network.roads[cw.road_id]
        x, y, h, _ = road.reference_pose(cw.s)
        cx, cy = x - cw.t * math.sin(h), y + cw.t * math.cos(h)
        hh = h + cw.heading
        c, s = math.cos(hh), math.sin(hh)
        hl, hw = 0.5 * cw.length, 0.5 * cw.width
        poly = [(cx + c * a - s * b, cy + s * a + c * b)
                for a, b in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]
        crosswalks.append({"id": cw.id, "polygon": poly})
    stop_lines = []
    controls = []
    for tc in network.traffic_controls:
        road = network.roads[tc.road_id]
        si = 0
        for i, sec in enumerate(road.sections):
            if sec.s <= tc.s + 1e-9:
                si = i
        section = road.sections[si]
        x, y, h, _ = road.reference_pose(tc.s)
        ds = tc.s - section.s
        lo, hi = math.inf, -math.inf
        for side in (1, -1):
            inner = 0.0
            for lid in section.ordered(side):
                w = section.lanes[lid].width(ds)
                if lid in tc.lane_ids:
                    lo = min(lo, side * inner, side * (inner + w))
                    hi = max(hi, side * inner, side * (inner + w))
                inner += w
        nx, ny = -math.sin(h), math.cos(h)
        p1 = (x + lo * nx, y + lo * ny)
        p2 = (x + hi * nx, y + hi * ny)
        lane_keys = tuple(lane_key(road.id, si, lid) for lid in tc.lane_ids)
        stop_lines.append({"id": tc.id, "line": [p1, p2], "lane_ids": list(lane_keys)})
        mid = (0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1]))
        controls.append(TrafficLightAnchor(tc.id, tc.kind, mid, (p1, p2), lane_keys))
    return crosswalks, stop_lines, controls


# --- serialization -----------------------------------------------------------

def _r(value):
    return round(float(value), 6) + 0.0


def _rl(arr):
    return [_r(v) for v in np.ravel(arr)]


def vector_map_to_dict(vmap: VectorMap) -> dict:
    lanes = []
    for key in sorted(vmap.lanes):
        lane = vmap.lanes[key]
        lanes.append({
            "id": lane.id,
            "road_id": lane.road_id,
            "section": lane.section,
            "odr_id": lane.odr_id,
            "speed_limit": _r(lane.speed_limit),
            "successors": list(lane.successors),
            "predecessors": list(lane.predecessors),
            "left_neighbor": lane.left_neighbor,
            "right_neighbor": lane.right_neighbor,
            "centerline": [[_r(x), _r(y), _r(h)] for x, y, h in lane.points],
            "widths": _rl(lane.widths),
            "ref_s": _rl(lane.ref_s),
            "drivable_left": _rl(lane.drivable_left),
            "drivable_right": _rl(lane.drivable_right),
        })
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "spacing": _r(vmap.spacing),
        "lanes": lanes,
        "crosswalks": [{"id": c["id"], "polygon": [[_r(x), _r(y)] for x, y in c["polygon"]]}
                       for c in vmap.crosswalks],
        "stop_lines": [{"id": s["id"], "line": [[_r(x), _r(y)] for x, y in s["line"]],
                        "lane_ids": list(s["lane_ids"])} for s in vmap.stop_lines],
        "traffic_controls": [{"id": t.id, "kind": t.kind,
                              "position": [_r(t.position[0]), _r(t.position[1])],
                              "lane_ids": list(t.lane_ids)} for t in vmap.traffic_controls],
    }


def dumps_vector_map(vmap: VectorMap) -> str:
    return json.dumps(vector_map_to_dict(vmap), indent=1, sort_keys=True) + "\n"


def loads_vector_map(text: str) -> VectorMap:
    data = json.loads(text)
    if data.get("format") != FORMAT_NAME:
        raise MapParseError(f"not a {FORMAT_NAME} document")
    if data.get("version") != FORMAT_VERSION:
        raise MapParseError(f"unsupported vectormap version {data.get('version')}")
    lanes = {}
    for d in data["lanes"]:
        lanes[d["id"]] = Lane(
            d["id"], d["road_id"], d["section"], d["odr_id"], np.array(d["centerline"], dtype=float),
            np.array(d["widths"]), np.array(d["ref_s"]), np.array(d["drivable_left"]),
            np.array(d["drivable_right"]), d["speed_limit"], list(d["successors"]),
            list(d["predecessors"]), d["left_neighbor"], d["right_neighbor"])
    stop_lines = [{"id": s["id"], "line": [tuple(p) for p in s["line"]], "lane_ids": s["lane_ids"]}
                  for s in data["stop_lines"]]
    lines = {s["id"]: s for s in stop_lines}
    controls = [TrafficLightAnchor(t["id"], t["kind"], tuple(t["position"]),
                                   tuple(tuple(p) for p in lines[t["id"]]["line"]),
                                   tuple(t["lane_ids"])) for t in data["traffic_controls"]]
    crosswalks = [{"id": c["id"], "polygon": [tuple(p) for p in c["polygon"]]}
                  for c in data["crosswalks"]]
    return VectorMap(lanes, crosswalks, stop_lines, controls, data["spacing"])
