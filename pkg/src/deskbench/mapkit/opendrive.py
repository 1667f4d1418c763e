"""Parser for the OpenDRIVE subset used by the desk maps.

Supported: ``line`` and ``arc`` reference geometries, cubic lane-width
records, lane sections, road/lane predecessor-successor links, road speed
records, signals (traffic lights and stop signs) and crosswalk objects.
``<junction>`` elements are accepted but ignored; junction connectivity is
read from the connecting roads' own links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.parsers import expat

from ..errors import MapParseError, TopologyError, UnsupportedFeatureError

KMH = 1.0 / 3.6
MPH = 0.44704

TRAFFIC_LIGHT_TYPES = {"1000001"}
STOP_SIGN_TYPES = {"206"}


class _Node:
    __slots__ = ("tag", "attrib", "children", "line")

    def __init__(self, tag, attrib, line):
        self.tag = tag
        self.attrib = attrib
        self.children = []
        self.line = line

    def find(self, tag):
        for c in self.children:
            if c.tag == tag:
                return c
        return None

    def findall(self, tag):
        return [c for c in self.children if c.tag == tag]

    def get(self, key, default=None):
        return self.attrib.get(key, default)


def _parse_xml(text) -> _Node:
    parser = expat.ParserCreate()
    stack: list[_Node] = []
    root: list[_Node] = []

    def start(tag, attrib):
        node = _Node(tag, attrib, parser.CurrentLineNumber)
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    try:
        parser.Parse(text if isinstance(text, (bytes, str)) else bytes(text), True)
    except expat.ExpatError as exc:
        raise MapParseError(expat.ErrorString(exc.code), line=exc.lineno) from None
    return root[0]


@dataclass(frozen=True)
class GeometrySegment:
    kind: str  # "line" | "arc"
    s: float
    x: float
    y: float
    heading: float
    length: float
    curvature: float = 0.0

    def evaluate(self, ds):
        """Pose ``(x, y, heading)`` at local offset ``ds`` along the segment."""
        h0 = self.heading
        if self.kind == "line":
            return (self.x + ds * math.cos(h0), self.y + ds * math.sin(h0), h0)
        k = self.curvature
        h = h0 + k * ds
        return (self.x + (math.sin(h) - math.sin(h0)) / k,
                self.y - (math.cos(h) - math.cos(h0)) / k, h)

    def center(self):
        """Circle center of an arc segment."""
        k = self.curvature
        return (self.x - math.sin(self.heading) / k, self.y + math.cos(self.heading) / k)


@dataclass(frozen=True)
class WidthRecord:
    s_offset: float
    a: float
    b: float
    c: float
    d: float

    def value(self, ds):
        return self.a + ds * (self.b + ds * (self.c + ds * self.d))

    def slope(self, ds):
        return self.b + ds * (2.0 * self.c + 3.0 * ds * self.d)


@dataclass(frozen=True)
class LaneDef:
    id: int
    type: str
    widths: tuple
    predecessor: int | None = None
    successor: int | None = None
    speed_limit: float | None = None

    def width_record(self, ds):
        rec = self.widths[0]
        for w in self.widths:
            if w.s_offset <= ds + 1e-12:
                rec = w
        return rec

    def width(self, ds):
        rec = self.width_record(ds)
        return rec.value(ds - rec.s_offset)

    def width_slope(self, ds):
        rec = self.width_record(ds)
        return rec.slope(ds - rec.s_offset)

    @property
    def drivable(self):
        return self.type == "driving"


@dataclass(frozen=True)
class LaneSection:
    s: float
    lanes: dict  # lane id -> LaneDef (center lane excluded)

    def ordered(self, side):
        """Lane ids from the reference line outward on ``side`` (+1 left, -1 right)."""
        ids = sorted((i for i in self.lanes if i * side > 0), key=abs)
        return ids


@dataclass(frozen=True)
class RoadLink:
    element_type: str
    element_id: str
    contact_point: str | None


@dataclass(frozen=True)
class TrafficControl:
    id: str
    kind: str  # "traffic-light" | "stop-sign"
    road_id: str
    s: float
    lane_ids: tuple


@dataclass(frozen=True)
class CrosswalkDef:
    id: str
    road_id: str
    s: float
    t: float
    length: float
    width: float
    heading: float


@dataclass(frozen=True)
class Road:
    id: str
    name: str
    length: float
    junction: str
    geometries: tuple
    sections: tuple
    predecessor: RoadLink | None
    successor: RoadLink | None
    speed_limit: float | None

    def reference_pose(self, s):
        """``(x, y, heading, curvature)`` of the reference line at ``s``."""
        geo = self.geometries[0]
        for g in self.geometries:
            if g.s <= s + 1e-9:
                geo = g
        ds = min(max(s - geo.s, 0.0), geo.length)
        x, y, h = geo.evaluate(ds)
        return x, y, h, geo.curvature

    def section_bounds(self, index):
        start = self.sections[index].s
        end = self.sections[index + 1].s if index + 1 < len(self.sections) else self.length
        return start, end


@dataclass(frozen=True)
class RoadNetwork:
    roads: dict = field(default_factory=dict)
    traffic_controls: tuple = ()
    crosswalks: tuple = ()


def _float(node, key, default=None):
    raw = node.get(key)
    if raw is None:
        if default is None:
            raise MapParseError(f"<{node.tag}> missing attribute '{key}'", line=node.line)
        return default
    try:
        return float(raw)
    except ValueError:
        raise MapParseError(f"<{node.tag}> attribute '{key}'={raw!r} is not a number",
                            line=node.line) from None


def _speed(node):
    value = _float(node, "max")
    unit = node.get("unit", "m/s")
    factor = {"m/s": 1.0, "km/h": KMH, "mph": MPH}.get(unit)
    if factor is None:
        raise UnsupportedFeatureError(f"speed unit {unit!r} at line {node.line}")
    return value * factor


def _parse_geometry(node) -> GeometrySegment:
    kinds = [c for c in node.children]
    if len(kinds) != 1:
        raise MapParseError("<geometry> needs exactly one shape child", line=node.line)
    shape = kinds[0]
    s, x, y = _float(node, "s"), _float(node, "x"), _float(node, "y")
    hdg, length = _float(node, "hdg"), _float(node, "length")
    if shape.tag not in ("line", "arc"):
        raise UnsupportedFeatureError(
            f"<geometry> kind <{shape.tag}> at line {shape.line} is not supported "
            "(only line and arc reference geometries)")
    if not length > 0.0:
        raise MapParseError(f"geometry length must be > 0, got {length}", line=node.line)
    curvature = 0.0
    if shape.tag == "arc":
        curvature = _float(shape, "curvature")
        if curvature == 0.0:
            raise MapParseError("arc curvature must be non-zero", line=shape.line)
    return GeometrySegment(shape.tag, s, x, y, hdg, length, curvature)


def _parse_lane(node) -> LaneDef:
    lane_id = int(node.get("id"))
    widths = tuple(
        WidthRecord(_float(w, "sOffset", 0.0), _float(w, "a"), _float(w, "b", 0.0),
                    _float(w, "c", 0.0), _float(w, "d", 0.0))
        for w in node.findall("width"))
    if not widths:
        raise MapParseError(f"lane {lane_id} has no <width> record", line=node.line)
    if node.find("border") is not None:
        raise UnsupportedFeatureError(f"<border> lane records (line {node.line})")
    pred = succ = None
    link = node.find("link")
    if link is not None:
        p, q = link.find("predecessor"), link.find("successor")
        pred = int(p.get("id")) if p is not None else None
        succ = int(q.get("id")) if q is not None else None
    speeds = node.findall("speed")
    limit = _speed(speeds[0]) if speeds else None
    return LaneDef(lane_id, node.get("type", "driving"),
                   tuple(sorted(widths, key=lambda w: w.s_offset)), pred, succ, limit)


def _parse_link(node, which):
    if node is None:
        return None
    el = node.find(which)
    if el is None:
        return None
    return RoadLink(el.get("elementType", "road"), el.get("elementId"), el.get("contactPoint"))


def _resolve_lanes(signal, section, orientation):
    validity = signal.findall("validity")
    if validity:
        ids = []
        for v in validity:
            lo, hi = int(v.get("fromLane")), int(v.get("toLane"))
            lo, hi = min(lo, hi), max(lo, hi)
            ids.extend(i for i in range(lo, hi + 1) if i != 0)
    elif orientation == "+":
        ids = [i for i in section.lanes if i < 0]
    elif orientation == "-":
        ids = [i for i in section.lanes if i > 0]
    else:
        ids = list(section.lanes)
    return tuple(sorted(i for i in ids if i in section.lanes and section.lanes[i].drivable))


def parse_opendrive(document) -> RoadNetwork:
    """Parse OpenDRIVE XML text into a :class:`RoadNetwork`."""
    root = _parse_xml(document)
    if root.tag != "OpenDRIVE":
        raise MapParseError(f"root element is <{root.tag}>, expected <OpenDRIVE>", line=root.line)

    roads = {}
    controls = []
    crosswalks = []
    for rnode in root.findall("road"):
        rid = rnode.get("id")
        if rid is None:
            raise MapParseError("<road> without id", line=rnode.line)
        plan = rnode.find("planView")
        if plan is None:
            raise MapParseError(f"road {rid} has no <planView>", line=rnode.line)
        geos = tuple(sorted((_parse_geometry(g) for g in plan.findall("geometry")),
                            key=lambda g: g.s))
        if not geos:
            raise MapParseError(f"road {rid} has no geometry", line=plan.line)
        lanes_node = rnode.find("lanes")
        if lanes_node is None:
            raise MapParseError(f"road {rid} has no <lanes>", line=rnode.line)
        if lanes_node.find("laneOffset") is not None:
            raise UnsupportedFeatureError(f"<laneOffset> in road {rid}")
        sections = []
        for snode in lanes_node.findall("laneSection"):
            lanes = {}
            for side in ("left", "right"):
                sn = snode.find(side)
                if sn is None:
                    continue
                for lnode in sn.findall("lane"):
                    lane = _parse_lane(lnode)
                    lanes[lane.id] = lane
            sections.append(LaneSection(_float(snode, "s", 0.0), lanes))
        sections.sort(key=lambda sec: sec.s)
        if not any(l.drivable for sec in sections for l in sec.lanes.values()):
            continue
        speed = None
        tnode = rnode.find("type")
        if tnode is not None and tnode.find("speed") is not None:
            speed = _speed(tnode.find("speed"))
        link = rnode.find("link")
        road = Road(rid, rnode.get("name", ""), _float(rnode, "length"),
                    rnode.get("junction", "-1"), geos, tuple(sections),
                    _parse_link(link, "predecessor"), _parse_link(link, "successor"), speed)
        roads[rid] = road

        signals = rnode.find("signals")
        for sig in signals.findall("signal") if signals is not None else ():
            stype = sig.get("type", "")
            if stype in TRAFFIC_LIGHT_TYPES:
                kind = "traffic-light"
            elif stype in STOP_SIGN_TYPES:
                kind = "stop-sign"
            else:
                continue
            s = _float(sig, "s")
            sec = sections[0]
            for cand in sections:
                if cand.s <= s + 1e-9:
                    sec = cand
            lane_ids = _resolve_lanes(sig, sec, sig.get("orientation", "none"))
            if not lane_ids:
                raise TopologyError(f"signal {sig.get('id')} on road {rid} controls no driving lane")
            controls.append(TrafficControl(sig.get("id"), kind, rid, s, lane_ids))

        objects = rnode.find("objects")
        for obj in objects.findall("object") if objects is not None else ():
            if obj.get("type", "").lower() != "crosswalk":
                continue
            crosswalks.append(CrosswalkDef(obj.get("id"), rid, _float(obj, "s"), _float(obj, "t", 0.0),
                                           _float(obj, "length"), _float(obj, "width"),
                                           _float(obj, "hdg", 0.0)))

    net = RoadNetwork(roads, tuple(controls), tuple(crosswalks))
    _check_links(net)
    return net


def adjacent_section(road: Road, contact_point):
    return road.sections[0] if contact_point == "start" else road.sections[-1]


def _check_links(net: RoadNetwork):
    for road in net.roads.values():
        for which, link, section in (("predecessor", road.predecessor, road.sections[0]),
                                     ("successor", road.successor, road.sections[-1])):
            if link is None or link.element_type != "road":
                continue
            other = net.roads.get(link.element_id)
            if other is None:
                raise TopologyError(f"road {road.id} {which} references missing road {link.element_id}")
            target = adjacent_section(other, link.contact_point)
            for lane in section.lanes.values():
                lid = getattr(lane, which)
                if lid is not None and lane.drivable and lid not in target.lanes:
                    raise TopologyError(
                        f"road {road.id} lane {lane.id} {which} references missing lane "
                        f"{lid} on road {other.id}")
        for i in range(len(road.sections) - 1):
            nxt = road.sections[i + 1]
            for lane in road.sections[i].lanes.values():
                if lane.successor is not None and lane.drivable and lane.successor not in nxt.lanes:
                    raise TopologyError(
                        f"road {road.id} section {i} lane {lane.id} successor {lane.successor} missing")
