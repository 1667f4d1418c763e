"""Route Completion, Infraction Penalty and Driving Score, with scenario decomposition."""

from __future__ import annotations

import bisect
import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import ConfigError, PartitionError
from .sim.world import EVENT_KINDS

DEFAULT_PENALTIES = {
    "collision-pedestrian": 0.50,
    "collision-vehicle": 0.60,
    "collision-static": 0.65,
    "red-light": 0.70,
    "stop-sign": 0.80,
    # These end the episode; their cost shows up as truncated route completion.
    "route-deviation": 1.0,
    "agent-blocked": 1.0,
}

# Scenario subcategories, in report order.
CATEGORIES = (
    ("Control", ("ControlLoss",)),
    ("Parking", ("ParkingExit",)),
    ("Traffic negotiation", ("SignalizedJunctionLeftTurn", "OppositeVehicleRunningRedLight")),
    ("Obstacle avoidance", ("ConstructionObstacle", "ParkedObstacleTwoWays", "HazardAtSideLane",
                            "VehicleOpensDoorTwoWays")),
    ("Braking", ("DynamicObjectCrossing", "VehicleTurningRoutePedestrian")),
)


@dataclass(frozen=True)
class PenaltyTable:
    coefficients: dict = field(default_factory=lambda: dict(DEFAULT_PENALTIES))

    def __post_init__(self):
        for kind, p in self.coefficients.items():
            if kind not in EVENT_KINDS:
                raise ConfigError(f"penalty table: unknown infraction kind {kind!r}")
            if not 0.0 < p <= 1.0:
                raise ConfigError(f"penalty table: coefficient for {kind} must be in (0, 1], got {p}")

    def __getitem__(self, kind) -> float:
        try:
            return self.coefficients[kind]
        except KeyError:
            raise ConfigError(f"penalty table has no coefficient for {kind!r}") from None


def route_completion(distance: float, route_length: float) -> float:
    """Percentage of the route covered, clamped to [0, 100]."""
    if not route_length > 0.0:
        raise ValueError(f"route completion undefined for route length {route_length}")
    return min(100.0, max(0.0, 100.0 * distance / route_length))


def infraction_penalty(events, table: PenaltyTable = PenaltyTable()) -> float:
    """``100 * prod_j p_j ** n_j`` over the infraction kinds in ``events``."""
    counts = Counter(getattr(e, "kind", e) for e in events)
    ip = 100.0
    for kind in sorted(counts):
        ip *= table[kind] ** counts[kind]
    return ip


def driving_score(rc: float, ip: float) -> float:
    for name, v in (("rc", rc), ("ip", ip)):
        if not 0.0 <= v <= 100.0:
            raise ValueError(f"{name} must be in [0, 100], got {v}")
    return rc * ip / 100.0


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    template: str | None = None  # None marks filler

    @property
    def length(self) -> float:
        return self.end - self.start


def partition_route(scenarios, route_length: float) -> list:
    """Split ``[0, route_length]`` into scenario segments and untagged filler.

    Each scenario covers ``[anchor - trigger_distance, anchor + extent]``,
    clipped to the route.
    """
    tagged = []
    for sc in scenarios:
        lo = max(0.0, sc["anchor"] - sc["trigger_distance"])
        hi = min(route_length, sc["anchor"] + sc["extent"])
        if hi > lo:
            tagged.append(Segment(lo, hi, sc["template"]))
    tagged.sort(key=lambda s: (s.start, s.end))
    for a, b in zip(tagged, tagged[1:]):
        if b.start < a.end - 1e-9:
            raise PartitionError(
                f"segments overlap: {a.template} [{a.start}, {a.end}] and "
                f"{b.template} [{b.start}, {b.end}]")
    out, cursor = [], 0.0
    for seg in tagged:
        if seg.start > cursor + 1e-9:
            out.append(Segment(cursor, seg.start))
        out.append(seg)
        cursor = seg.end
    if cursor < route_length - 1e-9 or not out:
        out.append(Segment(cursor, route_length))
    return out


@dataclass
class SegmentResult:
    segment: Segment
    rc: float
    ip: float
    ds: float
    counts: dict


@dataclass
class RouteResult:
    route_id: str
    map: str
    planner: str
    rc: float
    ip: float
    ds: float
    counts: dict
    termination: str = ""
    segments: list = field(default_factory=list)


def score_segments(segments, distance: float, events, table: PenaltyTable) -> list:
    """Per-segment triples; each event belongs to the last segment starting at or before it."""
    starts = [seg.start for seg in segments]
    owned = defaultdict(list)
    for e in events:
        owned[max(0, bisect.bisect_right(starts, e.s) - 1)].append(e)
    out = []
    for i, seg in enumerate(segments):
        covered = min(max(distance - seg.start, 0.0), seg.length)
        rc = 100.0 * covered / seg.length
        ip = infraction_penalty(owned[i], table)
        out.append(SegmentResult(seg, rc, ip, driving_score(rc, ip),
                                 dict(Counter(e.kind for e in owned[i]))))
    return out


def score_log(log, table: PenaltyTable = PenaltyTable()) -> RouteResult:
    """Score one :class:`~deskbench.sim.EpisodeLog` and its scenario segments."""
    h = log.header
    length = float(h["route_length"])
    rc = route_completion(log.distance, length)
    ip = infraction_penalty(log.events, table)
    segments = partition_route(h.get("scenarios", []), length)
    return RouteResult(str(h.get("route_id", "")), str(h.get("map", "")), str(h.get("planner", "")),
                       rc, ip, driving_score(rc, ip), dict(Counter(e.kind for e in log.events)),
                       log.termination, score_segments(segments, log.distance, log.events, table))


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


@dataclass(frozen=True)
class Triple:
    n: int
    ds: float
    rc: float
    ip: float

    @classmethod
    def of(cls, items):
        items = list(items)
        return cls(len(items), _mean(i.ds for i in items), _mean(i.rc for i in items),
                   _mean(i.ip for i in items))


@dataclass
class ScoreReport:
    rows: list  # RouteResult, sorted by (planner, map, route id)
    templates: dict  # planner -> template -> Triple over tagged segments
    maps: dict  # planner -> map -> Triple over routes
    grand: dict  # planner -> Triple over routes

    @property
    def planners(self) -> list:
        return sorted({r.planner for r in self.rows})

    def scenario_mean(self, planner) -> Triple:
        return Triple.of(self.templates[planner].values())

    def map_mean(self, planner) -> Triple:
        return Triple.of(self.maps[planner].values())

    def to_text(self) -> str:
        return render_text(self)

    def to_csv(self) -> str:
        return render_csv(self)


def decompose_and_aggregate(results) -> ScoreReport:
    rows = sorted(results, key=lambda r: (r.planner, r.map, r.route_id))
    templates, maps, grand = {}, {}, {}
    by_planner = defaultdict(list)
    for r in rows:
        by_planner[r.planner].append(r)
    for planner, rs in by_planner.items():
        segs = defaultdict(list)
        per_map = defaultdict(list)
        for r in rs:
            per_map[r.map].append(r)
            for s in r.segments:
                if s.segment.template is not None:
                    segs[s.segment.template].append(s)
        templates[planner] = {t: Triple.of(v) for t, v in sorted(segs.items())}
        maps[planner] = {m: Triple.of(v) for m, v in sorted(per_map.items())}
        grand[planner] = Triple.of(rs)
    return ScoreReport(rows, templates, maps, grand)


# -- rendering ---------------------------------------------------------------

def _fmt(v) -> str:
    return "-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.1f}"


def _table(title, header, body) -> str:
    rows = [header] + [r for r in body if r is not None]
    widths = [max(len(str(row[i])) for row in rows) for i in range(len(header))]
    rule = "-" * (sum(widths) + 3 * (len(widths) - 1))
    lines = [title, rule]
    for n, row in enumerate([header] + body):
        if row is None:
            lines.append(rule)
            continue
        cells = [str(row[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("   ".join(cells).rstrip())
        if n == 0:
            lines.append(rule)
    lines.append(rule)
    return "\n".join(lines)


def _metric_table(report: ScoreReport, metric: str, title: str) -> str:
    planners = report.planners
    body = []
    maps = sorted({m for p in planners for m in report.maps[p]})
    for m in maps:
        body.append([m] + [_fmt(getattr(report.maps[p].get(m), metric, None)) for p in planners])
    for _, members in CATEGORIES:
        present = [t for t in members if any(t in report.templates[p] for p in planners)]
        if not present:
            continue
        body.append(None)
        for t in present:
            body.append([t] + [_fmt(getattr(report.templates[p].get(t), metric, None))
                               for p in planners])
        if len(present) > 1:
            body.append(["Average"] + [
                _fmt(_mean(getattr(report.templates[p][t], metric)
                           for t in present if t in report.templates[p]))
                for p in planners])
    if body and body[0] is None:
        body = body[1:]
    return _table(title, ["Scenario or map"] + planners, body)


def render_text(report: ScoreReport) -> str:
    """Aligned plain-text tables: aggregated, then DS / RC / IP per map and scenario."""
    agg = []
    for p in report.planners:
        s, m = report.scenario_mean(p), report.map_mean(p)
        agg.append([p, _fmt(s.ds), _fmt(s.rc), _fmt(s.ip), _fmt(m.ds), _fmt(m.rc), _fmt(m.ip)])
    parts = [
        _table("Aggregated results (scenario means | map means)",
               ["Planner", "Scen DS", "Scen RC", "Scen IP", "Map DS", "Map RC", "Map IP"], agg),
        _metric_table(report, "ds", "Driving score (DS) per map and scenario"),
        _metric_table(report, "rc", "Route completion (RC) per map and scenario"),
        _metric_table(report, "ip", "Infraction penalty (IP) per map and scenario"),
    ]
    routes = [[r.planner, r.map, r.route_id, _fmt(r.rc), _fmt(r.ip), _fmt(r.ds), r.termination]
              for r in report.rows]
    parts.append(_table("Per-route results",
                        ["Planner", "Map", "Route", "RC", "IP", "DS", "Termination"], routes))
    return "\n\n".join(parts) + "\n"


def render_csv(report: ScoreReport) -> str:
    """Machine-readable records: one line per route, segment and aggregate."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "planner", "map", "route", "template", "start", "end", "n",
                "rc", "ip", "ds", "termination"])

    def num(v):
        return repr(round(float(v), 9))

    for r in report.rows:
        w.writerow(["route", r.planner, r.map, r.route_id, "", "", "", 1,
                    num(r.rc), num(r.ip), num(r.ds), r.termination])
        for s in r.segments:
            w.writerow(["segment", r.planner, r.map, r.route_id, s.segment.template or "",
                        num(s.segment.start), num(s.segment.end), 1,
                        num(s.rc), num(s.ip), num(s.ds), ""])
    for p in report.planners:
        for t, tr in report.templates[p].items():
            w.writerow(["template", p, "", "", t, "", "", tr.n, num(tr.rc), num(tr.ip), num(tr.ds), ""])
        for m, tr in report.maps[p].items():
            w.writerow(["map", p, m, "", "", "", "", tr.n, num(tr.rc), num(tr.ip), num(tr.ds), ""])
        g = report.grand[p]
        w.writerow(["grand", p, "", "", "", "", "", g.n, num(g.rc), num(g.ip), num(g.ds), ""])
    return buf.getvalue()
