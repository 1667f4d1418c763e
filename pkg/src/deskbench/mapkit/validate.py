"""Consistency checks between a parsed road network and its sampled lane graph."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .opendrive import Road, RoadNetwork
from .route import lane_components
from .vectormap import VectorMap


@dataclass(frozen=True)
class RoadCheck:
    road_id: str
    declared: float  # road length attribute
    sampled: float  # length of the sampled reference polyline

    @property
    def relative_error(self) -> float:
        return abs(self.sampled - self.declared) / self.declared


@dataclass(frozen=True)
class MapCheck:
    roads: tuple
    lanes: int
    components: int
    traffic_controls: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return all(r.relative_error <= self.tolerance for r in self.roads)

    def summary(self) -> str:
        lines = [f"roads {len(self.roads)}, lanes {self.lanes}, connected components {self.components}, "
                 f"traffic controls {self.traffic_controls}"]
        for r in self.roads:
            flag = "ok" if r.relative_error <= self.tolerance else "MISMATCH"
            lines.append(f"  road {r.road_id}: declared {r.declared:.3f} m, sampled {r.sampled:.3f} m, "
                         f"rel. error {r.relative_error:.2e} {flag}")
        return "\n".join(lines)


def sample_reference_line(road: Road, spacing: float = 0.5) -> np.ndarray:
    """``(n, 3)`` x, y, heading samples of the reference line at most ``spacing`` apart."""
    n = max(1, int(math.ceil(road.length / spacing)))
    return np.array([road.reference_pose(s)[:3] for s in np.linspace(0.0, road.length, n + 1)])


def check_map(network: RoadNetwork, vmap: VectorMap, spacing: float = 0.5,
              tolerance: float = 1e-3) -> MapCheck:
    roads = []
    for rid in sorted(network.roads):
        road = network.roads[rid]
        pts = sample_reference_line(road, spacing)
        sampled = float(np.hypot(*np.diff(pts[:, :2], axis=0).T).sum())
        roads.append(RoadCheck(rid, float(road.length), sampled))
    return MapCheck(tuple(roads), len(vmap.lanes), len(lane_components(vmap)),
                    len(network.traffic_controls), tolerance)
