"""Route extraction over the lane graph."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from ..errors import NoRouteError
from ..geometry import cumulative_length, project_onto_polyline
from .vectormap import VectorMap


@dataclass
class Route:
    points: np.ndarray  # (n, 3) x, y, heading
    speed_limits: np.ndarray
    lane_ids: list
    s: np.ndarray

    @property
    def total_length(self) -> float:
        return float(self.s[-1])

    @classmethod
    def from_points(cls, points, speed_limits, lane_ids=None) -> "Route":
        pts = np.asarray(points, dtype=float)
        limits = np.broadcast_to(np.asarray(speed_limits, dtype=float), (len(pts),)).copy()
        ids = list(lane_ids) if lane_ids is not None else [""] * len(pts)
        keep = [0]
        for i in range(1, len(pts)):
            if math.hypot(*(pts[i, :2] - pts[keep[-1], :2])) > 1e-9:
                keep.append(i)
        pts, limits = pts[keep], limits[keep]
        ids = [ids[i] for i in keep]
        return cls(pts, limits, ids, cumulative_length(pts))

    def pose_at(self, s: float):
        """Interpolated ``(x, y, heading)`` at arc length ``s`` (clamped)."""
        s = min(max(s, 0.0), self.total_length)
        i = int(np.searchsorted(self.s, s, side="right") - 1)
        i = min(max(i, 0), len(self.s) - 2)
        seg = self.s[i + 1] - self.s[i]
        t = (s - self.s[i]) / seg if seg > 0 else 0.0
        p, q = self.points[i], self.points[i + 1]
        x = p[0] + t * (q[0] - p[0])
        y = p[1] + t * (q[1] - p[1])
        heading = math.atan2(q[1] - p[1], q[0] - p[0])
        return x, y, heading

    def speed_limit_at(self, s: float) -> float:
        i = int(np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 1))
        return float(self.speed_limits[i])

    def project(self, point, hint: int = 0, window: int | None = None):
        """``(s, lateral, segment_index)`` of the closest point on the route."""
        if window is None:
            s, lat, idx, _ = project_onto_polyline(point, self.points, self.s)
        else:
            s, lat, idx, _ = project_onto_polyline(point, self.points, self.s,
                                                   hint - window // 4, hint + window)
        return s, lat, idx

    def neighbor_jumps(self, vmap: VectorMap) -> int:
        jumps = 0
        for a, b in zip(self.lane_ids, self.lane_ids[1:]):
            if a != b and b in (vmap.lanes[a].left_neighbor, vmap.lanes[a].right_neighbor):
                jumps += 1
        return jumps


def route_room(vmap: VectorMap, route: Route):
    """Drivable width left and right of each route point, from the nearest lane sample."""
    left = np.empty(len(route.points))
    right = np.empty(len(route.points))
    for i, (p, lid) in enumerate(zip(route.points, route.lane_ids)):
        lane = vmap.lanes[lid]
        j = int(np.argmin(np.hypot(*(lane.points[:, :2] - p[:2]).T)))
        left[i], right[i] = lane.drivable_left[j], lane.drivable_right[j]
    return left, right


def lane_components(vmap: VectorMap) -> list:
    """Weakly connected components of the lane graph (successor and neighbor links)."""
    adj = {k: set() for k in vmap.lanes}
    for k, lane in vmap.lanes.items():
        for other in lane.successors + [lane.left_neighbor, lane.right_neighbor]:
            if other:
                adj[k].add(other)
                adj[other].add(k)
    seen, comps = set(), []
    for k in sorted(adj):
        if k in seen:
            continue
        stack, comp = [k], set()
        while stack:
            n = stack.pop()
            if n in comp:
                continue
            comp.add(n)
            stack.extend(adj[n] - comp)
        seen |= comp
        comps.append(comp)
    return comps


def extract_route(vmap: VectorMap, start: tuple, goal: tuple,
                  lane_change_length: float = 10.0) -> Route:
    """Shortest lane-graph route from ``start=(lane_id, s)`` to ``goal=(lane_id, s)``.

    Lane changes jump to the neighbor lane ``lane_change_length`` further down
    the shared sample grid, right where the route enters the lane.
    """
    start_lane, start_s = start
    goal_lane, goal_s = goal
    for lid in (start_lane, goal_lane):
        vmap.lane(lid)
    i0 = vmap.lanes[start_lane].index_at(start_s)
    ig = vmap.lanes[goal_lane].index_at(goal_s)
    n_lc = max(1, int(round(lane_change_length / vmap.spacing)))

    arcs = {k: lane.s for k, lane in vmap.lanes.items()}
    # Dijkstra over (lane, entry index); predecessor map rebuilds the path
    best = {(start_lane, i0): 0.0}
    parent = {}
    heap = [(0.0, start_lane, i0)]
    found = None
    while heap:
        cost, lid, idx = heapq.heappop(heap)
        if found is not None and cost >= found[2]:
            break
        if best.get((lid, idx), math.inf) < cost:
            continue
        if lid == goal_lane and idx <= ig:
            total = cost + float(arcs[lid][ig] - arcs[lid][idx])
            if found is None or total < found[2]:
                found = (lid, idx, total)
        lane = vmap.lanes[lid]
        moves = []
        tail = float(arcs[lid][-1] - arcs[lid][idx])
        for succ in lane.successors:
            moves.append((succ, 0, tail))
        for nb in (lane.left_neighbor, lane.right_neighbor):
            if nb is None:
                continue
            j = idx + n_lc
            if j < len(vmap.lanes[nb].points):
                p = lane.points[idx, :2]
                q = vmap.lanes[nb].points[j, :2]
                moves.append((nb, j, float(np.hypot(*(q - p)))))
        for nxt, j, step in moves:
            c = cost + step
            if c < best.get((nxt, j), math.inf) - 1e-12:
                best[(nxt, j)] = c
                parent[(nxt, j)] = (lid, idx)
                heapq.heappush(heap, (c, nxt, j))
    if found is None:
        comps = lane_components(vmap)
        raise NoRouteError(
            f"goal {goal_lane}@{goal_s} unreachable from {start_lane}@{start_s}; "
            f"lane graph has {len(comps)} connected component(s)", comps)

    chain = [(found[0], found[1])]
    while chain[-1] in parent:
        chain.append(parent[chain[-1]])
    chain.reverse()

    pts, limits, ids = [], [], []
    for n, (lid, entry) in enumerate(chain):
        lane = vmap.lanes[lid]
        if n + 1 < len(chain):
            nxt_lane, _ = chain[n + 1]
            is_jump = nxt_lane in (lane.left_neighbor, lane.right_neighbor)
            stop = entry if is_jump else len(lane.points) - 1
        else:
            stop = ig
        seg = lane.points[entry:stop + 1]
        pts.append(seg)
        limits.extend([lane.speed_limit] * len(seg))
        ids.extend([lid] * len(seg))
    return Route.from_points(np.vstack(pts), limits, ids)
