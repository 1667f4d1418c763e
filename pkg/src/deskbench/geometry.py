"""Planar geometry helpers shared across the benchmark.

Oriented boxes are ``(x, y, heading, length, width)`` with (x, y) at the box
center. Every heading difference in the package goes through :func:`wrap_angle`.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    a = np.asarray(angle, dtype=float)
    wrapped = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    # np.mod maps +pi to -pi; move that edge back to +pi
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    # in-range angles pass through untouched (no rounding drift)
    wrapped = np.where((a > -np.pi) & (a <= np.pi), a, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def angle_diff(a, b):
    """Signed smallest difference ``a - b`` in (-pi, pi]."""
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


class Box(NamedTuple):
    x: float
    y: float
    heading: float
    length: float
    width: float


def box_corners(box: Box) -> np.ndarray:
    """Corners of an oriented box, counter-clockwise, shape (4, 2)."""
    c, s = math.cos(box.heading), math.sin(box.heading)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([box.x, box.y])


def boxes_overlap(a: Box, b: Box) -> bool:
    """Separating-axis test for two oriented rectangles.

    Touching boxes (zero-width overlap) count as overlapping.
    """
    ca, cb = box_corners(a), box_corners(b)
    axes = (
        (math.cos(a.heading), math.sin(a.heading)),
        (-math.sin(a.heading), math.cos(a.heading)),
        (math.cos(b.heading), math.sin(b.heading)),
        (-math.sin(b.heading), math.cos(b.heading)),
    )
    for ax in axes:
        axis = np.asarray(ax)
        pa = ca @ axis
        pb = cb @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def points_in_box(points: np.ndarray, box: Box) -> np.ndarray:
    """Boolean mask of which (n, 2) points lie inside (or on) the box."""
    pts = np.atleast_2d(points) - np.array([box.x, box.y])
    c, s = math.cos(box.heading), math.sin(box.heading)
    lon = pts[:, 0] * c + pts[:, 1] * s
    lat = -pts[:, 0] * s + pts[:, 1] * c
    return (np.abs(lon) <= 0.5 * box.length) & (np.abs(lat) <= 0.5 * box.width)


def box_outline_points(box: Box, spacing: float = 0.5) -> np.ndarray:
    """Points sampled along the box perimeter at most ``spacing`` apart."""
    corners = box_corners(box)
    out = []
    for i in range(4):
        p, q = corners[i], corners[(i + 1) % 4]
        n = max(1, int(math.ceil(float(np.hypot(*(q - p))) / spacing)))
        t = np.arange(n)[:, None] / n
        out.append(p + t * (q - p))
    return np.vstack(out)


def cumulative_length(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length along a polyline, starting at 0."""
    seg = np.hypot(*np.diff(points[:, :2], axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def project_onto_polyline(point, points: np.ndarray, s: np.ndarray,
                          lo: int = 0, hi: int | None = None):
    """Project ``point`` onto segments ``lo..hi`` of a polyline.

    Returns ``(arc_s, signed_lateral, segment_index, foot_point)``. Lateral
    offset is positive to the left of the direction of travel.
    """
    p = np.asarray(point, dtype=float)[:2]
    hi = len(points) - 1 if hi is None else min(hi, len(points) - 1)
    lo = max(0, min(lo, hi - 1))
    a = points[lo:hi, :2]
    b = points[lo + 1:hi + 1, :2]
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd > 0.0, dd, 1.0)
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / dd, 0.0, 1.0)
    foot = a + t[:, None] * d
    dist2 = np.einsum("ij,ij->i", p - foot, p - foot)
    i = int(np.argmin(dist2))
    seg_len = math.hypot(d[i, 0], d[i, 1])
    arc = float(s[lo + i] + t[i] * seg_len)
    cross = d[i, 0] * (p[1] - a[i, 1]) - d[i, 1] * (p[0] - a[i, 0])
    lateral = math.sqrt(dist2[i]) * (1.0 if cross >= 0.0 else -1.0)
    return arc, lateral, lo + i, foot[i]


def interpolate_polyline(points: np.ndarray, s: np.ndarray, query) -> np.ndarray:
    """Linear interpolation of polyline columns at arc lengths ``query``.

    Heading-like columns must be unwrapped by the caller if needed.
    """
    q = np.clip(np.asarray(query, dtype=float), s[0], s[-1])
    return np.stack([np.interp(q, s, points[:, j]) for j in range(points.shape[1])], axis=-1)


def segment_crosses_polyline(a, b, path_xy, lo: int = 0, hi: int | None = None):
    """Index of the first polyline segment in ``lo..hi`` that the segment ``ab`` crosses, or None."""
    hi = len(path_xy) - 1 if hi is None else min(hi, len(path_xy) - 1)
    p = path_xy[lo:hi]
    q = path_xy[lo + 1:hi + 1]
    a, b = np.asarray(a), np.asarray(b)

    def orient(u, v, w):
        return (v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (w[..., 0] - u[..., 0])

    d1, d2 = orient(a, b, p), orient(a, b, q)
    d3, d4 = orient(p, q, a), orient(p, q, b)
    hit = np.nonzero((d1 * d2 <= 0) & (d3 * d4 <= 0))[0]
    return lo + int(hit[0]) if len(hit) else None
