"""Planar primitives used by the loss terms: distances, midpoints, headings.

Everything here works on plain floats / numpy arrays. The differentiable
counterparts used during training live in :mod:`neuroplan.losses`.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class GeometryError(ValueError):
    pass


class Point2(NamedTuple):
    x: float
    y: float

    @classmethod
    def of(cls, p) -> "Point2":
        x, y = float(p[0]), float(p[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise GeometryError(f"non-finite point ({x}, {y})")
        return cls(x, y)


class Polyline:
    """Ordered sequence of at least two distinct consecutive points."""

    __slots__ = ("points", "_midpoints", "_headings")

    def __init__(self, points):
        pts = np.array(points, dtype=float).reshape(-1, 2)
        if pts.shape[0] < 2:
            raise GeometryError(f"polyline needs at least 2 points, got {pts.shape[0]}")
        if not np.isfinite(pts).all():
            raise GeometryError("polyline has non-finite coordinates")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if (seg <= 0.0).any():
            i = int(np.argmax(seg <= 0.0))
            raise GeometryError(f"polyline has a zero-length segment at index {i}")
        pts.setflags(write=False)
        self.points = pts
        self._midpoints = None
        self._headings = None

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        return isinstance(other, Polyline) and np.array_equal(self.points, other.points)

    def __repr__(self):
        return f"Polyline(n={len(self)})"

    @property
    def midpoints(self) -> np.ndarray:
        if self._midpoints is None:
            p = self.points
            self._midpoints = (p[:-1] + p[1:]) / 2.0
        return self._midpoints

    @property
    def headings(self) -> np.ndarray:
        if self._headings is None:
            d = np.diff(self.points, axis=0)
            self._headings = np.arctan2(d[:, 1], d[:, 0])
        return self._headings

    def length(self) -> float:
        return float(np.hypot(*np.diff(self.points, axis=0).T).sum())

    def translated(self, dx: float, dy: float) -> "Polyline":
        return Polyline(self.points + np.array([dx, dy]))


def dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def midpoint(a, b) -> Point2:
    return Point2((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)


def wrap_angle(angle):
    """Wrap to (-pi, pi]. Works elementwise on arrays."""
    a = np.asarray(angle, dtype=float)
    w = np.mod(a + math.pi, 2.0 * math.pi) - math.pi
    # np.mod maps odd multiples of pi to -pi; the interval is closed at +pi
    w = np.where(w <= -math.pi, w + 2.0 * math.pi, w)
    # angles already in range pass through untouched (no rounding drift)
    w = np.where((a > -math.pi) & (a <= math.pi), a, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


def nearest_segment(poly: Polyline, q, mode: str = "midpoint") -> tuple[int, float]:
    """Index of the segment closest to ``q`` and that distance.

    ``mode="midpoint"`` measures to each segment's midpoint (the rule the
    cross-track loss uses); ``mode="segment"`` uses true point-to-segment
    distance. Ties go to the lowest index.
    """
    if not isinstance(poly, Polyline):
        poly = Polyline(poly)
    qx, qy = float(q[0]), float(q[1])
    if mode == "midpoint":
        m = poly.midpoints
        d = np.hypot(m[:, 0] - qx, m[:, 1] - qy)
    elif mode == "segment":
        d = point_segment_distances(poly.points, (qx, qy))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    i = int(np.argmin(d))
    return i, float(d[i])


def point_segment_distances(points: np.ndarray, q) -> np.ndarray:
    a = points[:-1]
    ab = points[1:] - a
    aq = np.asarray(q, dtype=float) - a
    t = np.clip((aq * ab).sum(axis=1) / (ab * ab).sum(axis=1), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.hypot(*(np.asarray(q, dtype=float) - closest).T)


def segment_heading(poly: Polyline, i: int) -> float:
    if not isinstance(poly, Polyline):
        poly = Polyline(poly)
    if not 0 <= i < len(poly) - 1:
        raise IndexError(f"segment index {i} out of range for {len(poly)} points")
    p, r = poly.points[i], poly.points[i + 1]
    return math.atan2(r[1] - p[1], r[0] - p[0])


def signed_side(poly: Polyline, q) -> float:
    """Signed distance of ``q`` from ``poly``: positive on the left of travel."""
    if not isinstance(poly, Polyline):
        poly = Polyline(poly)
    pts = poly.points
    d = point_segment_distances(pts, q)
    i = int(np.argmin(d))
    a, b = pts[i], pts[i + 1]
    cross = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
    return math.copysign(float(d[i]), cross) if cross != 0.0 else 0.0


def arc_lengths(points: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])

