"""Closed reference paths built from straight and circular-arc segments.

Paths are parameterized by arc length s in [0, length).  Nearest-point
queries are solved analytically per segment (projection onto a line
segment, or angle clamping on an arc), then the global minimum is
taken, so lateral errors are exact rather than grid-resolution bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]; in-range values pass through untouched."""
    if -math.pi < a <= math.pi:
        return a
    r = math.fmod(a + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


@dataclass(frozen=True)
class _Straight:
    s0: float
    length: float
    x0: float
    y0: float
    heading: float

    def point(self, t: float) -> tuple[float, float]:
        return (self.x0 + t * math.cos(self.heading),
                self.y0 + t * math.sin(self.heading))

    def tangent(self, t: float) -> float:
        return self.heading

    def curvature(self, t: float) -> float:
        return 0.0

    def nearest(self, px: float, py: float) -> tuple[float, float]:
        """Returns (distance, t along segment)."""
        cx, cy = math.cos(self.heading), math.sin(self.heading)
        t = (px - self.x0) * cx + (py - self.y0) * cy
        t = min(max(t, 0.0), self.length)
        qx, qy = self.point(t)
        return math.hypot(px - qx, py - qy), t


@dataclass(frozen=True)
class _Arc:
    s0: float
    length: float
    cx: float
    cy: float
    radius: float
    start_angle: float   # angle from center to the segment's first point
    sweep: float         # signed; positive = counterclockwise (left turn)

    def _angle_at(self, t: float) -> float:
        return self.start_angle + math.copysign(t / self.radius, self.sweep)

    def point(self, t: float) -> tuple[float, float]:
        a = self._angle_at(t)
        return (self.cx + self.radius * math.cos(a),
                self.cy + self.radius * math.sin(a))

    def tangent(self, t: float) -> float:
        a = self._angle_at(t)
        return wrap_angle(a + math.copysign(math.pi / 2.0, self.sweep))

    def curvature(self, t: float) -> float:
        return math.copysign(1.0 / self.radius, self.sweep)

    def nearest(self, px: float, py: float) -> tuple[float, float]:
        ang = math.atan2(py - self.cy, px - self.cx)
        rel = ang - self.start_angle
        if self.sweep >= 0:
            rel = rel % TWO_PI
            on_arc = rel <= self.sweep
        else:
            rel = (-rel) % TWO_PI
            on_arc = rel <= -self.sweep
        if on_arc:
            t = rel * self.radius
            d_center = math.hypot(px - self.cx, py - self.cy)
            return abs(d_center - self.radius), min(t, self.length)
        # off the swept range: nearest endpoint
        d0 = math.hypot(*(np.array(self.point(0.0)) - (px, py)))
        d1 = math.hypot(*(np.array(self.point(self.length)) - (px, py)))
        return (d0, 0.0) if d0 <= d1 else (d1, self.length)


class TrackPath:
    """A closed path assembled from ("straight", length) / ("arc", radius, sweep) moves."""

    def __init__(self, moves: list[tuple], x0: float = 0.0, y0: float = 0.0,
                 heading0: float = 0.0, closure_tol: float = 1e-6):
        segments = []
        x, y, heading = x0, y0, heading0
        s = 0.0
        for move in moves:
            kind = move[0]
            if kind == "straight":
                length = float(move[1])
                if length <= 0:
                    raise ConfigurationError("straight segment length must be positive")
                segments.append(_Straight(s, length, x, y, heading))
                x += length * math.cos(heading)
                y += length * math.sin(heading)
            elif kind == "arc":
                radius, sweep = float(move[1]), float(move[2])
                if radius <= 0 or sweep == 0:
                    raise ConfigurationError("arc needs positive radius and nonzero sweep")
                length = radius * abs(sweep)
                side = math.copysign(1.0, sweep)
                # center sits 90 degrees left of travel for sweep>0, right otherwise
                cx = x - side * radius * math.sin(heading)
                cy = y + side * radius * math.cos(heading)
                start_angle = math.atan2(y - cy, x - cx)
                segments.append(_Arc(s, length, cx, cy, radius, start_angle, sweep))
                end_angle = start_angle + sweep
                x = cx + radius * math.cos(end_angle)
                y = cy + radius * math.sin(end_angle)
                heading = wrap_angle(heading + sweep)
            else:
                raise ConfigurationError(f"unknown path move kind {kind!r}")
            s += segments[-1].length
        self.segments = segments
        self.length = s
        closes = (math.hypot(x - x0, y - y0) < closure_tol
                  and abs(wrap_angle(heading - heading0)) < closure_tol)
        if not closes:
            raise ConfigurationError(
                f"path does not close: end ({x:.6f},{y:.6f},{heading:.6f}) vs "
                f"start ({x0},{y0},{heading0})")
        self._s_starts = np.array([seg.s0 for seg in segments])

    def _segment_at(self, s: float):
        s = s % self.length
        idx = int(np.searchsorted(self._s_starts, s, side="right")) - 1
        seg = self.segments[idx]
        return seg, s - seg.s0

    def point(self, s: float) -> tuple[float, float]:
        seg, t = self._segment_at(s)
        return seg.point(t)

    def tangent(self, s: float) -> float:
        seg, t = self._segment_at(s)
        return seg.tangent(t)

    def curvature(self, s: float) -> float:
        seg, t = self._segment_at(s)
        return seg.curvature(t)

    def locate(self, px: float, py: float) -> tuple[float, float, float]:
        """Nearest path point to (px, py).

        Returns (s, signed lateral offset, tangent heading); the offset is
        positive when the query point lies left of the travel direction.
        Ties resolve to the smallest s for determinism.
        """
        best = None
        for candidate in self.segments:
            dist, t_cand = candidate.nearest(px, py)
            key = (dist, candidate.s0 + t_cand)
            if best is None or key < best[0]:
                best = (key, candidate, t_cand)
        _, seg, t = best
        s = seg.s0 + t
        qx, qy = seg.point(t)
        heading = seg.tangent(t)
        cross = math.cos(heading) * (py - qy) - math.sin(heading) * (px - qx)
        dist = math.hypot(px - qx, py - qy)
        e_y = math.copysign(dist, cross) if dist > 0 else 0.0
        return s, e_y, heading

    def delta_s(self, s_from: float, s_to: float) -> float:
        """Signed progress from s_from to s_to, wrapped to [-length/2, length/2)."""
        d = (s_to - s_from) % self.length
        if d >= self.length / 2.0:
            d -= self.length
        return d

    def sample(self, ds: float) -> np.ndarray:
        """Dense (N, 2) polyline at spacing ds (brute-force oracle / rendering aid)."""
        n = max(int(math.ceil(self.length / ds)), 8)
        pts = np.empty((n, 2))
        for i in range(n):
            pts[i] = self.point(i * self.length / n)
        return pts


def loop_track(straight_len: float, radius: float) -> TrackPath:
    """Rounded-rectangle loop: two straights joined by two left semicircles."""
    return TrackPath([
        ("straight", straight_len),
        ("arc", radius, math.pi),
        ("straight", straight_len),
        ("arc", radius, math.pi),
    ])
