"""Kinematic-bicycle lane-following environment on a closed loop track.

The observation is an 18-dim numeric vector of path-relative errors,
their finite-difference rates, the previous command pair, and five
lookahead points of the reference path expressed in the vehicle frame.
The vehicle pose itself (world x, y, heading) is deliberately absent.

No reward is computed here; reward functions live in envs.rewards and
are applied only at evaluation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from ..seeding import substream
from .actions import ActionSpec, linetrack_action_spec
from .path import TrackPath, loop_track, wrap_angle

RAD2DEG = 180.0 / math.pi


def wrap_deg(a: float) -> float:
    """Wrap degrees to (-180, 180]; in-range values pass through untouched."""
    if -180.0 < a <= 180.0:
        return a
    r = math.fmod(a + 180.0, 360.0)
    if r <= 0.0:
        r += 360.0
    return r - 180.0


@dataclass(frozen=True)
class LineTrackConfig:
    dt: float = 0.05
    wheelbase: float = 0.26
    a_max: float = 2.0          # throttle-to-acceleration gain
    drag: float = 0.5           # linear speed damping
    v_ref: float = 3.0
    straight_len: float = 15.0
    radius: float = 15.0 / math.pi   # loop length 2*15 + 2*pi*r = 60 m
    steer_limit: float = 0.8
    steering_bins: int = 7
    throttle_values: tuple[float, ...] = (0.6, 0.8, 1.0)
    off_track_ey: float = 1.5
    step_limit: int = 450
    lookahead_offsets: tuple[float, ...] = (0.4, 0.8, 1.2, 1.6, 2.0)
    # randomized-reset jitter ranges
    jitter_ey: float = 0.3
    jitter_ephi_deg: float = 10.0
    jitter_v: tuple[float, float] = (0.85, 1.10)

    def to_dict(self) -> dict:
        return {
            "kind": "linetrack", "dt": self.dt, "wheelbase": self.wheelbase,
            "a_max": self.a_max, "drag": self.drag, "v_ref": self.v_ref,
            "straight_len": self.straight_len, "radius": self.radius,
            "steer_limit": self.steer_limit, "steering_bins": self.steering_bins,
            "throttle_values": list(self.throttle_values),
            "off_track_ey": self.off_track_ey, "step_limit": self.step_limit,
            "lookahead_offsets": list(self.lookahead_offsets),
        }


@dataclass
class StepResult:
    state: np.ndarray
    done: bool
    info: dict = field(default_factory=dict)


class LineTrack:
    """state layout:
    [0] prev steering command        [1] prev throttle command
    [2] e_y  signed lateral (m)      [3] e_y rate (m/s)
    [4] e_phi heading error (deg)    [5] e_phi rate (deg/s)
    [6] e_v = v - v_ref (m/s)        [7] e_v rate (m/s^2)
    [8:18] five lookahead path points, vehicle frame (x_fwd, y_left) each

    e_phi is continuous within an episode: it starts rewrapped at reset and
    accumulates per-step increments afterwards, so a spinning vehicle sees
    e.g. 190 rather than a jump to -170.  The info dict always reports the
    rewrapped angle.
    """

    STATE_DIM = 18

    def __init__(self, config: LineTrackConfig | None = None):
        self.config = config or LineTrackConfig()
        c = self.config
        self.path: TrackPath = loop_track(c.straight_len, c.radius)
        self.action_spec: ActionSpec = linetrack_action_spec(
            c.steer_limit, c.steering_bins, c.throttle_values)
        self._ready = False

    @property
    def state_dim(self) -> int:
        return self.STATE_DIM

    @property
    def state_shape(self) -> tuple[int, ...]:
        return (self.STATE_DIM,)

    @property
    def pose(self) -> tuple[float, float, float, float]:
        """(x, y, heading, speed) world pose; not part of the observation."""
        return (self._x, self._y, self._heading, self._v)

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int | None = None,
              start: tuple[float, float, float, float] | None = None) -> np.ndarray:
        c = self.config
        if start is not None:
            x, y, heading, v = (float(q) for q in start)
        elif seed is not None:
            rng = substream(seed, "linetrack-reset")
            s0 = rng.uniform(0.0, self.path.length)
            e_y0 = rng.uniform(-c.jitter_ey, c.jitter_ey)
            e_phi0 = math.radians(rng.uniform(-c.jitter_ephi_deg, c.jitter_ephi_deg))
            v = c.v_ref * rng.uniform(*c.jitter_v)
            qx, qy = self.path.point(s0)
            tang = self.path.tangent(s0)
            x = qx - e_y0 * math.sin(tang)
            y = qy + e_y0 * math.cos(tang)
            heading = wrap_angle(tang + e_phi0)
        else:
            x, y = self.path.point(0.0)
            heading = self.path.tangent(0.0)
            v = c.v_ref
        self._x, self._y, self._heading, self._v = x, y, heading, v
        self._prev_steer = 0.0
        self._prev_throttle = min(max(c.drag * v / c.a_max, c.throttle_values[0]),
                                  c.throttle_values[-1])
        s, e_y, tang = self.path.locate(x, y)
        self._s = s
        self._e_y = e_y
        self._e_phi = wrap_deg((heading - tang) * RAD2DEG)
        self._e_v = v - c.v_ref
        self._d_ey = 0.0
        self._d_ephi = 0.0
        self._d_ev = 0.0
        self._steps = 0
        self._progress = 0.0
        self._ready = True
        return self._observe()

    def snapshot(self) -> dict:
        """Full internal state; restore() replays from exactly here."""
        self._require_ready()
        return {
            "x": self._x, "y": self._y, "heading": self._heading, "v": self._v,
            "prev_steer": self._prev_steer, "prev_throttle": self._prev_throttle,
            "s": self._s, "e_y": self._e_y, "e_phi": self._e_phi, "e_v": self._e_v,
            "d_ey": self._d_ey, "d_ephi": self._d_ephi, "d_ev": self._d_ev,
            "steps": self._steps, "progress": self._progress,
        }

    def restore(self, snap: dict) -> np.ndarray:
        self._x, self._y = snap["x"], snap["y"]
        self._heading, self._v = snap["heading"], snap["v"]
        self._prev_steer = snap["prev_steer"]
        self._prev_throttle = snap["prev_throttle"]
        self._s, self._e_y = snap["s"], snap["e_y"]
        self._e_phi, self._e_v = snap["e_phi"], snap["e_v"]
        self._d_ey, self._d_ephi, self._d_ev = snap["d_ey"], snap["d_ephi"], snap["d_ev"]
        self._steps, self._progress = snap["steps"], snap["progress"]
        self._ready = True
        return self._observe()

    # -- dynamics ----------------------------------------------------------

    def step(self, action) -> StepResult:
        self._require_ready()
        c = self.config
        steer, throttle = self._validate_action(action)

        # explicit Euler; pose advances with the pre-update speed, so a
        # stationary vehicle stays put for exactly one step regardless of
        # throttle
        v_old = self._v
        self._x += v_old * math.cos(self._heading) * c.dt
        self._y += v_old * math.sin(self._heading) * c.dt
        self._heading = wrap_angle(
            self._heading + (v_old / c.wheelbase) * math.tan(steer) * c.dt)
        self._v = v_old + (c.a_max * throttle - c.drag * v_old) * c.dt

        s_new, e_y_new, tang = self.path.locate(self._x, self._y)
        # e_phi advances by the wrapped per-step increment, so the observation
        # stays continuous within an episode instead of jumping 360 at the
        # +/-180 cut (one step can never rotate 180 relative to the path).
        # info reports the rewrapped angle for reward/diagnostic use.
        delta_phi = wrap_deg(
            wrap_deg((self._heading - tang) * RAD2DEG) - wrap_deg(self._e_phi))
        e_phi_new = self._e_phi + delta_phi
        e_v_new = self._v - c.v_ref

        self._d_ey = (e_y_new - self._e_y) / c.dt
        self._d_ephi = delta_phi / c.dt
        self._d_ev = (e_v_new - self._e_v) / c.dt
        self._progress += self.path.delta_s(self._s, s_new)
        self._s, self._e_y, self._e_phi, self._e_v = s_new, e_y_new, e_phi_new, e_v_new
        self._prev_steer, self._prev_throttle = steer, throttle
        self._steps += 1

        off_track = abs(self._e_y) > c.off_track_ey
        goal = self._progress >= self.path.length
        timeout = self._steps >= c.step_limit
        done = off_track or goal or timeout
        info = {
            "v": self._v, "e_y": self._e_y, "e_phi_deg": wrap_deg(self._e_phi),
            "e_beta_deg": 0.0, "off_track": off_track, "collision": False,
            "goal": goal, "timeout": timeout, "progress": self._progress,
            "steps": self._steps,
        }
        return StepResult(self._observe(), done, info)

    # -- helpers -----------------------------------------------------------

    def _validate_action(self, action) -> tuple[float, float]:
        c = self.config
        try:
            steer, throttle = float(action[0]), float(action[1])
        except (TypeError, ValueError, IndexError) as exc:
            raise UsageError(f"action must be a (steering, throttle) pair: {exc}")
        if not (math.isfinite(steer) and math.isfinite(throttle)):
            raise UsageError("action components must be finite")
        tol = 1e-9
        if abs(steer) > c.steer_limit + tol:
            raise UsageError(f"steering {steer} outside [-{c.steer_limit}, {c.steer_limit}]")
        lo, hi = c.throttle_values[0], c.throttle_values[-1]
        if not (lo - tol <= throttle <= hi + tol):
            raise UsageError(f"throttle {throttle} outside [{lo}, {hi}]")
        return steer, throttle

    def _observe(self) -> np.ndarray:
        c = self.config
        out = np.empty(self.STATE_DIM)
        out[0] = self._prev_steer
        out[1] = self._prev_throttle
        out[2] = self._e_y
        out[3] = self._d_ey
        out[4] = self._e_phi
        out[5] = self._d_ephi
        out[6] = self._e_v
        out[7] = self._d_ev
        cos_h, sin_h = math.cos(self._heading), math.sin(self._heading)
        for k, offset in enumerate(c.lookahead_offsets):
            px, py = self.path.point(self._s + offset)
            dx, dy = px - self._x, py - self._y
            out[8 + 2 * k] = cos_h * dx + sin_h * dy      # forward
            out[9 + 2 * k] = -sin_h * dx + cos_h * dy     # left
        return out

    def _require_ready(self):
        if not self._ready:
            raise UsageError("call reset() before stepping")
