"""Image-observation lane-following environment.

The agent moves at constant speed on a closed loop and only chooses a
turn direction each step.  Observations are synthetic ego-frame images
(3 channels, 24x32, values in [0, 1]) rendered from the pose: a road
mask, a smooth distance-to-centerline field, and a signed lateral-side
channel.  The pose itself is never observed.

Track geometry keeps legitimate cornering below the spin detector:
a semicircle takes 60 steps at full speed, so the largest on-path
heading change inside the 50-step window is 150 degrees, under the
180-degree trigger.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from ..seeding import substream
from .actions import ActionSpec, pixeltrack_action_spec
from .linetrack import StepResult, wrap_deg
from .path import TrackPath, loop_track, wrap_angle

RAD2DEG = 180.0 / math.pi


@dataclass(frozen=True)
class PixelTrackConfig:
    dt: float = 0.05
    speed: float = 3.0
    turn_rate_deg_s: float = 180.0
    straight_len: float = 3.0
    radius: float = 9.0 / math.pi    # loop length 2*3 + 2*pi*r = 24 m
    half_width: float = 0.5
    img_height: int = 24
    img_width: int = 32
    scale: float = 0.1               # metres per pixel
    agent_row: int = 20              # pixel row of the vehicle position
    step_limit: int = 400
    half_circle_window: int = 50
    half_circle_threshold_deg: float = 180.0
    jitter_ey: float = 0.15
    jitter_ephi_deg: float = 10.0

    def to_dict(self) -> dict:
        return {
            "kind": "pixeltrack", "dt": self.dt, "speed": self.speed,
            "turn_rate_deg_s": self.turn_rate_deg_s,
            "straight_len": self.straight_len, "radius": self.radius,
            "half_width": self.half_width, "img_height": self.img_height,
            "img_width": self.img_width, "scale": self.scale,
            "agent_row": self.agent_row, "step_limit": self.step_limit,
            "half_circle_window": self.half_circle_window,
            "half_circle_threshold_deg": self.half_circle_threshold_deg,
        }


class PixelTrack:

    def __init__(self, config: PixelTrackConfig | None = None):
        self.config = config or PixelTrackConfig()
        c = self.config
        self.path: TrackPath = loop_track(c.straight_len, c.radius)
        self.action_spec: ActionSpec = pixeltrack_action_spec()
        self._polyline = self.path.sample(0.02)
        n = len(self._polyline)
        tangents = np.array([self.path.tangent(i * self.path.length / n)
                             for i in range(n)])
        self._poly_tan = np.stack([np.cos(tangents), np.sin(tangents)], axis=1)
        # vehicle-frame pixel coordinates, row-major (x forward, y left)
        rows = np.arange(c.img_height)
        cols = np.arange(c.img_width)
        vf_x = (c.agent_row - rows)[:, None] * c.scale + np.zeros((1, c.img_width))
        vf_y = ((c.img_width - 1) / 2.0 - cols)[None, :] * c.scale + np.zeros((c.img_height, 1))
        self._vf = np.stack([vf_x, vf_y], axis=-1).reshape(-1, 2)
        self._ready = False

    @property
    def state_shape(self) -> tuple[int, ...]:
        return (3, self.config.img_height, self.config.img_width)

    @property
    def pose(self) -> tuple[float, float, float, float]:
        return (self._x, self._y, self._heading, self.config.speed)

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int | None = None,
              start: tuple[float, float, float, float] | None = None) -> np.ndarray:
        c = self.config
        if start is not None:
            self._x, self._y, self._heading = (float(q) for q in start[:3])
        elif seed is not None:
            rng = substream(seed, "pixeltrack-reset")
            s0 = rng.uniform(0.0, self.path.length)
            e_y0 = rng.uniform(-c.jitter_ey, c.jitter_ey)
            e_phi0 = math.radians(rng.uniform(-c.jitter_ephi_deg, c.jitter_ephi_deg))
            qx, qy = self.path.point(s0)
            tang = self.path.tangent(s0)
            self._x = qx - e_y0 * math.sin(tang)
            self._y = qy + e_y0 * math.cos(tang)
            self._heading = wrap_angle(tang + e_phi0)
        else:
            self._x, self._y = self.path.point(0.0)
            self._heading = self.path.tangent(0.0)
        s, _, _ = self.path.locate(self._x, self._y)
        self._s = s
        self._progress = 0.0
        self._steps = 0
        self._turns = deque(maxlen=c.half_circle_window)
        self._ready = True
        return self.render()

    def snapshot(self) -> dict:
        self._require_ready()
        return {
            "x": self._x, "y": self._y, "heading": self._heading,
            "s": self._s, "progress": self._progress, "steps": self._steps,
            "turns": list(self._turns),
        }

    def restore(self, snap: dict) -> np.ndarray:
        self._x, self._y, self._heading = snap["x"], snap["y"], snap["heading"]
        self._s, self._progress = snap["s"], snap["progress"]
        self._steps = snap["steps"]
        self._turns = deque(snap["turns"], maxlen=self.config.half_circle_window)
        self._ready = True
        return self.render()

    # -- dynamics ----------------------------------------------------------

    def step(self, action) -> StepResult:
        self._require_ready()
        c = self.config
        direction = self._validate_action(action)

        d_heading = direction * math.radians(c.turn_rate_deg_s) * c.dt
        self._x += c.speed * math.cos(self._heading) * c.dt
        self._y += c.speed * math.sin(self._heading) * c.dt
        self._heading = wrap_angle(self._heading + d_heading)
        self._turns.append(d_heading * RAD2DEG)
        self._steps += 1

        s_new, e_y, tang = self.path.locate(self._x, self._y)
        self._progress += self.path.delta_s(self._s, s_new)
        self._s = s_new
        e_phi = wrap_deg((self._heading - tang) * RAD2DEG)

        half_circle = abs(sum(self._turns)) >= c.half_circle_threshold_deg
        if half_circle:
            # one penalty per spin event, not one per subsequent step
            self._turns.clear()
        off_track = abs(e_y) > c.half_width
        goal = self._progress >= self.path.length
        timeout = self._steps >= c.step_limit
        done = off_track or goal or timeout
        info = {
            "v": c.speed, "e_y": e_y, "e_phi_deg": e_phi,
            "off_track": off_track, "collision": False,
            "turning": direction != 0.0, "half_circle": half_circle,
            "goal": goal, "timeout": timeout, "progress": self._progress,
            "steps": self._steps,
        }
        return StepResult(self.render(), done, info)

    # -- rendering ---------------------------------------------------------

    def render(self) -> np.ndarray:
        """Deterministic (3, H, W) float image of the road around the pose."""
        self._require_ready()
        c = self.config
        cos_h, sin_h = math.cos(self._heading), math.sin(self._heading)
        # vehicle frame -> world: world = pos + R @ (x_fwd, y_left)
        wx = self._x + cos_h * self._vf[:, 0] - sin_h * self._vf[:, 1]
        wy = self._y + sin_h * self._vf[:, 0] + cos_h * self._vf[:, 1]
        pts = np.stack([wx, wy], axis=1)
        diff = pts[:, None, :] - self._polyline[None, :, :]
        d2 = np.einsum("pki,pki->pk", diff, diff)
        nearest = np.argmin(d2, axis=1)
        dist = np.sqrt(d2[np.arange(len(pts)), nearest])
        tan = self._poly_tan[nearest]
        rel = pts - self._polyline[nearest]
        side = np.sign(tan[:, 0] * rel[:, 1] - tan[:, 1] * rel[:, 0])
        signed = side * dist

        road = (dist <= c.half_width).astype(np.float64)
        center = np.exp(-0.5 * (dist / (c.half_width / 2.0)) ** 2)
        lateral = road * (0.5 + 0.5 * np.clip(signed / c.half_width, -1.0, 1.0))
        img = np.stack([road, center, lateral], axis=0)
        return img.reshape(3, c.img_height, c.img_width)

    # -- helpers -----------------------------------------------------------

    def _validate_action(self, action) -> float:
        if isinstance(action, (tuple, list, np.ndarray)):
            if len(action) != 1:
                raise UsageError("pixeltrack action is a single turn direction")
            action = action[0]
        try:
            direction = float(action)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"turn direction must be numeric: {exc}")
        if direction not in (-1.0, 0.0, 1.0):
            raise UsageError(f"turn direction must be -1, 0, or 1, got {direction}")
        return direction

    def _require_ready(self):
        if not self._ready:
            raise UsageError("call reset() before stepping")
