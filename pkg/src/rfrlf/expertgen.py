"""Scripted expert controllers and demonstration recording.

Experts exist only to produce state trajectories; their actions are
used to drive the simulator during recording and are then thrown away.
Downstream training consumes nothing but the visited states (and, for
replay-alignment, the world poses stored alongside them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envs.linetrack import LineTrack, LineTrackConfig
from .envs.pixeltrack import PixelTrack
from .errors import ConfigurationError
from .seeding import substream_seed


@dataclass
class ExpertTrajectory:
    """One recorded episode: per-step observations plus world poses.

    states: (N, *state_shape); poses: (N, 4) rows of (x, y, heading, v).
    Index t of both arrays describes the same instant; no actions are kept.
    """
    states: np.ndarray
    poses: np.ndarray
    env_kind: str
    dt: float

    def __len__(self) -> int:
        return len(self.states)


def pure_pursuit_control(state: np.ndarray, config: LineTrackConfig,
                         lookahead_index: int = 2, kp_speed: float = 0.5):
    """Geometric steering + proportional throttle from an 18-dim observation.

    Steers toward one of the lookahead points already present in the
    state (default: the third, 1.2 m ahead) using the classic pursuit
    relation delta = atan(2 * wheelbase * sin(alpha) / d), where alpha
    is the bearing of the target point in the vehicle frame.
    """
    base = 8 + 2 * lookahead_index
    x_fwd, y_left = state[base], state[base + 1]
    d = math.hypot(x_fwd, y_left)
    if d < 1e-9:
        steer = 0.0
    else:
        alpha = math.atan2(y_left, x_fwd)
        steer = math.atan(2.0 * config.wheelbase * math.sin(alpha) / d)
    steer = min(max(steer, -config.steer_limit), config.steer_limit)

    v = state[6] + config.v_ref
    throttle = config.drag * config.v_ref / config.a_max + kp_speed * (config.v_ref - v)
    throttle = min(max(throttle, config.throttle_values[0]), config.throttle_values[-1])
    return steer, throttle


def centerline_control(env: PixelTrack, k_ey_deg: float = 40.0,
                       deadband_deg: float = 5.0) -> float:
    """Privileged bang-bang turn controller for the image environment.

    Reads the pose (which the learned policy never sees) to aim the
    heading at the centerline: target heading = path tangent corrected
    toward the line in proportion to the lateral error.  Returns the
    turn direction in {-1.0, 0.0, +1.0}.
    """
    x, y, heading, _ = env.pose
    _, e_y, tang = env.path.locate(x, y)
    target = tang - math.radians(min(max(k_ey_deg * e_y, -45.0), 45.0))
    err_deg = math.degrees(math.atan2(math.sin(heading - target),
                                      math.cos(heading - target)))
    if err_deg > deadband_deg:
        return -1.0
    if err_deg < -deadband_deg:
        return 1.0
    return 0.0


def default_controller(env):
    """Controller callable (env, state) -> action for a known env type."""
    if isinstance(env, LineTrack):
        cfg = env.config
        return lambda e, s: pure_pursuit_control(s, cfg)
    if isinstance(env, PixelTrack):
        return lambda e, s: centerline_control(e)
    raise ConfigurationError("no default controller for this environment")


def record_expert(env, n_episodes: int, seed: int,
                  controller=None, max_steps: int | None = None
                  ) -> list[ExpertTrajectory]:
    """Roll the expert controller for n_episodes seeded episodes.

    The controller is a callable (env, state) -> action.  Every episode
    gets its own derived seed, so recordings are reproducible given
    (env config, n_episodes, seed).  The trajectory keeps the
    observation and pose at every visited instant, including the
    terminal one.
    """
    if n_episodes < 1:
        raise ConfigurationError("need at least one expert episode")
    if controller is None:
        controller = default_controller(env)

    kind = "pixeltrack" if isinstance(env, PixelTrack) else "linetrack"
    out = []
    for ep in range(n_episodes):
        ep_seed = substream_seed(seed, "expert", str(ep))
        state = env.reset(seed=ep_seed)
        states = [state]
        poses = [env.pose]
        steps = 0
        limit = max_steps if max_steps is not None else env.config.step_limit
        while steps < limit:
            action = controller(env, state)
            res = env.step(action)
            state = res.state
            states.append(state)
            poses.append(env.pose)
            steps += 1
            if res.done:
                break
        out.append(ExpertTrajectory(
            states=np.stack(states), poses=np.array(poses, dtype=np.float64),
            env_kind=kind, dt=env.config.dt))
    return out


def trajectory_quality(trajectories: list[ExpertTrajectory]) -> dict:
    """Aggregate tracking statistics; numeric env only (e_y is state[2])."""
    if not trajectories:
        raise ConfigurationError("no trajectories given")
    abs_ey = np.concatenate([np.abs(t.states[:, 2]) for t in trajectories])
    lengths = np.array([len(t) for t in trajectories])
    return {
        "episodes": len(trajectories),
        "mean_abs_ey": float(abs_ey.mean()),
        "max_abs_ey": float(abs_ey.max()),
        "mean_length": float(lengths.mean()),
        "min_length": int(lengths.min()),
    }
