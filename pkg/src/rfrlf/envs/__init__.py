"""Simulation environments and evaluation rewards."""

from ..errors import ConfigurationError
from .actions import (ActionFactor, ActionSpec, linetrack_action_spec,
                      pixeltrack_action_spec)
from .linetrack import LineTrack, LineTrackConfig, StepResult, wrap_deg
from .path import TrackPath, loop_track, wrap_angle
from .pixeltrack import PixelTrack, PixelTrackConfig
from .rewards import (angle_error_term, linetrack_reward, pixeltrack_reward,
                      K1, K2, W_EY, W_EPHI, W_EBETA)


def make_env(kind: str, config=None):
    """Factory over the environment registry; kind is 'linetrack' or 'pixeltrack'."""
    if kind == "linetrack":
        return LineTrack(config)
    if kind == "pixeltrack":
        return PixelTrack(config)
    raise ConfigurationError(f"unknown environment kind {kind!r}")


def env_config_from_dict(d: dict):
    """Rebuild a config dataclass from its to_dict() form (checkpoint metadata)."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "linetrack":
        d["throttle_values"] = tuple(d.get("throttle_values", (0.6, 0.8, 1.0)))
        d["lookahead_offsets"] = tuple(d.get("lookahead_offsets", (0.4, 0.8, 1.2, 1.6, 2.0)))
        return LineTrackConfig(**d)
    if kind == "pixeltrack":
        return PixelTrackConfig(**d)
    raise ConfigurationError(f"unknown environment kind {kind!r}")


__all__ = [
    "ActionFactor", "ActionSpec", "LineTrack", "LineTrackConfig",
    "PixelTrack", "PixelTrackConfig", "StepResult", "TrackPath",
    "angle_error_term", "env_config_from_dict", "linetrack_action_spec",
    "linetrack_reward", "loop_track", "make_env", "pixeltrack_action_spec",
    "pixeltrack_reward", "wrap_angle", "wrap_deg",
    "K1", "K2", "W_EY", "W_EPHI", "W_EBETA",
]
