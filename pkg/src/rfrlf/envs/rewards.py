"""Evaluation-only reward functions.

Nothing in the training pipeline reads these; they exist so that
evaluation runs can score policies on a scale comparable across
experiments.  Step info dicts from the environments carry every field
the reward functions need.
"""

from __future__ import annotations

import math

K1 = 0.5
K2 = 0.1
W_EY = 40.0
W_EPHI = 40.0
W_EBETA = 20.0

PIXEL_OFF_TRACK_PENALTY = -150.0
PIXEL_HALF_CIRCLE_PENALTY = -45.0


def angle_error_term(e_deg: float, k1: float = K1, k2: float = K2) -> float:
    """Bounded score for an angular error in degrees, wrapped to (-180, 180].

    Decays from 1 as |e| grows; beyond 90 degrees the sign flips and the
    magnitude decays toward the half-turn point, so driving backwards is
    penalized rather than merely unrewarded.
    """
    if abs(e_deg) < 90.0:
        return math.exp(-k1 * abs(e_deg))
    if e_deg >= 90.0:
        return -math.exp(-k2 * (180.0 - e_deg))
    return -math.exp(-k2 * (180.0 + e_deg))


def linetrack_reward(info: dict, k1: float = K1, k2: float = K2,
                     w_ey: float = W_EY, w_ephi: float = W_EPHI,
                     w_ebeta: float = W_EBETA) -> float:
    """Speed-scaled alignment score: v * (40*r_ey + 40*r_ephi + 20*r_ebeta).

    r_ey = exp(-k1*|e_y|); the angular terms share angle_error_term.
    Zero errors at v=1 score exactly 100.
    """
    v = info["v"]
    r_ey = math.exp(-k1 * abs(info["e_y"]))
    r_ephi = angle_error_term(info["e_phi_deg"], k1, k2)
    r_ebeta = angle_error_term(info.get("e_beta_deg", 0.0), k1, k2)
    return v * (w_ey * r_ey + w_ephi * r_ephi + w_ebeta * r_ebeta)


def pixeltrack_reward(info: dict) -> float:
    """Event-based score for the image environment.

    Precedence: leaving the track dominates, then the half-circle
    (cumulative heading change of at least 180 degrees inside the recent
    step window), then the turning discount, else speed itself.
    """
    if info.get("off_track") or info.get("collision"):
        return PIXEL_OFF_TRACK_PENALTY
    if info.get("half_circle"):
        return PIXEL_HALF_CIRCLE_PENALTY
    if info.get("turning"):
        return info["v"] / 2.0
    return info["v"]
