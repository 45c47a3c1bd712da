"""Optimizers, gradient clipping, and learning-rate schedules.

The primary optimizer keeps factored second-moment estimates for
matrix-shaped parameters (rows/columns of the squared gradient), which
reconstructs the full second moment exactly when the squared gradient
is rank one.  The relative-step and parameter-scaling features are
disabled: the caller always supplies an explicit learning rate.
A standard first/second-moment optimizer is available as a fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from .params import ParamSet

ADAFACTOR_EPS1 = 1e-30
ADAFACTOR_DECAY_POWER = 0.8
ADAFACTOR_CLIP = 1.0
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimState:
    algorithm: str
    step: int = 0
    slots: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)


def init_optim(params: ParamSet, algorithm: str = "adafactor") -> OptimState:
    if algorithm not in ("adafactor", "adam"):
        raise ConfigurationError(f"unknown optimizer algorithm {algorithm!r}")
    slots: dict[str, dict[str, np.ndarray]] = {}
    for name, e in params.items():
        shape = e.array.shape
        if algorithm == "adam":
            slots[name] = {"m": np.zeros(shape), "v": np.zeros(shape)}
        elif e.array.ndim >= 2:
            d0 = shape[0]
            d1 = e.array.size // d0
            slots[name] = {"row": np.zeros(d0), "col": np.zeros(d1)}
        else:
            slots[name] = {"v": np.zeros(shape)}
    return OptimState(algorithm=algorithm, slots=slots)


def optimizer_step(params: ParamSet, grads: dict[str, np.ndarray],
                   state: OptimState, lr: float) -> None:
    """Apply one in-place update.  Frozen entries and their slots are untouched."""
    for name, e in params.items():
        if e.frozen:
            continue
        if name not in state.slots:
            raise ConfigurationError(f"optimizer state is missing parameter {name!r}")
        if name not in grads:
            raise ConfigurationError(f"gradient dict is missing parameter {name!r}")
        if grads[name].shape != e.array.shape:
            raise ConfigurationError(
                f"gradient shape {grads[name].shape} does not match parameter "
                f"{name!r} shape {e.array.shape}")
    t = state.step + 1
    if state.algorithm == "adafactor":
        beta2t = 1.0 - t ** (-ADAFACTOR_DECAY_POWER)
        for name, e in params.items():
            if e.frozen:
                continue
            g = np.asarray(grads[name], dtype=np.float64)
            g2 = g * g + ADAFACTOR_EPS1
            slot = state.slots[name]
            if e.array.ndim >= 2:
                d0 = e.array.shape[0]
                g2m = g2.reshape(d0, -1)
                row, col = slot["row"], slot["col"]
                row *= beta2t
                row += (1.0 - beta2t) * g2m.mean(axis=1)
                col *= beta2t
                col += (1.0 - beta2t) * g2m.mean(axis=0)
                # rank-1 reconstruction: vhat[i,j] = (row[i]/mean(row)) * col[j]
                r = row / row.mean()
                update = (g.reshape(d0, -1) / np.sqrt(np.outer(r, col))).reshape(e.array.shape)
            else:
                v = slot["v"]
                v *= beta2t
                v += (1.0 - beta2t) * g2
                update = g / np.sqrt(v)
            rms = math.sqrt(float(np.mean(update * update)))
            if rms > ADAFACTOR_CLIP:
                update = update / (rms / ADAFACTOR_CLIP)
            e.array -= lr * update
    elif state.algorithm == "adam":
        bc1 = 1.0 - ADAM_BETA1 ** t
        bc2 = 1.0 - ADAM_BETA2 ** t
        for name, e in params.items():
            if e.frozen:
                continue
            g = np.asarray(grads[name], dtype=np.float64)
            slot = state.slots[name]
            m, v = slot["m"], slot["v"]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            e.array -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    else:
        raise ConfigurationError(f"unknown optimizer algorithm {state.algorithm!r}")
    state.step = t


def clip_global_norm(grads: dict[str, np.ndarray],
                     max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients by max_norm/norm when the global L2 norm exceeds max_norm.

    Below the threshold, the input dict is returned unmodified (same arrays).
    """
    if max_norm <= 0:
        raise ConfigurationError(f"max_norm must be positive, got {max_norm}")
    total = 0.0
    for g in grads.values():
        g64 = np.asarray(g, dtype=np.float64)
        total += float(np.dot(g64.reshape(-1), g64.reshape(-1)))
    norm = math.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}, norm


def lr_schedule(kind: str, base_lr: float, step: int, *,
                total_steps: int | None = None,
                decay_every: int | None = None,
                decay_factor: float | None = None) -> float:
    """Learning rate at a given step.

    constant: base_lr
    cosine:   base_lr * 0.5 * (1 + cos(pi * step / total_steps))
    step:     base_lr * decay_factor ** (step // decay_every)
    """
    if base_lr <= 0:
        raise ConfigurationError(f"base learning rate must be positive, got {base_lr}")
    if step < 0:
        raise ConfigurationError(f"schedule step must be >= 0, got {step}")
    if kind == "constant":
        return base_lr
    if kind == "cosine":
        if not total_steps or total_steps < 1:
            raise ConfigurationError("cosine schedule requires total_steps >= 1")
        t = min(step, total_steps)
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * t / total_steps))
    if kind == "step":
        if not decay_every or decay_every < 1:
            raise ConfigurationError("step schedule requires decay_every >= 1")
        if decay_factor is None or not (0.0 < decay_factor <= 1.0):
            raise ConfigurationError("step schedule requires decay_factor in (0, 1]")
        return base_lr * decay_factor ** (step // decay_every)
    raise ConfigurationError(f"unknown schedule kind {kind!r}")
