"""Per-element state standardization fitted from collected data.

Networks operate entirely in standardized space; environments stay
raw.  The fitted statistics ride along inside checkpoints as auxiliary
arrays so a saved model can be applied to raw states without the
original dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeMismatchError

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise ShapeMismatchError(
                f"mean shape {self.mean.shape} != std shape {self.std.shape}")
        if np.any(self.std <= 0):
            raise ConfigurationError("std entries must be positive")

    @classmethod
    def fit(cls, samples: np.ndarray, floor: float = STD_FLOOR) -> "Standardizer":
        """samples: (N, *state_shape); constant elements get std = floor."""
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim < 2 or len(samples) < 2:
            raise ConfigurationError("need at least 2 samples to fit")
        mean = samples.mean(axis=0)
        std = samples.std(axis=0)
        std = np.maximum(std, floor)
        return cls(mean=mean, std=std)

    @classmethod
    def identity(cls, shape: tuple[int, ...]) -> "Standardizer":
        return cls(mean=np.zeros(shape), std=np.ones(shape))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        return (x - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        self._check(z)
        return z * self.std + self.mean

    def _check(self, x: np.ndarray):
        if x.shape[-self.mean.ndim:] != self.mean.shape:
            raise ShapeMismatchError(
                f"trailing dims {x.shape} incompatible with {self.mean.shape}")
