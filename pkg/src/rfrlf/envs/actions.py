"""Factored discrete action spaces with one-hot encodings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, UsageError


@dataclass(frozen=True)
class ActionFactor:
    name: str
    values: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ActionSpec:
    """Joint action space as a product of independent discrete factors.

    The network-facing encoding is the concatenation of one one-hot
    block per factor, so the encoding dimension is the sum of factor
    sizes rather than their product.
    """

    factors: tuple[ActionFactor, ...]

    def __post_init__(self):
        if not self.factors:
            raise ConfigurationError("action spec needs at least one factor")
        for f in self.factors:
            if f.size < 2:
                raise ConfigurationError(f"factor {f.name!r} needs >= 2 values")

    @property
    def encoding_dim(self) -> int:
        return sum(f.size for f in self.factors)

    @property
    def factor_sizes(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    @property
    def n_joint(self) -> int:
        n = 1
        for f in self.factors:
            n *= f.size
        return n

    def _check_indices(self, indices) -> tuple[int, ...]:
        idx = tuple(int(i) for i in indices)
        if len(idx) != len(self.factors):
            raise UsageError(
                f"expected {len(self.factors)} factor indices, got {len(idx)}")
        for i, f in zip(idx, self.factors):
            if not 0 <= i < f.size:
                raise UsageError(f"index {i} out of range for factor {f.name!r}")
        return idx

    def encode(self, indices) -> np.ndarray:
        """Concatenated one-hot encoding, float64."""
        idx = self._check_indices(indices)
        out = np.zeros(self.encoding_dim)
        offset = 0
        for i, f in zip(idx, self.factors):
            out[offset + i] = 1.0
            offset += f.size
        return out

    def decode(self, indices) -> tuple[float, ...]:
        """Per-factor physical values for the given bin indices."""
        idx = self._check_indices(indices)
        return tuple(f.values[i] for i, f in zip(idx, self.factors))

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        """Slice a concatenated per-factor vector (e.g. logits) into blocks."""
        flat = np.asarray(flat)
        if flat.shape[-1] != self.encoding_dim:
            raise UsageError(
                f"expected trailing dim {self.encoding_dim}, got {flat.shape[-1]}")
        blocks = []
        offset = 0
        for f in self.factors:
            blocks.append(flat[..., offset:offset + f.size])
            offset += f.size
        return blocks

    def indices_from_encoding(self, encoded: np.ndarray) -> tuple[int, ...]:
        return tuple(int(np.argmax(b)) for b in self.split(encoded))

    def argmax_indices(self, logits: np.ndarray) -> tuple[int, ...]:
        return tuple(int(np.argmax(b)) for b in self.split(logits))

    def all_indices(self) -> list[tuple[int, ...]]:
        """Every joint index combination, lexicographic."""
        combos = [()]
        for f in self.factors:
            combos = [c + (i,) for c in combos for i in range(f.size)]
        return combos


def linetrack_action_spec(steer_limit: float = 0.8, steering_bins: int = 7,
                          throttle_values: tuple[float, ...] = (0.6, 0.8, 1.0)
                          ) -> ActionSpec:
    steer = tuple(np.linspace(-steer_limit, steer_limit, steering_bins))
    return ActionSpec((
        ActionFactor("steering", steer),
        ActionFactor("throttle", tuple(float(v) for v in throttle_values)),
    ))


def pixeltrack_action_spec() -> ActionSpec:
    # values are turn-direction multipliers: -1 right, 0 straight, +1 left
    return ActionSpec((ActionFactor("turn", (-1.0, 0.0, 1.0)),))
