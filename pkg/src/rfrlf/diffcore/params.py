"""Named, freezable parameter collections and gradient utilities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from ..errors import NumericOverflowError, ShapeMismatchError
from .tensor import Tensor


@dataclass
class ParamEntry:
    array: np.ndarray
    frozen: bool = False


class ParamSet:
    """Ordered mapping of parameter name -> (array, frozen flag).

    Arrays are float64 in memory; serialization narrows to float32.
    Iteration order is insertion order and is part of the contract
    (checkpoint payload layout follows it).
    """

    def __init__(self) -> None:
        self._entries: dict[str, ParamEntry] = {}

    def add(self, name: str, array: np.ndarray, frozen: bool = False) -> None:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._entries[name] = ParamEntry(np.asarray(array, dtype=np.float64), frozen)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def entry(self, name: str) -> ParamEntry:
        return self._entries[name]

    def get(self, name: str) -> np.ndarray:
        return self._entries[name].array

    def set_array(self, name: str, array: np.ndarray) -> None:
        entry = self._entries[name]
        array = np.asarray(array, dtype=np.float64)
        if array.shape != entry.array.shape:
            raise ShapeMismatchError(
                f"cannot assign shape {array.shape} to parameter {name!r} "
                f"of shape {entry.array.shape}")
        entry.array = array

    def items(self) -> Iterator[tuple[str, ParamEntry]]:
        return iter(self._entries.items())

    def freeze(self, names: str | Iterable[str]) -> None:
        if isinstance(names, str):
            names = (names,)
        for name in names:
            self._entries[name].frozen = True

    def unfreeze(self, names: str | Iterable[str]) -> None:
        if isinstance(names, str):
            names = (names,)
        for name in names:
            self._entries[name].frozen = False

    def frozen_names(self) -> list[str]:
        return [n for n, e in self._entries.items() if e.frozen]

    def all_frozen(self) -> bool:
        return all(e.frozen for e in self._entries.values())

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for name, e in self._entries.items():
            out.add(name, e.array.copy(), e.frozen)
        return out

    def n_values(self) -> int:
        return sum(e.array.size for e in self._entries.values())


Computation = Callable[[Mapping[str, Tensor]], Tensor]


def value_and_grad(fn: Computation, params: ParamSet) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate fn over the parameters and return (scalar value, gradients).

    Frozen entries participate in the forward pass but receive zero
    gradients.  Non-finite values or gradients raise, naming the
    offending parameter.
    """
    leaves = {name: Tensor(e.array, requires_grad=not e.frozen)
              for name, e in params.items()}
    out = fn(leaves)
    if not isinstance(out, Tensor) or out.data.ndim != 0:
        raise ShapeMismatchError("computation must return a scalar Tensor")
    value = float(out.data)
    if not np.isfinite(value):
        raise NumericOverflowError("computation value is not finite")
    out.backward()
    grads: dict[str, np.ndarray] = {}
    for name, e in params.items():
        if e.frozen:
            grads[name] = np.zeros_like(e.array)
            continue
        g = leaves[name].grad
        if g is None:
            g = np.zeros_like(e.array)
        else:
            g = np.asarray(g, dtype=np.float64)
            if g.shape != e.array.shape:
                raise ShapeMismatchError(
                    f"gradient shape {g.shape} does not match parameter {name!r} "
                    f"shape {e.array.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError(f"gradient for parameter {name!r} is not finite")
        grads[name] = g
    return value, grads


def evaluate(fn: Computation, params: ParamSet) -> float:
    """Forward-only evaluation (no tape)."""
    leaves = {name: Tensor(e.array) for name, e in params.items()}
    out = fn(leaves)
    return float(out.data)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple[int, ...]
    n_checked: int
    per_param: dict[str, float] = field(default_factory=dict)


def finite_diff_check(fn: Computation, params: ParamSet,
                      step: float = 1e-4) -> GradCheckReport:
    """Compare backprop gradients against central finite differences.

    Checks every element of every non-frozen parameter.  The relative
    error denominator is floored at 1e-6 so near-zero gradients compare
    on an absolute scale.
    """
    _, grads = value_and_grad(fn, params)
    max_rel = 0.0
    worst = ("", ())
    checked = 0
    per_param: dict[str, float] = {}
    for name, e in params.items():
        if e.frozen:
            continue
        arr = e.array
        flat = arr.reshape(-1)
        g_flat = grads[name].reshape(-1)
        worst_here = 0.0
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + step
            f_plus = evaluate(fn, params)
            flat[idx] = saved - step
            f_minus = evaluate(fn, params)
            flat[idx] = saved
            fd = (f_plus - f_minus) / (2.0 * step)
            bp = g_flat[idx]
            rel = abs(bp - fd) / max(abs(bp), abs(fd), 1e-6)
            checked += 1
            if rel > worst_here:
                worst_here = rel
            if rel > max_rel:
                max_rel = rel
                worst = (name, np.unravel_index(idx, arr.shape))
        per_param[name] = worst_here
    return GradCheckReport(max_rel_error=max_rel, worst_param=worst[0],
                           worst_index=tuple(int(i) for i in worst[1]),
                           n_checked=checked, per_param=per_param)


def tensor_view(params: ParamSet) -> dict[str, Tensor]:
    """Plain (no-gradient) Tensor wrappers over every parameter array."""
    return {name: Tensor(e.array) for name, e in params.items()}
