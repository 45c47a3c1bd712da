"""Transition network: one-step dynamics learned from random interaction.

Encoder-decoder with a multiplicative+additive action injection at the
bottleneck.  The numeric variant is a dense autoencoder with layer
norm; the image variant mirrors it with strided convolutions and
instance norm.  The first (embedding) layer is deliberately
norm-free in both variants.

All forward math happens in standardized state space; the fitted
Standardizer travels with the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import (ParamSet, Tensor, add, conv2d, deconv2d, dense, matvec,
                       mean_all, mul, normalize, relu, reshape, sigmoid,
                       square, sub, tensor_view)
from .errors import ConfigurationError, ShapeMismatchError
from .seeding import substream
from .standardize import Standardizer

DENSE_HIDDEN = (128, 64, 32)
CONV_CHANNELS = (16, 32, 64)
EMBED_KERNEL = 5          # stride 1, padding 2: shape-preserving
DOWN_KERNEL = 4           # stride 2, padding 1: exact halving
FROZEN_PARTIAL_PREFIXES = ("embed.", "enc1.", "enc2.")


@dataclass
class TspnParams:
    variant: str                       # "dense" | "conv"
    params: ParamSet
    state_shape: tuple[int, ...]
    action_dim: int
    hidden: tuple[int, ...]
    norm_kind: str
    training_finalized: bool = False
    standardizer: Standardizer | None = None
    env_config: dict = field(default_factory=dict)


def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init_tspn(variant: str, state_shape: tuple[int, ...], action_dim: int,
              seed: int, hidden: tuple[int, ...] = DENSE_HIDDEN,
              channels: tuple[int, int, int] = CONV_CHANNELS,
              env_config: dict | None = None) -> TspnParams:
    rng = substream(seed, "tspn-init")
    ps = ParamSet()
    if variant == "dense":
        if len(state_shape) != 1:
            raise ConfigurationError("dense variant expects a flat state shape")
        d = state_shape[0]
        h1, h2, h3 = hidden
        ps.add("embed.w", _he(rng, (h1, d), d))
        ps.add("embed.b", np.zeros(h1))
        for name, n_in, n_out in (("enc1", h1, h2), ("enc2", h2, h3)):
            ps.add(f"{name}.w", _he(rng, (n_out, n_in), n_in))
            ps.add(f"{name}.b", np.zeros(n_out))
            ps.add(f"{name}.gain", np.ones(n_out))
            ps.add(f"{name}.shift", np.zeros(n_out))
        ps.add("inject.gate_w", rng.normal(0.0, 0.1, size=(h3, action_dim)))
        ps.add("inject.shift_w", rng.normal(0.0, 0.1, size=(h3, action_dim)))
        for name, n_in, n_out in (("dec1", h3, h2), ("dec2", h2, h1)):
            ps.add(f"{name}.w", _he(rng, (n_out, n_in), n_in))
            ps.add(f"{name}.b", np.zeros(n_out))
            ps.add(f"{name}.gain", np.ones(n_out))
            ps.add(f"{name}.shift", np.zeros(n_out))
        ps.add("out.w", rng.normal(0.0, 1.0 / np.sqrt(h1), size=(d, h1)))
        ps.add("out.b", np.zeros(d))
        norm_kind = "layer"
        hidden_cfg = tuple(hidden)
    elif variant == "conv":
        if len(state_shape) != 3:
            raise ConfigurationError("conv variant expects a (C, H, W) state shape")
        c_in, h, w = state_shape
        if h % 4 or w % 4:
            raise ConfigurationError("conv variant needs H and W divisible by 4")
        c1, c2, c3 = channels
        ps.add("embed.k", _he(rng, (c1, c_in, EMBED_KERNEL, EMBED_KERNEL),
                              c_in * EMBED_KERNEL ** 2))
        ps.add("embed.b", np.zeros(c1))
        for name, ci, co in (("enc1", c1, c2), ("enc2", c2, c3)):
            ps.add(f"{name}.k", _he(rng, (co, ci, DOWN_KERNEL, DOWN_KERNEL),
                                    ci * DOWN_KERNEL ** 2))
            ps.add(f"{name}.b", np.zeros(co))
            ps.add(f"{name}.gain", np.ones(co))
            ps.add(f"{name}.shift", np.zeros(co))
        ps.add("inject.gate_w", rng.normal(0.0, 0.1, size=(c3, action_dim)))
        ps.add("inject.shift_w", rng.normal(0.0, 0.1, size=(c3, action_dim)))
        # deconv kernels are stored (C_in, C_out, kh, kw)
        for name, ci, co in (("dec1", c3, c2), ("dec2", c2, c1)):
            ps.add(f"{name}.k", _he(rng, (ci, co, DOWN_KERNEL, DOWN_KERNEL),
                                    ci * DOWN_KERNEL ** 2))
            ps.add(f"{name}.b", np.zeros(co))
            ps.add(f"{name}.gain", np.ones(co))
            ps.add(f"{name}.shift", np.zeros(co))
        ps.add("out.k", rng.normal(0.0, 1.0 / np.sqrt(c1), size=(c_in, c1, 1, 1)))
        ps.add("out.b", np.zeros(c_in))
        norm_kind = "instance"
        hidden_cfg = tuple(channels)
    else:
        raise ConfigurationError(f"unknown variant {variant!r}")
    return TspnParams(variant=variant, params=ps,
                      state_shape=tuple(state_shape), action_dim=action_dim,
                      hidden=hidden_cfg, norm_kind=norm_kind,
                      env_config=dict(env_config or {}))


def action_inject(h: Tensor, action: Tensor, gate_w: Tensor,
                  shift_w: Tensor) -> Tensor:
    """Bottleneck conditioning: h * sigmoid(W_g a) + W_s a.

    For feature maps the per-channel gate and shift broadcast over the
    spatial axes.
    """
    gate = sigmoid(matvec(action, gate_w))
    shift = matvec(action, shift_w)
    if h.data.ndim > gate.data.ndim:
        extra = h.data.ndim - gate.data.ndim
        target = gate.data.shape + (1,) * extra
        gate = reshape(gate, target)
        shift = reshape(shift, target)
    return add(mul(h, gate), shift)


def tspn_forward(tp: TspnParams, t, state: Tensor, action: Tensor) -> Tensor:
    """Predict the standardized next state for (standardized state, one-hot action)."""
    kind = tp.norm_kind
    if tp.variant == "dense":
        h = relu(dense(state, t["embed.w"], t["embed.b"]))
        h = normalize(relu(dense(h, t["enc1.w"], t["enc1.b"])), kind,
                      t["enc1.gain"], t["enc1.shift"])
        h = normalize(relu(dense(h, t["enc2.w"], t["enc2.b"])), kind,
                      t["enc2.gain"], t["enc2.shift"])
        h = action_inject(h, action, t["inject.gate_w"], t["inject.shift_w"])
        h = normalize(relu(dense(h, t["dec1.w"], t["dec1.b"])), kind,
                      t["dec1.gain"], t["dec1.shift"])
        h = normalize(relu(dense(h, t["dec2.w"], t["dec2.b"])), kind,
                      t["dec2.gain"], t["dec2.shift"])
        return dense(h, t["out.w"], t["out.b"])
    if tp.variant == "conv":
        h = relu(conv2d(state, t["embed.k"], t["embed.b"], stride=1,
                        padding=EMBED_KERNEL // 2))
        h = normalize(relu(conv2d(h, t["enc1.k"], t["enc1.b"], stride=2,
                                  padding=1)), kind, t["enc1.gain"], t["enc1.shift"])
        h = normalize(relu(conv2d(h, t["enc2.k"], t["enc2.b"], stride=2,
                                  padding=1)), kind, t["enc2.gain"], t["enc2.shift"])
        h = action_inject(h, action, t["inject.gate_w"], t["inject.shift_w"])
        h = normalize(relu(deconv2d(h, t["dec1.k"], t["dec1.b"], stride=2,
                                    padding=1)), kind, t["dec1.gain"], t["dec1.shift"])
        h = normalize(relu(deconv2d(h, t["dec2.k"], t["dec2.b"], stride=2,
                                    padding=1)), kind, t["dec2.gain"], t["dec2.shift"])
        return conv2d(h, t["out.k"], t["out.b"], stride=1, padding=0)
    raise ConfigurationError(f"unknown variant {tp.variant!r}")


def tspn_loss(tp: TspnParams, t, states: np.ndarray, actions: np.ndarray,
              targets: np.ndarray) -> Tensor:
    """Mean squared error over every element of the predicted batch."""
    if states.shape != targets.shape:
        raise ShapeMismatchError(
            f"states {states.shape} vs targets {targets.shape}")
    pred = tspn_forward(tp, t, Tensor(states), Tensor(actions))
    return mean_all(square(sub(pred, Tensor(targets))))


def tspn_apply(tp: TspnParams, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """No-gradient forward pass in standardized space."""
    t = tensor_view(tp.params)
    return tspn_forward(tp, t, Tensor(np.asarray(states, dtype=np.float64)),
                        Tensor(np.asarray(actions, dtype=np.float64))).data


def tspn_predict_raw(tp: TspnParams, raw_states: np.ndarray,
                     actions: np.ndarray) -> np.ndarray:
    """Raw-space convenience: standardize, predict, invert."""
    if tp.standardizer is None:
        raise ConfigurationError("transition model has no fitted standardizer")
    z = tp.standardizer.apply(raw_states)
    return tp.standardizer.invert(tspn_apply(tp, z, actions))


def freeze_tspn(tp: TspnParams, mode: str):
    """Freeze parameters in-place: 'full' locks everything, 'partial' locks
    the embedding and encoder stack while the injection and decoder stay
    trainable."""
    if mode == "full":
        for name in tp.params.names():
            tp.params.freeze(name)
    elif mode == "partial":
        for name in tp.params.names():
            if name.startswith(FROZEN_PARTIAL_PREFIXES):
                tp.params.freeze(name)
            else:
                tp.params.unfreeze(name)
    else:
        raise ConfigurationError(f"unknown freeze mode {mode!r}")


def save_tspn(tp: TspnParams, path, config_hash: str = ""):
    from .checkpoint import save_checkpoint
    aux = {}
    if tp.standardizer is not None:
        aux["std.mean"] = tp.standardizer.mean
        aux["std.std"] = tp.standardizer.std
    meta = {
        "state_shape": list(tp.state_shape), "action_dim": tp.action_dim,
        "hidden": list(tp.hidden), "norm": tp.norm_kind,
        "env_config": tp.env_config,
    }
    save_checkpoint(path, kind="tspn", variant=tp.variant, params=tp.params,
                    aux=aux, meta=meta, finalized=tp.training_finalized,
                    config_hash=config_hash)


def load_tspn(path) -> TspnParams:
    from .checkpoint import load_checkpoint
    from .errors import DataFormatError
    ck = load_checkpoint(path)
    if ck.kind != "tspn":
        raise DataFormatError(f"{path}: expected a transition-model checkpoint, "
                              f"found kind {ck.kind!r}")
    std = None
    if "std.mean" in ck.aux:
        std = Standardizer(mean=ck.aux["std.mean"], std=ck.aux["std.std"])
    meta = ck.meta
    return TspnParams(
        variant=ck.variant, params=ck.params,
        state_shape=tuple(meta["state_shape"]), action_dim=int(meta["action_dim"]),
        hidden=tuple(meta["hidden"]), norm_kind=meta["norm"],
        training_finalized=ck.finalized, standardizer=std,
        env_config=dict(meta.get("env_config", {})))
