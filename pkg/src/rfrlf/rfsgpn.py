"""Policy network trained by gradients routed through the frozen
transition model.

The policy emits per-factor logits over the discrete action space.
During training a relaxed (Gumbel-Softmax) action sample flows into
the transition model, whose prediction is regressed onto the expert's
next state; at deployment the argmax action is used.

The logit head is zero-initialized, so an untrained policy is exactly
uniform over every factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import (ParamSet, Tensor, add, concat, conv2d, dense, mean_all,
                       narrow, normalize, relu, reshape, scale, softmax,
                       square, straight_through, sub, tensor_view)
from .errors import ConfigurationError, ShapeMismatchError
from .seeding import substream
from .standardize import Standardizer
from .tspn import FROZEN_PARTIAL_PREFIXES, TspnParams, tspn_forward

POLICY_HIDDEN = (128, 128)
POLICY_CONV_CHANNELS = (16, 32)
GUMBEL_TAU = 1.0


@dataclass
class PolicyParams:
    variant: str                      # "dense" | "conv"
    params: ParamSet
    state_shape: tuple[int, ...]
    factor_sizes: tuple[int, ...]
    hidden: tuple[int, ...]
    tau: float = GUMBEL_TAU
    standardizer: Standardizer | None = None
    env_config: dict = None

    def __post_init__(self):
        if self.env_config is None:
            self.env_config = {}

    @property
    def logits_dim(self) -> int:
        return sum(self.factor_sizes)


def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init_policy(variant: str, state_shape: tuple[int, ...],
                factor_sizes: tuple[int, ...], seed: int,
                hidden: tuple[int, int] = POLICY_HIDDEN,
                channels: tuple[int, int] = POLICY_CONV_CHANNELS,
                tau: float = GUMBEL_TAU,
                env_config: dict | None = None) -> PolicyParams:
    if tau <= 0:
        raise ConfigurationError("gumbel temperature must be positive")
    rng = substream(seed, "policy-init")
    ps = ParamSet()
    n_logits = sum(factor_sizes)
    if variant == "dense":
        if len(state_shape) != 1:
            raise ConfigurationError("dense variant expects a flat state shape")
        d = state_shape[0]
        h1, h2 = hidden
        for name, n_in, n_out in (("q1", d, h1), ("q2", h1, h2)):
            ps.add(f"{name}.w", _he(rng, (n_out, n_in), n_in))
            ps.add(f"{name}.b", np.zeros(n_out))
            ps.add(f"{name}.gain", np.ones(n_out))
            ps.add(f"{name}.shift", np.zeros(n_out))
        head_in = h2
        hidden_cfg = tuple(hidden)
    elif variant == "conv":
        if len(state_shape) != 3:
            raise ConfigurationError("conv variant expects a (C, H, W) state shape")
        c_in, h, w = state_shape
        if h % 4 or w % 4:
            raise ConfigurationError("conv variant needs H and W divisible by 4")
        c1, c2 = channels
        ps.add("c1.k", _he(rng, (c1, c_in, 4, 4), c_in * 16))
        ps.add("c1.b", np.zeros(c1))
        ps.add("c2.k", _he(rng, (c2, c1, 4, 4), c1 * 16))
        ps.add("c2.b", np.zeros(c2))
        flat = c2 * (h // 4) * (w // 4)
        h1 = hidden[0]
        ps.add("q1.w", _he(rng, (h1, flat), flat))
        ps.add("q1.b", np.zeros(h1))
        ps.add("q1.gain", np.ones(h1))
        ps.add("q1.shift", np.zeros(h1))
        head_in = h1
        hidden_cfg = tuple(channels) + (h1,)
    else:
        raise ConfigurationError(f"unknown variant {variant!r}")
    # zero head: untrained logits are exactly zero -> uniform policy
    ps.add("head.w", np.zeros((n_logits, head_in)))
    ps.add("head.b", np.zeros(n_logits))
    return PolicyParams(variant=variant, params=ps,
                        state_shape=tuple(state_shape),
                        factor_sizes=tuple(factor_sizes), hidden=hidden_cfg,
                        tau=tau, env_config=dict(env_config or {}))


def policy_forward(pp: PolicyParams, t, state: Tensor) -> Tensor:
    """Concatenated per-factor logits for a standardized state (batched or not)."""
    if pp.variant == "dense":
        h = normalize(relu(dense(state, t["q1.w"], t["q1.b"])), "layer",
                      t["q1.gain"], t["q1.shift"])
        h = normalize(relu(dense(h, t["q2.w"], t["q2.b"])), "layer",
                      t["q2.gain"], t["q2.shift"])
        return dense(h, t["head.w"], t["head.b"])
    if pp.variant == "conv":
        h = relu(conv2d(state, t["c1.k"], t["c1.b"], stride=2, padding=1))
        h = relu(conv2d(h, t["c2.k"], t["c2.b"], stride=2, padding=1))
        if h.data.ndim == 4:
            h = reshape(h, (h.data.shape[0], -1))
        else:
            h = reshape(h, (-1,))
        h = normalize(relu(dense(h, t["q1.w"], t["q1.b"])), "layer",
                      t["q1.gain"], t["q1.shift"])
        return dense(h, t["head.w"], t["head.b"])
    raise ConfigurationError(f"unknown variant {pp.variant!r}")


def policy_logits(pp: PolicyParams, state: np.ndarray) -> np.ndarray:
    """No-gradient logits for a raw state (standardizes first when fitted)."""
    x = np.asarray(state, dtype=np.float64)
    if pp.standardizer is not None:
        x = pp.standardizer.apply(x)
    t = tensor_view(pp.params)
    return policy_forward(pp, t, Tensor(x)).data


def sample_gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    u = np.clip(rng.random(shape), 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def gumbel_softmax(logits: Tensor, factor_sizes: tuple[int, ...], tau: float,
                   noise: np.ndarray | None = None, hard: bool = False) -> Tensor:
    """Per-factor relaxed one-hot: softmax((logits + g) / tau) on each block.

    noise is a plain array matching logits (None suppresses it, making
    the output deterministic); hard=True returns the straight-through
    one-hot whose gradient is the relaxed sample's.
    """
    if tau <= 0:
        raise ConfigurationError("gumbel temperature must be positive")
    total = sum(factor_sizes)
    if logits.data.shape[-1] != total:
        raise ShapeMismatchError(
            f"logits trailing dim {logits.data.shape[-1]} != {total}")
    if noise is not None and noise.shape != logits.data.shape:
        raise ShapeMismatchError(
            f"noise shape {noise.shape} != logits shape {logits.data.shape}")
    parts = []
    offset = 0
    for size in factor_sizes:
        block = narrow(logits, -1, offset, size)
        if noise is not None:
            block = add_const(block, noise[..., offset:offset + size])
        y = softmax(scale(block, 1.0 / tau), axis=-1)
        if hard:
            hard_data = _one_hot_argmax(y.data)
            y = straight_through(y, hard_data)
        parts.append(y)
        offset += size
    return concat(parts, axis=-1)


def add_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Add a constant array (no gradient flows into the constant)."""
    return add(a, Tensor(np.asarray(c, dtype=np.float64)))


def _one_hot_argmax(y: np.ndarray) -> np.ndarray:
    idx = np.argmax(y, axis=-1)
    hard = np.zeros_like(y)
    np.put_along_axis(hard, np.expand_dims(idx, -1), 1.0, axis=-1)
    return hard


def sample_action(logits: np.ndarray, factor_sizes: tuple[int, ...],
                  rng: np.random.Generator, temperature: float = 1.0
                  ) -> tuple[int, ...]:
    """Categorical draw per factor from softmax(logits / temperature).

    temperature 0 selects the argmax.  This runs outside the gradient
    path; training-time action relaxation goes through gumbel_softmax.
    """
    if temperature < 0:
        raise ConfigurationError("temperature must be >= 0")
    logits = np.asarray(logits, dtype=np.float64)
    out = []
    offset = 0
    for size in factor_sizes:
        block = logits[offset:offset + size]
        if temperature == 0.0:
            out.append(int(np.argmax(block)))
        else:
            z = block / temperature
            z = z - z.max()
            p = np.exp(z)
            p /= p.sum()
            out.append(int(rng.choice(size, p=p)))
        offset += size
    return tuple(out)


def argmax_action(logits: np.ndarray, factor_sizes: tuple[int, ...]
                  ) -> tuple[int, ...]:
    logits = np.asarray(logits, dtype=np.float64)
    out = []
    offset = 0
    for size in factor_sizes:
        out.append(int(np.argmax(logits[offset:offset + size])))
        offset += size
    return tuple(out)


# -- composition with the frozen transition model ---------------------------

def merged_param_set(tp: TspnParams, pp: PolicyParams, freeze_mode: str
                     ) -> ParamSet:
    """Single ParamSet over both networks, prefixed 'tspn/' and 'policy/'.

    full: every transition parameter frozen; partial: embedding+encoder
    frozen, injection and decoder trainable alongside the policy.
    """
    if freeze_mode not in ("full", "partial"):
        raise ConfigurationError(f"unknown freeze mode {freeze_mode!r}")
    merged = ParamSet()
    for name, e in tp.params.items():
        frozen = True if freeze_mode == "full" else name.startswith(
            FROZEN_PARTIAL_PREFIXES)
        merged.add(f"tspn/{name}", e.array, frozen=frozen)
    for name, e in pp.params.items():
        merged.add(f"policy/{name}", e.array, frozen=False)
    return merged


def check_frozen(merged: ParamSet, freeze_mode: str):
    """Reject a merged set whose transition entries violate the freeze mode."""
    if freeze_mode == "full":
        bad = [n for n in merged.names()
               if n.startswith("tspn/") and not merged.entry(n).frozen]
        if bad:
            raise ConfigurationError(
                f"freeze mode 'full' requires a fully frozen transition model; "
                f"trainable: {bad[:3]}")
    elif freeze_mode == "partial":
        bad = [n for n in merged.names()
               if n.startswith(tuple("tspn/" + p for p in FROZEN_PARTIAL_PREFIXES))
               and not merged.entry(n).frozen]
        if bad:
            raise ConfigurationError(
                f"freeze mode 'partial' requires frozen embedding/encoder; "
                f"trainable: {bad[:3]}")
    else:
        raise ConfigurationError(f"unknown freeze mode {freeze_mode!r}")


def split_tensors(t) -> tuple[dict, dict]:
    """Split a merged tensor mapping into (policy tensors, tspn tensors)."""
    pol = {k[len("policy/"):]: v for k, v in t.items() if k.startswith("policy/")}
    dyn = {k[len("tspn/"):]: v for k, v in t.items() if k.startswith("tspn/")}
    return pol, dyn


def predict_via_frozen(tp: TspnParams, pp: PolicyParams, t,
                       states: np.ndarray, noise: np.ndarray | None,
                       hard: bool = True) -> Tensor:
    """Differentiable pipeline state -> policy -> relaxed action -> next state.

    The transition model must come out of a finalized training run;
    composing against a half-trained one is a configuration error.
    """
    if not tp.training_finalized:
        raise ConfigurationError(
            "transition model is not finalized; finish phase-1 training first")
    pol_t, dyn_t = split_tensors(t)
    z = Tensor(np.asarray(states, dtype=np.float64))
    logits = policy_forward(pp, pol_t, z)
    y = gumbel_softmax(logits, pp.factor_sizes, pp.tau, noise=noise, hard=hard)
    return tspn_forward(tp, dyn_t, z, y)


def policy_loss(tp: TspnParams, pp: PolicyParams, t, states: np.ndarray,
                expert_next: np.ndarray, noise: np.ndarray | None,
                hard: bool = True) -> Tensor:
    """MSE between the predicted next state and the expert's next state.

    Both inputs are standardized arrays; no rewards and no expert
    actions are involved anywhere.
    """
    if states.shape != expert_next.shape:
        raise ShapeMismatchError(
            f"states {states.shape} vs expert targets {expert_next.shape}")
    pred = predict_via_frozen(tp, pp, t, states, noise, hard=hard)
    return mean_all(square(sub(pred, Tensor(np.asarray(expert_next,
                                                       dtype=np.float64)))))


def save_policy(pp: PolicyParams, path, config_hash: str = ""):
    from .checkpoint import save_checkpoint
    aux = {}
    if pp.standardizer is not None:
        aux["std.mean"] = pp.standardizer.mean
        aux["std.std"] = pp.standardizer.std
    meta = {
        "state_shape": list(pp.state_shape),
        "factor_sizes": list(pp.factor_sizes), "hidden": list(pp.hidden),
        "tau": pp.tau, "env_config": pp.env_config,
    }
    save_checkpoint(path, kind="policy", variant=pp.variant, params=pp.params,
                    aux=aux, meta=meta, finalized=True, config_hash=config_hash)


def load_policy(path) -> PolicyParams:
    from .checkpoint import load_checkpoint
    from .errors import DataFormatError
    ck = load_checkpoint(path)
    if ck.kind != "policy":
        raise DataFormatError(f"{path}: expected a policy checkpoint, "
                              f"found kind {ck.kind!r}")
    std = None
    if "std.mean" in ck.aux:
        std = Standardizer(mean=ck.aux["std.mean"], std=ck.aux["std.std"])
    meta = ck.meta
    return PolicyParams(
        variant=ck.variant, params=ck.params,
        state_shape=tuple(meta["state_shape"]),
        factor_sizes=tuple(meta["factor_sizes"]), hidden=tuple(meta["hidden"]),
        tau=float(meta["tau"]), standardizer=std,
        env_config=dict(meta.get("env_config", {})))
