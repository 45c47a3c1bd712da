"""Two-phase training orchestration.

Phase 1 fits the one-step transition model on randomly collected
interaction data, rolling it forward several steps per sample and
mixing ground-truth inputs with its own detached predictions at a
scheduled rate.  Phase 2 freezes that model and trains the policy by
shrinking the squared gap between model-predicted next states and
expert next states.  Rewards appear in neither phase.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .collection import (ReplayBuffer, collect, sample_windows,
                         valid_window_starts)
from .diffcore import (Tensor, add, clip_global_norm, init_optim, lr_schedule,
                       mean_all, optimizer_step, scale, square, sub,
                       tensor_view, value_and_grad)
from .envs import make_env
from .errors import (ConfigurationError, InsufficientDataError,
                     NumericOverflowError)
from .evalkit import EvalSummary, iqm, returns_of, run_episodes, summarize
from .expertgen import ExpertTrajectory, default_controller, record_expert
from .rfsgpn import (PolicyParams, check_frozen, init_policy,
                     merged_param_set, policy_logits, policy_loss,
                     sample_action, sample_gumbel)
from .seeding import substream, substream_seed
from .standardize import Standardizer
from .tspn import TspnParams, init_tspn, tspn_apply, tspn_forward

LR_SCHEDULES = ("constant", "cosine", "step")
FREEZE_MODES = ("full", "partial")


# ---------------------------------------------------------------------------
# configuration

@dataclass
class Phase1Config:
    """Transition-model training block.

    Defaults are desk scale (minutes on a CPU); fullscale_config()
    restores the long 100x1000 schedule.
    """
    epochs: int = 20
    iters_per_epoch: int = 200
    batch: int = 64
    lr: float = 1e-3
    lr_schedule: str = "cosine"
    decay_every: int = 5000
    decay_factor: float = 0.5
    horizon: int = 5
    eps0: float = 0.9
    eps_final: float = 0.5
    clip: float = 1.0
    holdout_fraction: float = 0.1
    divergence_limit: float = 1e6
    hidden: tuple | None = None      # dense layer widths override
    channels: tuple | None = None    # conv channel override


@dataclass
class Phase2Config:
    epochs: int = 30
    batch: int = 32
    lr: float = 5e-4
    patience: int = 5
    clip: float = 1.0
    freeze_mode: str = "full"
    episodes_per_epoch: int = 8
    val_fraction: float = 0.1
    tau: float = 1.0


@dataclass
class CollectionConfig:
    temperature: float = 1.0
    n_steps: int = 50_000


@dataclass
class TrainConfig:
    phase1: Phase1Config = field(default_factory=Phase1Config)
    phase2: Phase2Config = field(default_factory=Phase2Config)
    collection: CollectionConfig = field(default_factory=CollectionConfig)
    seed: int = 0

    def validate(self) -> None:
        p1, p2, col = self.phase1, self.phase2, self.collection
        for label, v in (("phase1.epochs", p1.epochs),
                         ("phase1.iters_per_epoch", p1.iters_per_epoch),
                         ("phase1.batch", p1.batch),
                         ("phase1.lr", p1.lr),
                         ("phase1.horizon", p1.horizon),
                         ("phase1.clip", p1.clip),
                         ("phase1.divergence_limit", p1.divergence_limit),
                         ("phase1.decay_every", p1.decay_every),
                         ("phase2.epochs", p2.epochs),
                         ("phase2.batch", p2.batch),
                         ("phase2.lr", p2.lr),
                         ("phase2.patience", p2.patience),
                         ("phase2.clip", p2.clip),
                         ("phase2.episodes_per_epoch", p2.episodes_per_epoch),
                         ("phase2.tau", p2.tau),
                         ("collection.n_steps", col.n_steps)):
            if v <= 0:
                raise ConfigurationError(f"{label} must be positive, got {v}")
        if not (0.0 < p1.decay_factor <= 1.0):
            raise ConfigurationError(
                f"phase1.decay_factor must be in (0, 1], got {p1.decay_factor}")
        if p1.eps0 < p1.eps_final:
            raise ConfigurationError(
                f"phase1.eps0 ({p1.eps0}) must be >= eps_final ({p1.eps_final})")
        if not (0.0 <= p1.eps_final and p1.eps0 <= 1.0):
            raise ConfigurationError("phase1 epsilon values must lie in [0, 1]")
        if not (0.0 < p1.holdout_fraction < 1.0):
            raise ConfigurationError(
                f"phase1.holdout_fraction must be in (0, 1), got {p1.holdout_fraction}")
        if p1.lr_schedule not in LR_SCHEDULES:
            raise ConfigurationError(
                f"phase1.lr_schedule must be one of {LR_SCHEDULES}, got {p1.lr_schedule!r}")
        if not (0.0 < p2.val_fraction < 1.0):
            raise ConfigurationError(
                f"phase2.val_fraction must be in (0, 1), got {p2.val_fraction}")
        if p2.freeze_mode not in FREEZE_MODES:
            raise ConfigurationError(
                f"phase2.freeze_mode must be one of {FREEZE_MODES}, got {p2.freeze_mode!r}")
        if col.temperature < 0:
            raise ConfigurationError(
                f"collection.temperature must be >= 0, got {col.temperature}")


def desk_config(seed: int = 0) -> TrainConfig:
    """Workstation-scale defaults: 20x200 phase 1, 30-epoch phase 2."""
    return TrainConfig(seed=seed)


def fullscale_config(seed: int = 0) -> TrainConfig:
    """Long schedule: 100 epochs of 1000 iterations, then 50 policy epochs."""
    cfg = TrainConfig(seed=seed)
    cfg.phase1.epochs = 100
    cfg.phase1.iters_per_epoch = 1000
    cfg.phase2.epochs = 50
    return cfg


def study_config(seed: int = 0) -> TrainConfig:
    """Short step-decay profile for transition-model accuracy studies:
    10 epochs, batch 16, lr halved every 5000 steps."""
    cfg = TrainConfig(seed=seed)
    cfg.phase1.epochs = 10
    cfg.phase1.batch = 16
    cfg.phase1.lr_schedule = "step"
    return cfg


PRESETS = {"desk": desk_config, "fullscale": fullscale_config,
           "study": study_config}


# ---------------------------------------------------------------------------
# schedules

def epsilon_schedule(epoch: float, eps0: float = 0.9, eps_final: float = 0.5,
                     decay_epochs: float = 2.0) -> float:
    """Teacher-forcing probability: linear from eps0 to eps_final over the
    first decay_epochs epochs, constant afterwards."""
    if eps0 < eps_final:
        raise ConfigurationError(f"eps0 ({eps0}) must be >= eps_final ({eps_final})")
    if epoch < 0:
        raise ConfigurationError(f"epoch must be >= 0, got {epoch}")
    if decay_epochs <= 0:
        raise ConfigurationError(f"decay_epochs must be positive, got {decay_epochs}")
    if epoch >= decay_epochs:
        return eps_final
    return eps0 + (eps_final - eps0) * (epoch / decay_epochs)


def _phase1_lr(cfg: Phase1Config, step: int, total_steps: int) -> float:
    if cfg.lr_schedule == "cosine":
        return lr_schedule("cosine", cfg.lr, step, total_steps=total_steps)
    if cfg.lr_schedule == "step":
        return lr_schedule("step", cfg.lr, step, decay_every=cfg.decay_every,
                           decay_factor=cfg.decay_factor)
    return lr_schedule("constant", cfg.lr, step)


# ---------------------------------------------------------------------------
# phase 1: transition model

@dataclass
class Phase1Result:
    tspn: TspnParams
    train_losses: list          # per-epoch mean training loss
    holdout_mse: list           # index 0 is the pre-training baseline
    epsilons: list              # per-epoch teacher-forcing probability


def _one_step_mse(tp: TspnParams, std: Standardizer, buffer: ReplayBuffer,
                  starts: np.ndarray, horizon: int, chunk: int = 2048) -> float:
    """Teacher-forced single-step MSE over every transition the given
    windows touch, in standardized space."""
    idx = np.unique((starts[:, None] + np.arange(horizon)).reshape(-1))
    zs = std.apply(buffer.states[idx].astype(np.float64))
    zn = std.apply(buffer.next_states[idx].astype(np.float64))
    acts = buffer.actions[idx].astype(np.float64)
    total = 0.0
    for ofs in range(0, len(idx), chunk):
        pred = tspn_apply(tp, zs[ofs:ofs + chunk], acts[ofs:ofs + chunk])
        diff = pred - zn[ofs:ofs + chunk]
        total += float(np.sum(diff * diff))
    return total / zn.size


def train_tspn(buffer: ReplayBuffer, config: TrainConfig,
               env_config: dict | None = None) -> Phase1Result:
    """Fit the transition model on buffered random-interaction data.

    Windows of `horizon` consecutive transitions are rolled forward;
    from the second step on, each sample's input is the ground-truth
    state with probability eps(epoch) and the model's own detached
    prediction otherwise.  The per-step squared errors are averaged,
    clipped, and applied with the configured learning-rate schedule.
    Returns the finalized model with its fitted standardizer attached,
    plus the loss curve.
    """
    config.validate()
    cfg = config.phase1
    h = cfg.horizon
    if len(buffer) == 0:
        raise InsufficientDataError("replay buffer is empty")
    state_shape = tuple(buffer.state_shape)
    variant = "dense" if len(state_shape) == 1 else "conv"

    starts = valid_window_starts(buffer.dones, len(buffer), h)
    if len(starts) < 2:
        raise InsufficientDataError(
            f"need at least 2 done-free windows of horizon {h}, found {len(starts)}")
    split_rng = substream(config.seed, "phase1-split")
    perm = split_rng.permutation(len(starts))
    n_hold = max(1, int(round(len(starts) * cfg.holdout_fraction)))
    hold_starts = np.sort(starts[perm[:n_hold]])
    train_starts = np.sort(starts[perm[n_hold:]])

    train_idx = np.unique((train_starts[:, None] + np.arange(h)).reshape(-1))
    # Statistics must cover prediction targets too: terminal next_states
    # never appear among states, and a floored std there would blow up
    # the standardized targets.
    std = Standardizer.fit(np.concatenate([
        buffer.states[train_idx], buffer.next_states[train_idx]]))

    kwargs = {}
    if cfg.hidden is not None:
        kwargs["hidden"] = tuple(cfg.hidden)
    if cfg.channels is not None:
        kwargs["channels"] = tuple(cfg.channels)
    tp = init_tspn(variant, state_shape, buffer.action_dim,
                   seed=config.seed, env_config=env_config or {}, **kwargs)

    opt = init_optim(tp.params, "adafactor")
    rng = substream(config.seed, "phase1-train")
    total_steps = cfg.epochs * cfg.iters_per_epoch

    train_losses: list[float] = []
    holdout = [_one_step_mse(tp, std, buffer, hold_starts, h)]
    epsilons: list[float] = []

    global_step = 0
    for epoch in range(cfg.epochs):
        eps = epsilon_schedule(epoch, cfg.eps0, cfg.eps_final)
        epoch_losses = np.empty(cfg.iters_per_epoch)
        for it in range(cfg.iters_per_epoch):
            states, actions, next_states = sample_windows(
                buffer, cfg.batch, h, rng, starts=train_starts)
            zs = std.apply(states)
            zn = std.apply(next_states)
            feed_gt = rng.random((h - 1, cfg.batch)) < eps if h > 1 else None

            def fn(t):
                inp = zs[:, 0]
                per_step = []
                for j in range(h):
                    pred = tspn_forward(tp, t, Tensor(inp), Tensor(actions[:, j]))
                    per_step.append(mean_all(square(sub(pred, Tensor(zn[:, j])))))
                    if j + 1 < h:
                        gt = zn[:, j]
                        mask = feed_gt[j].reshape((gt.shape[0],) + (1,) * (gt.ndim - 1))
                        # fed-back predictions are detached: no gradient
                        # flows across rollout steps
                        inp = np.where(mask, gt, pred.data)
                total = per_step[0]
                for loss_j in per_step[1:]:
                    total = add(total, loss_j)
                return scale(total, 1.0 / h)

            val, grads = value_and_grad(fn, tp.params)
            if val > cfg.divergence_limit:
                raise NumericOverflowError(
                    f"phase-1 training diverged: loss {val:.4e} at epoch "
                    f"{epoch} iteration {it} (limit {cfg.divergence_limit:.1e})")
            grads, _ = clip_global_norm(grads, cfg.clip)
            lr = _phase1_lr(cfg, global_step, total_steps)
            optimizer_step(tp.params, grads, opt, lr)
            epoch_losses[it] = val
            global_step += 1
        train_losses.append(float(epoch_losses.mean()))
        holdout.append(_one_step_mse(tp, std, buffer, hold_starts, h))
        epsilons.append(eps)

    tp.standardizer = std
    tp.training_finalized = True
    return Phase1Result(tspn=tp, train_losses=train_losses,
                        holdout_mse=holdout, epsilons=epsilons)


# ---------------------------------------------------------------------------
# phase 2: policy

@dataclass
class Phase2Result:
    policy: PolicyParams
    train_losses: list
    val_losses: list
    best_epoch: int
    stopped_early: bool


def early_stop(history, patience: int) -> bool:
    """True once the best value has not strictly improved for `patience`
    consecutive entries.  Ties count as non-improvement."""
    if patience < 1:
        raise ConfigurationError(f"patience must be >= 1, got {patience}")
    if len(history) <= patience:
        return False
    return min(history[-patience:]) >= min(history[:-patience])


def _snapshot(ps) -> dict:
    return {name: ps.entry(name).array.copy() for name in ps.names()}


def _restore(ps, snap: dict) -> None:
    # in-place so every view of these arrays stays attached
    for name, arr in snap.items():
        ps.entry(name).array[...] = arr


def _policy_val_loss(tp, pp, merged, val_in, val_tg, chunk: int = 512) -> float:
    """Noise-free soft-distribution loss over fixed held-out pairs."""
    t = tensor_view(merged)
    total, count = 0.0, 0
    for ofs in range(0, len(val_in), chunk):
        vi = val_in[ofs:ofs + chunk]
        vt = val_tg[ofs:ofs + chunk]
        loss = policy_loss(tp, pp, t, vi, vt, noise=None, hard=False)
        total += float(loss.data) * len(vi)
        count += len(vi)
    return total / count


def train_policy(env, expert: list, tspn: TspnParams,
                 config: TrainConfig) -> Phase2Result:
    """Train the policy against expert state sequences.

    Each epoch rolls fresh episodes in the environment: episode k
    restarts from the k-th training trajectory's first pose and acts by
    sampling the current policy (outside the gradient path).  Visited
    states pair with the expert's time-aligned next states; minibatches
    push the frozen-model prediction of each pair toward its target.
    Validation pairs come straight from held-out expert trajectories,
    and the best parameters by validation loss are restored at the end.
    """
    config.validate()
    cfg = config.phase2
    if not tspn.training_finalized:
        raise ConfigurationError(
            "phase 2 requires a transition model that finished phase-1 training")
    if tspn.standardizer is None:
        raise ConfigurationError("transition model has no fitted standardizer")
    if not expert:
        raise InsufficientDataError("no expert trajectories given")
    if len(expert) < 2:
        raise InsufficientDataError(
            "need at least 2 expert trajectories for a train/validation split")
    for i, traj in enumerate(expert):
        if len(traj) < 2:
            raise InsufficientDataError(
                f"expert trajectory {i} has {len(traj)} states; need at least 2")
        if tuple(traj.states.shape[1:]) != tuple(tspn.state_shape):
            raise ConfigurationError(
                f"expert trajectory {i} state shape {traj.states.shape[1:]} does "
                f"not match the transition model {tspn.state_shape}")
    spec = env.action_spec
    if spec.encoding_dim != tspn.action_dim:
        raise ConfigurationError(
            f"environment action encoding dim {spec.encoding_dim} does not "
            f"match the transition model {tspn.action_dim}")

    split_rng = substream(config.seed, "phase2-split")
    perm = split_rng.permutation(len(expert))
    n_val = max(1, int(round(len(expert) * cfg.val_fraction)))
    if len(expert) - n_val < 1:
        n_val = len(expert) - 1
    val_trajs = [expert[i] for i in perm[:n_val]]
    train_trajs = [expert[i] for i in perm[n_val:]]

    std = tspn.standardizer
    val_in = std.apply(np.concatenate([t.states[:-1] for t in val_trajs]).astype(np.float64))
    val_tg = std.apply(np.concatenate([t.states[1:] for t in val_trajs]).astype(np.float64))

    pp = init_policy(tspn.variant, tuple(tspn.state_shape), spec.factor_sizes,
                     seed=config.seed, tau=cfg.tau,
                     env_config=dict(tspn.env_config))
    pp.standardizer = std

    merged = merged_param_set(tspn, pp, cfg.freeze_mode)
    check_frozen(merged, cfg.freeze_mode)
    opt = init_optim(merged, "adafactor")
    train_rng = substream(config.seed, "phase2-train")

    train_losses: list[float] = []
    val_losses: list[float] = []
    best: dict | None = None
    best_val = np.inf
    best_epoch = -1
    stopped = False

    for epoch in range(cfg.epochs):
        pair_states: list[np.ndarray] = []
        pair_targets: list[np.ndarray] = []
        for k in range(cfg.episodes_per_epoch):
            traj = train_trajs[(epoch * cfg.episodes_per_epoch + k) % len(train_trajs)]
            ep_rng = substream(config.seed, "phase2-episode", epoch, k)
            state = env.reset(start=tuple(traj.poses[0]))
            for tstep in range(len(traj) - 1):
                idx = sample_action(policy_logits(pp, state), spec.factor_sizes,
                                    ep_rng, temperature=1.0)
                pair_states.append(state)
                pair_targets.append(traj.states[tstep + 1])
                result = env.step(spec.decode(idx))
                state = result.state
                if result.done:
                    break

        S = std.apply(np.stack(pair_states).astype(np.float64))
        T = std.apply(np.stack(pair_targets).astype(np.float64))
        order = train_rng.permutation(len(S))
        batch_losses = []
        for ofs in range(0, len(order), cfg.batch):
            sel = order[ofs:ofs + cfg.batch]
            noise = sample_gumbel(train_rng, (len(sel), spec.encoding_dim))
            bs, bt = S[sel], T[sel]

            def fn(t):
                return policy_loss(tspn, pp, t, bs, bt, noise, hard=False)

            val, grads = value_and_grad(fn, merged)
            grads, _ = clip_global_norm(grads, cfg.clip)
            optimizer_step(merged, grads, opt, cfg.lr)
            batch_losses.append(val)
        train_losses.append(float(np.mean(batch_losses)))

        v = _policy_val_loss(tspn, pp, merged, val_in, val_tg)
        val_losses.append(v)
        if v < best_val:
            best_val = v
            best = _snapshot(merged)
            best_epoch = epoch
        if early_stop(val_losses, cfg.patience):
            stopped = True
            break

    if best is not None:
        _restore(merged, best)
    return Phase2Result(policy=pp, train_losses=train_losses,
                        val_losses=val_losses, best_epoch=best_epoch,
                        stopped_early=stopped)


# ---------------------------------------------------------------------------
# pipeline and sensitivity grid

@dataclass
class PipelineResult:
    tspn: TspnParams
    policy: PolicyParams
    phase1: Phase1Result
    phase2: Phase2Result
    summary: EvalSummary
    reference_return: float


def run_pipeline(env_kind: str, config: TrainConfig,
                 expert: list | None = None, n_expert_episodes: int = 10,
                 n_eval_episodes: int = 20) -> PipelineResult:
    """Collect, train both phases, and evaluate against the expert.

    Every stage seeds from a substream of config.seed, so two calls with
    the same configuration produce identical artifacts.
    """
    config.validate()
    env = make_env(env_kind)
    buffer = collect(env, None, config.collection.n_steps,
                     temperature=config.collection.temperature,
                     seed=substream_seed(config.seed, "collect"))
    p1 = train_tspn(buffer, config, env_config=env.config.to_dict())
    if expert is None:
        expert = record_expert(make_env(env_kind), n_expert_episodes,
                               seed=substream_seed(config.seed, "expert"))
    p2 = train_policy(make_env(env_kind), expert, p1.tspn, config)

    eval_env = make_env(env_kind)
    eval_seed = substream_seed(config.seed, "eval")
    expert_records = run_episodes(eval_env, default_controller(eval_env),
                                  n_eval_episodes, seed=eval_seed)
    reference = iqm(returns_of(expert_records))
    policy_records = run_episodes(eval_env, p2.policy, n_eval_episodes,
                                  seed=eval_seed)
    summary = summarize(policy_records, reference)
    return PipelineResult(tspn=p1.tspn, policy=p2.policy, phase1=p1,
                          phase2=p2, summary=summary,
                          reference_return=reference)


SENSITIVITY_LABELS = ("default", "T=0.5", "T=2.0", "eps=0.3", "eps=0.7", "PF")


@dataclass
class SensitivityCell:
    label: str
    summary: EvalSummary | None
    error: str | None


def cell_config(base: TrainConfig, label: str) -> TrainConfig:
    """One-factor-at-a-time override around the base configuration."""
    cfg = copy.deepcopy(base)
    if label == "default":
        pass
    elif label == "T=0.5":
        cfg.collection.temperature = 0.5
    elif label == "T=2.0":
        cfg.collection.temperature = 2.0
    elif label == "eps=0.3":
        cfg.phase1.eps_final = 0.3
    elif label == "eps=0.7":
        cfg.phase1.eps_final = 0.7
    elif label == "PF":
        cfg.phase2.freeze_mode = "partial"
    else:
        raise ConfigurationError(f"unknown sensitivity cell {label!r}")
    return cfg


def sensitivity_suite(env_kind: str, base: TrainConfig,
                      n_expert_episodes: int = 10, n_eval_episodes: int = 20,
                      labels=SENSITIVITY_LABELS) -> list[SensitivityCell]:
    """Run the full pipeline once per grid cell.

    The expert recording is shared across cells (it does not depend on
    any varied hyperparameter).  A failing cell records its error and
    the suite continues.
    """
    base.validate()
    expert = record_expert(make_env(env_kind), n_expert_episodes,
                           seed=substream_seed(base.seed, "expert"))
    cells = []
    for label in labels:
        try:
            result = run_pipeline(env_kind, cell_config(base, label),
                                  expert=expert,
                                  n_eval_episodes=n_eval_episodes)
            cells.append(SensitivityCell(label=label, summary=result.summary,
                                         error=None))
        except Exception as exc:                     # noqa: BLE001
            cells.append(SensitivityCell(
                label=label, summary=None,
                error=f"{type(exc).__name__}: {exc}"))
    return cells
