"""Episode evaluation and robust return statistics.

Rewards are computed here and only here.  Neither training phase reads
a reward; this module exists so runs can be measured and compared.
Episodes act by argmax over the policy head, and every episode derives
its reset seed from the master seed, so a (policy, seed) pair always
reproduces the same list of returns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .envs.rewards import linetrack_reward, pixeltrack_reward
from .errors import ConfigurationError, UsageError
from .rfsgpn import PolicyParams, argmax_action, policy_logits
from .seeding import substream_seed

EVAL_EPISODES_DEFAULT = 200

EPISODE_CSV_HEADER = ("episode", "return", "steps", "mean_abs_ey")
SUMMARY_CSV_HEADER = ("n_episodes", "max", "mean", "iqm",
                      "normalized_iqm", "reference_return")


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    steps: int
    mean_abs_ey: float


@dataclass
class EvalSummary:
    n_episodes: int
    returns: list
    max: float
    mean: float
    iqm: float
    normalized_iqm: float
    reference_return: float


def reward_for(kind: str):
    if kind == "linetrack":
        return linetrack_reward
    if kind == "pixeltrack":
        return pixeltrack_reward
    raise ConfigurationError(f"no reward defined for environment kind {kind!r}")


def policy_actor(pp: PolicyParams):
    """Deterministic argmax controller over the policy head."""
    def act(env, state):
        idx = argmax_action(policy_logits(pp, state), pp.factor_sizes)
        return env.action_spec.decode(idx)
    return act


def _as_actor(policy):
    return policy_actor(policy) if isinstance(policy, PolicyParams) else policy


def run_episodes(env, policy, n: int = EVAL_EPISODES_DEFAULT, seed: int = 0,
                 max_steps: int | None = None) -> list[EpisodeRecord]:
    """Roll n evaluation episodes and return per-episode records.

    `policy` is either PolicyParams (argmax acting) or any callable
    (env, state) -> action, which lets the expert controller be
    evaluated through the identical code path.
    """
    if n < 1:
        raise UsageError(f"episode count must be positive, got {n}")
    actor = _as_actor(policy)
    score = reward_for(env.config.to_dict()["kind"])
    limit = max_steps if max_steps is not None else env.config.step_limit
    records = []
    for i in range(n):
        state = env.reset(seed=substream_seed(seed, "eval-episode", i))
        total = 0.0
        abs_ey = 0.0
        steps = 0
        for _ in range(limit):
            result = env.step(actor(env, state))
            total += score(result.info)
            abs_ey += abs(result.info["e_y"])
            steps += 1
            state = result.state
            if result.done:
                break
        records.append(EpisodeRecord(episode=i, ret=total, steps=steps,
                                     mean_abs_ey=abs_ey / steps if steps else 0.0))
    return records


def returns_of(records) -> list[float]:
    return [float(r.ret) for r in records]


def iqm(values) -> float:
    """Mean of the middle half by sorted rank.

    Boundary ranks that straddle a quartile contribute fractionally
    (weight = overlap of the rank interval [i, i+1) with [n/4, 3n/4]),
    so the statistic is continuous in n and exact for n divisible by 4.
    """
    vals = np.sort(np.asarray(list(values), dtype=np.float64))
    n = vals.size
    if n == 0:
        raise UsageError("iqm needs at least one value")
    lo = n / 4.0
    hi = 3.0 * n / 4.0
    i = np.arange(n, dtype=np.float64)
    w = np.clip(np.minimum(i + 1.0, hi) - np.maximum(i, lo), 0.0, 1.0)
    return float(np.dot(w, vals) / w.sum())


def normalized_iqm(values, reference_return: float) -> float:
    if not np.isfinite(reference_return) or reference_return <= 0:
        raise ConfigurationError(
            f"reference return must be positive, got {reference_return}")
    return iqm(values) / float(reference_return)


def _as_records(items) -> list[EpisodeRecord]:
    out = []
    for i, item in enumerate(items):
        if isinstance(item, EpisodeRecord):
            out.append(item)
        else:
            out.append(EpisodeRecord(episode=i, ret=float(item), steps=0,
                                     mean_abs_ey=0.0))
    return out


def summarize(records, reference_return: float, episode_csv=None,
              summary_csv=None) -> EvalSummary:
    """Aggregate records into an EvalSummary, optionally writing CSVs.

    Accepts either EpisodeRecord items or bare returns (bare values get
    zero steps and zero lateral error in the per-episode CSV).
    """
    recs = _as_records(records)
    if not recs:
        raise UsageError("summarize needs at least one episode")
    rets = [float(r.ret) for r in recs]
    summary = EvalSummary(
        n_episodes=len(rets),
        returns=rets,
        max=max(rets),
        mean=float(np.mean(rets)),
        iqm=iqm(rets),
        normalized_iqm=normalized_iqm(rets, reference_return),
        reference_return=float(reference_return),
    )
    if episode_csv is not None:
        write_episode_csv(episode_csv, recs)
    if summary_csv is not None:
        write_summary_csv(summary_csv, summary)
    return summary


def write_episode_csv(path, records):
    # repr round-trips float64 exactly, keeping recomputation lossless
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EPISODE_CSV_HEADER)
        for r in records:
            w.writerow([r.episode, repr(float(r.ret)), r.steps,
                        repr(float(r.mean_abs_ey))])


def write_summary_csv(path, summary: EvalSummary):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_CSV_HEADER)
        w.writerow([summary.n_episodes, repr(float(summary.max)),
                    repr(float(summary.mean)), repr(float(summary.iqm)),
                    repr(float(summary.normalized_iqm)),
                    repr(float(summary.reference_return))])
