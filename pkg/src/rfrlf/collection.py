"""Transition storage, random-policy collection, and dataset files.

Storage is float32 throughout (files and memory); training code casts
to float64 at the batch boundary.  Dataset files carry a magic tag, a
length-prefixed JSON manifest, and a flat little-endian float32
payload, so a file written on one machine loads bit-identically on
another.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .envs.actions import ActionSpec
from .errors import (ConfigurationError, DataCorruptionError, DataFormatError,
                     InsufficientDataError, UsageError)
from .expertgen import ExpertTrajectory
from .seeding import substream, substream_seed

DATASET_MAGIC = b"RFRLDS01"
DATASET_VERSION = 1


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray        # one-hot encoding, concatenated factors
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Bounded transition store; oldest entries drop when capacity is hit."""

    def __init__(self, state_shape: tuple[int, ...], action_dim: int,
                 capacity: int):
        if capacity < 1:
            raise ConfigurationError("capacity must be positive")
        self.state_shape = tuple(int(d) for d in state_shape)
        self.action_dim = int(action_dim)
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, *self.state_shape), dtype=np.float32)
        self.actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self.next_states = np.zeros((capacity, *self.state_shape), dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=np.uint8)
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def add(self, state, action, next_state, done: bool):
        state = np.asarray(state, dtype=np.float32)
        next_state = np.asarray(next_state, dtype=np.float32)
        action = np.asarray(action, dtype=np.float32)
        if state.shape != self.state_shape or next_state.shape != self.state_shape:
            raise UsageError(
                f"state shape {state.shape} != buffer shape {self.state_shape}")
        if action.shape != (self.action_dim,):
            raise UsageError(
                f"action shape {action.shape} != ({self.action_dim},)")
        if self.count == self.capacity:
            self.states[:-1] = self.states[1:]
            self.actions[:-1] = self.actions[1:]
            self.next_states[:-1] = self.next_states[1:]
            self.dones[:-1] = self.dones[1:]
            self.count -= 1
        i = self.count
        self.states[i] = state
        self.actions[i] = action
        self.next_states[i] = next_state
        self.dones[i] = 1 if done else 0
        self.count += 1

    def add_transition(self, tr: Transition):
        self.add(tr.state, tr.action, tr.next_state, tr.done)

    def mark_last_done(self):
        """Flag the newest transition as an episode end (tail truncation)."""
        if self.count == 0:
            raise InsufficientDataError("buffer is empty")
        self.dones[self.count - 1] = 1


def collect(env, policy_logits, n_steps: int, temperature: float = 1.0,
            seed: int = 0, buffer: ReplayBuffer | None = None) -> ReplayBuffer:
    """Gather n_steps transitions by sampling the factored action space.

    policy_logits is None (uniform random actions) or a callable
    state -> concatenated per-factor logits.  Factor indices are drawn
    independently from softmax(logits / temperature); temperature 0 is
    treated as exact argmax.  The final stored transition is always
    flagged done so later window sampling can never run off the end of
    a half-collected episode.
    """
    if n_steps < 1:
        raise ConfigurationError("n_steps must be positive")
    if temperature < 0:
        raise ConfigurationError("temperature must be >= 0")
    spec: ActionSpec = env.action_spec
    if buffer is None:
        buffer = ReplayBuffer(env.state_shape, spec.encoding_dim, n_steps)
    rng = substream(seed, "collect-actions")
    episode = 0
    state = env.reset(seed=substream_seed(seed, "collect-episode", str(episode)))
    for _ in range(n_steps):
        logits = (np.zeros(spec.encoding_dim) if policy_logits is None
                  else np.asarray(policy_logits(state), dtype=np.float64))
        indices = _sample_factored(logits, spec, temperature, rng)
        res = env.step(spec.decode(indices))
        buffer.add(state, spec.encode(indices), res.state, res.done)
        if res.done:
            episode += 1
            state = env.reset(
                seed=substream_seed(seed, "collect-episode", str(episode)))
        else:
            state = res.state
    buffer.mark_last_done()
    return buffer


def _sample_factored(logits: np.ndarray, spec: ActionSpec, temperature: float,
                     rng: np.random.Generator) -> tuple[int, ...]:
    indices = []
    for block in spec.split(logits):
        if temperature == 0.0:
            indices.append(int(np.argmax(block)))
            continue
        z = block / temperature
        z = z - z.max()
        p = np.exp(z)
        p /= p.sum()
        indices.append(int(rng.choice(len(block), p=p)))
    return tuple(indices)


def valid_window_starts(dones: np.ndarray, count: int, horizon: int) -> np.ndarray:
    """Start indices whose [i, i+horizon) window contains no episode end.

    A done flag anywhere in the window invalidates it, including at the
    final position, because the step after a done belongs to a new
    episode and the window needs horizon consecutive transitions.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be positive")
    if count < horizon:
        return np.empty(0, dtype=np.int64)
    d = dones[:count].astype(np.int64)
    csum = np.concatenate([[0], np.cumsum(d)])
    window_sums = csum[horizon:] - csum[:-horizon]   # sums over [i, i+h)
    return np.nonzero(window_sums == 0)[0]


def sample_windows(buffer: ReplayBuffer, batch_size: int, horizon: int,
                   rng: np.random.Generator,
                   starts: np.ndarray | None = None):
    """Uniformly sample multi-step windows of consecutive transitions.

    Returns float64 (states, actions, next_states) shaped
    (batch, horizon, ...).  Raises InsufficientDataError when no valid
    window exists.  `starts` restricts sampling to a precomputed start
    pool (train/validation splits reuse valid_window_starts output).
    """
    if batch_size < 1:
        raise ConfigurationError("batch_size must be positive")
    if starts is None:
        starts = valid_window_starts(buffer.dones, buffer.count, horizon)
    if len(starts) == 0:
        raise InsufficientDataError(
            f"no done-free window of horizon {horizon} in {buffer.count} transitions")
    chosen = rng.choice(starts, size=batch_size, replace=True)
    idx = chosen[:, None] + np.arange(horizon)[None, :]
    states = buffer.states[idx].astype(np.float64)
    actions = buffer.actions[idx].astype(np.float64)
    next_states = buffer.next_states[idx].astype(np.float64)
    return states, actions, next_states


# -- dataset files -----------------------------------------------------------

def _write_blob(path, manifest: dict, payload: bytes):
    manifest_bytes = json.dumps(manifest, sort_keys=True,
                                separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(len(manifest_bytes).to_bytes(4, "little"))
        f.write(manifest_bytes)
        f.write(payload)


def _read_blob(path) -> tuple[dict, bytes]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(DATASET_MAGIC) + 4 or not raw.startswith(DATASET_MAGIC):
        raise DataFormatError(f"{path}: not a dataset file (bad magic)")
    off = len(DATASET_MAGIC)
    mlen = int.from_bytes(raw[off:off + 4], "little")
    off += 4
    if off + mlen > len(raw):
        raise DataCorruptionError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[off:off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataCorruptionError(f"{path}: unreadable manifest: {exc}")
    if manifest.get("version") != DATASET_VERSION:
        raise DataFormatError(
            f"{path}: unsupported dataset version {manifest.get('version')!r}")
    return manifest, raw[off + mlen:]


def save_transitions(path, buffer: ReplayBuffer, env_kind: str,
                     extra: dict | None = None):
    n = buffer.count
    manifest = {
        "version": DATASET_VERSION, "kind": "transitions", "env": env_kind,
        "state_shape": list(buffer.state_shape), "action_dim": buffer.action_dim,
        "count": n, "dtype": "<f4",
    }
    if extra:
        manifest["extra"] = extra
    payload = b"".join([
        np.ascontiguousarray(buffer.states[:n]).tobytes(),
        np.ascontiguousarray(buffer.actions[:n]).tobytes(),
        np.ascontiguousarray(buffer.next_states[:n]).tobytes(),
        buffer.dones[:n].astype("<f4").tobytes(),
    ])
    _write_blob(path, manifest, payload)


def load_transitions(path) -> tuple[ReplayBuffer, dict]:
    manifest, payload = _read_blob(path)
    if manifest.get("kind") != "transitions":
        raise DataFormatError(
            f"{path}: expected a transitions dataset, found {manifest.get('kind')!r}")
    shape = tuple(manifest["state_shape"])
    a_dim = int(manifest["action_dim"])
    n = int(manifest["count"])
    d = int(np.prod(shape))
    expect = (2 * n * d + n * a_dim + n) * 4
    if len(payload) != expect:
        raise DataCorruptionError(
            f"{path}: payload is {len(payload)} bytes, expected {expect}")
    flat = np.frombuffer(payload, dtype="<f4")
    buf = ReplayBuffer(shape, a_dim, max(n, 1))
    o = 0
    buf.states[:n] = flat[o:o + n * d].reshape(n, *shape); o += n * d
    buf.actions[:n] = flat[o:o + n * a_dim].reshape(n, a_dim); o += n * a_dim
    buf.next_states[:n] = flat[o:o + n * d].reshape(n, *shape); o += n * d
    dones = flat[o:o + n]
    if not np.all((dones == 0.0) | (dones == 1.0)):
        raise DataCorruptionError(f"{path}: done flags must be 0 or 1")
    buf.dones[:n] = dones.astype(np.uint8)
    buf.count = n
    return buf, manifest


def save_trajectories(path, trajectories: list[ExpertTrajectory],
                      extra: dict | None = None):
    if not trajectories:
        raise ConfigurationError("no trajectories to save")
    t0 = trajectories[0]
    shape = tuple(t0.states.shape[1:])
    pose_dim = t0.poses.shape[1]
    for t in trajectories:
        if tuple(t.states.shape[1:]) != shape or t.poses.shape[1] != pose_dim:
            raise ConfigurationError("trajectories disagree on shapes")
    manifest = {
        "version": DATASET_VERSION, "kind": "trajectories", "env": t0.env_kind,
        "state_shape": list(shape), "pose_dim": pose_dim, "dt": t0.dt,
        "episode_lengths": [len(t) for t in trajectories], "dtype": "<f4",
    }
    if extra:
        manifest["extra"] = extra
    parts = []
    for t in trajectories:
        parts.append(np.ascontiguousarray(t.states, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(t.poses, dtype="<f4").tobytes())
    _write_blob(path, manifest, b"".join(parts))


def load_trajectories(path) -> tuple[list[ExpertTrajectory], dict]:
    manifest, payload = _read_blob(path)
    if manifest.get("kind") != "trajectories":
        raise DataFormatError(
            f"{path}: expected a trajectories dataset, found {manifest.get('kind')!r}")
    shape = tuple(manifest["state_shape"])
    pose_dim = int(manifest["pose_dim"])
    lengths = [int(x) for x in manifest["episode_lengths"]]
    d = int(np.prod(shape))
    expect = sum(n * (d + pose_dim) for n in lengths) * 4
    if len(payload) != expect:
        raise DataCorruptionError(
            f"{path}: payload is {len(payload)} bytes, expected {expect}")
    flat = np.frombuffer(payload, dtype="<f4")
    out, o = [], 0
    for n in lengths:
        states = flat[o:o + n * d].reshape(n, *shape).astype(np.float64); o += n * d
        poses = flat[o:o + n * pose_dim].reshape(n, pose_dim).astype(np.float64)
        o += n * pose_dim
        out.append(ExpertTrajectory(states=states, poses=poses,
                                    env_kind=manifest["env"], dt=manifest["dt"]))
    return out, manifest
