"""Run configuration files.

A run is fully described by one INI-style file of flat `key = value`
sections.  Loading is strict: unknown sections or keys are rejected, as
are values that fail type coercion or the trainer's own validation.
The only environment-variable override honoured anywhere is RFRLF_SEED,
and an explicit seed passed by the caller (the CLI `--seed` flag) beats
both the variable and the file.

`config_hash` digests the canonical rendering of every semantic field;
the [paths] section is excluded so relocating outputs does not change
checkpoint identity.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field, fields, replace

from .envs import make_env
from .envs.linetrack import LineTrackConfig
from .envs.pixeltrack import PixelTrackConfig
from .errors import ConfigurationError
from .trainer import PRESETS, TrainConfig

ENV_KINDS = ("linetrack", "pixeltrack")

SEED_ENV_VAR = "RFRLF_SEED"


def _parse_int_tuple(text: str) -> tuple:
    return tuple(int(p.strip()) for p in text.split(",") if p.strip())


# section -> key -> coercion callable.  None values stay None; the
# empty string also decodes to None for optional keys.
_OPTIONAL = frozenset({
    ("environment", "dt"), ("environment", "steering_bins"),
    ("environment", "img_height"), ("environment", "img_width"),
    ("environment", "step_limit"),
    ("phase1", "hidden"), ("phase1", "channels"),
    ("evaluation", "max_steps"), ("evaluation", "reference"),
})

SCHEMA = {
    "environment": {
        "kind": str,
        "dt": float,
        "steering_bins": int,
        "img_height": int,
        "img_width": int,
        "step_limit": int,
    },
    "collection": {
        "temperature": float,
        "n_steps": int,
    },
    "phase1": {
        "epochs": int,
        "iters_per_epoch": int,
        "batch": int,
        "lr": float,
        "lr_schedule": str,
        "decay_every": int,
        "decay_factor": float,
        "horizon": int,
        "eps0": float,
        "eps_final": float,
        "clip": float,
        "holdout_fraction": float,
        "divergence_limit": float,
        "hidden": _parse_int_tuple,
        "channels": _parse_int_tuple,
    },
    "phase2": {
        "epochs": int,
        "batch": int,
        "lr": float,
        "patience": int,
        "clip": float,
        "freeze_mode": str,
        "episodes_per_epoch": int,
        "val_fraction": float,
        "tau": float,
    },
    "evaluation": {
        "episodes": int,
        "expert_episodes": int,
        "max_steps": int,
        "reference": float,
    },
    "seeds": {
        "seed": int,
    },
    "paths": {
        "out_dir": str,
    },
}

_SECTION_ORDER = ("environment", "collection", "phase1", "phase2",
                  "evaluation", "seeds", "paths")

# environment keys legal for each kind (besides "kind" itself)
_ENV_KEYS = {
    "linetrack": ("dt", "steering_bins", "step_limit"),
    "pixeltrack": ("dt", "img_height", "img_width", "step_limit"),
}
_ENV_FIELD = {"steering_bins": "steering_bins", "dt": "dt",
              "step_limit": "step_limit", "img_height": "img_height",
              "img_width": "img_width"}


@dataclass
class RunConfig:
    """Everything one pipeline run needs, minus file paths on the CLI."""
    env_kind: str = "linetrack"
    env_overrides: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_episodes: int = 200
    expert_episodes: int = 10
    eval_max_steps: int | None = None
    eval_reference: float | None = None
    out_dir: str = "."

    def validate(self) -> None:
        if self.env_kind not in ENV_KINDS:
            raise ConfigurationError(
                f"environment.kind must be one of {ENV_KINDS}, got {self.env_kind!r}")
        for key in self.env_overrides:
            if key not in _ENV_KEYS[self.env_kind]:
                raise ConfigurationError(
                    f"environment.{key} does not apply to {self.env_kind}")
        self.train.validate()
        if self.eval_episodes < 1:
            raise ConfigurationError(
                f"evaluation.episodes must be >= 1, got {self.eval_episodes}")
        if self.expert_episodes < 1:
            raise ConfigurationError(
                f"evaluation.expert_episodes must be >= 1, got {self.expert_episodes}")
        if self.eval_max_steps is not None and self.eval_max_steps < 1:
            raise ConfigurationError(
                f"evaluation.max_steps must be >= 1, got {self.eval_max_steps}")
        if self.eval_reference is not None and self.eval_reference <= 0:
            raise ConfigurationError(
                f"evaluation.reference must be positive, got {self.eval_reference}")
        # instantiating the environment config runs its own checks
        self.make_env_config()

    def seed(self) -> int:
        return self.train.seed

    def make_env_config(self):
        base = LineTrackConfig() if self.env_kind == "linetrack" else PixelTrackConfig()
        kw = {_ENV_FIELD[k]: v for k, v in self.env_overrides.items()}
        try:
            return replace(base, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad environment override: {exc}")

    def build_env(self):
        return make_env(self.env_kind, self.make_env_config())


def default_run_config(env_kind: str = "linetrack",
                       preset: str = "desk") -> RunConfig:
    if preset not in PRESETS:
        raise ConfigurationError(
            f"preset must be one of {sorted(PRESETS)}, got {preset!r}")
    cfg = RunConfig(env_kind=env_kind, train=PRESETS[preset]())
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# serialization

def _render_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _effective(cfg: RunConfig) -> dict:
    """Flatten a RunConfig into {section: {key: value}} with every
    schema key present."""
    p1, p2, col = cfg.train.phase1, cfg.train.phase2, cfg.train.collection
    env = {"kind": cfg.env_kind}
    for key in SCHEMA["environment"]:
        if key != "kind":
            env[key] = cfg.env_overrides.get(key)
    return {
        "environment": env,
        "collection": {"temperature": col.temperature, "n_steps": col.n_steps},
        "phase1": {
            "epochs": p1.epochs, "iters_per_epoch": p1.iters_per_epoch,
            "batch": p1.batch, "lr": p1.lr, "lr_schedule": p1.lr_schedule,
            "decay_every": p1.decay_every, "decay_factor": p1.decay_factor,
            "horizon": p1.horizon, "eps0": p1.eps0,
            "eps_final": p1.eps_final, "clip": p1.clip,
            "holdout_fraction": p1.holdout_fraction,
            "divergence_limit": p1.divergence_limit,
            "hidden": p1.hidden, "channels": p1.channels,
        },
        "phase2": {
            "epochs": p2.epochs, "batch": p2.batch, "lr": p2.lr,
            "patience": p2.patience, "clip": p2.clip,
            "freeze_mode": p2.freeze_mode,
            "episodes_per_epoch": p2.episodes_per_epoch,
            "val_fraction": p2.val_fraction, "tau": p2.tau,
        },
        "evaluation": {
            "episodes": cfg.eval_episodes,
            "expert_episodes": cfg.expert_episodes,
            "max_steps": cfg.eval_max_steps,
            "reference": cfg.eval_reference,
        },
        "seeds": {"seed": cfg.train.seed},
        "paths": {"out_dir": cfg.out_dir},
    }


def render_config(cfg: RunConfig) -> str:
    """Canonical INI text: fixed section order, every key explicit."""
    lines = []
    eff = _effective(cfg)
    for section in _SECTION_ORDER:
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            lines.append(f"{key} = {_render_value(eff[section][key])}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: RunConfig) -> str:
    """sha256 of the canonical rendering, [paths] excluded."""
    text = render_config(cfg)
    head, _, _ = text.partition("[paths]")
    return hashlib.sha256(head.encode("utf-8")).hexdigest()


def write_example_config(path, env_kind: str = "linetrack",
                         preset: str = "desk") -> RunConfig:
    cfg = default_run_config(env_kind, preset)
    with open(path, "w", newline="\n") as f:
        f.write(render_config(cfg))
    return cfg


# ---------------------------------------------------------------------------
# parsing

def _parse_ini(text: str, path) -> dict:
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
        strict=True, empty_lines_in_values=False)
    parser.optionxform = str      # keys are case-sensitive
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}")
    if parser.defaults():
        raise ConfigurationError(f"{path}: keys outside any known [section]")
    return {s: dict(parser.items(s)) for s in parser.sections()}


def load_run_config(path, seed_override: int | None = None) -> RunConfig:
    """Read, coerce, and validate a run config file.

    Seed precedence: seed_override argument (the CLI flag), then the
    RFRLF_SEED environment variable, then [seeds] seed in the file.
    """
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}")
    raw = _parse_ini(text, path)

    for section in raw:
        if section not in SCHEMA:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
        for key in raw[section]:
            if key not in SCHEMA[section]:
                raise ConfigurationError(
                    f"{path}: unknown key {key!r} in [{section}]")

    def get(section, key, default):
        if section not in raw or key not in raw[section]:
            return default
        value = raw[section][key]
        if value == "":
            if (section, key) in _OPTIONAL:
                return None
            raise ConfigurationError(
                f"{path}: [{section}] {key} must not be empty")
        try:
            return SCHEMA[section][key](value)
        except (TypeError, ValueError):
            raise ConfigurationError(
                f"{path}: [{section}] {key}: cannot parse {value!r}")

    cfg = RunConfig()
    cfg.env_kind = get("environment", "kind", cfg.env_kind)
    if cfg.env_kind not in ENV_KINDS:
        raise ConfigurationError(
            f"{path}: environment.kind must be one of {ENV_KINDS}, got {cfg.env_kind!r}")
    for key in SCHEMA["environment"]:
        if key == "kind":
            continue
        v = get("environment", key, None)
        if v is not None:
            cfg.env_overrides[key] = v

    col, p1, p2 = cfg.train.collection, cfg.train.phase1, cfg.train.phase2
    col.temperature = get("collection", "temperature", col.temperature)
    col.n_steps = get("collection", "n_steps", col.n_steps)
    for f_ in fields(p1):
        setattr(p1, f_.name, get("phase1", f_.name, getattr(p1, f_.name)))
    for f_ in fields(p2):
        setattr(p2, f_.name, get("phase2", f_.name, getattr(p2, f_.name)))

    cfg.eval_episodes = get("evaluation", "episodes", cfg.eval_episodes)
    cfg.expert_episodes = get("evaluation", "expert_episodes", cfg.expert_episodes)
    cfg.eval_max_steps = get("evaluation", "max_steps", cfg.eval_max_steps)
    cfg.eval_reference = get("evaluation", "reference", cfg.eval_reference)
    cfg.out_dir = get("paths", "out_dir", cfg.out_dir)

    cfg.train.seed = get("seeds", "seed", cfg.train.seed)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            cfg.train.seed = int(env_seed)
        except ValueError:
            raise ConfigurationError(
                f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}")
    if seed_override is not None:
        cfg.train.seed = int(seed_override)

    cfg.validate()
    return cfg
