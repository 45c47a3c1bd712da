"""Command-line pipeline driver.

Seven subcommands cover the full workflow: collect, record-expert,
train-tspn, train-policy, eval, rollout, sensitivity.  Every run writes
a manifest file (key = value lines, no timestamps) holding the
effective configuration, the seed, and sha256 digests of every input
and output, so a run can be reproduced exactly from its manifest.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 bad
configuration.  Errors print a single line `error: ...` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys

from .collection import (collect, load_trajectories, load_transitions,
                         save_trajectories, save_transitions)
from .config import (RunConfig, SCHEMA, _effective, config_hash,
                     default_run_config, load_run_config,
                     write_example_config)
from .envs import env_config_from_dict, make_env
from .errors import ConfigurationError, RfrlfError, UsageError
from .evalkit import iqm, returns_of, reward_for, run_episodes, summarize
from .expertgen import default_controller, record_expert, trajectory_quality
from .rfsgpn import argmax_action, load_policy, policy_logits, save_policy
from .seeding import substream_seed
from .trainer import (SENSITIVITY_LABELS, sensitivity_suite, train_policy,
                      train_tspn)
from .tspn import load_tspn, save_tspn

PROG = "rfrlf"


class _Parser(argparse.ArgumentParser):
    """argparse with single-line errors on exit code 2."""

    def error(self, message):
        self.exit(2, f"error: {message}\n")


# ---------------------------------------------------------------------------
# small helpers

def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, command: str, cfg: RunConfig,
                    inputs: dict, outputs: dict):
    lines = [f"command = {command}",
             f"seed = {cfg.train.seed}",
             f"config_hash = {config_hash(cfg)}"]
    eff = _effective(cfg)
    for section in SCHEMA:
        for key in SCHEMA[section]:
            v = eff[section][key]
            v = "" if v is None else v
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"config.{section}.{key} = {v}")
    for name in sorted(inputs):
        lines.append(f"input.{name}.path = {inputs[name]}")
        lines.append(f"input.{name}.sha256 = {_sha256_file(inputs[name])}")
    for name in sorted(outputs):
        lines.append(f"output.{name}.path = {outputs[name]}")
        lines.append(f"output.{name}.sha256 = {_sha256_file(outputs[name])}")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, float) else x
                        for x in row])


def _load_cfg(args) -> RunConfig:
    seed = getattr(args, "seed", None)
    if args.config is None:
        cfg = default_run_config()
        if seed is not None:
            cfg.train.seed = seed
        return cfg
    return load_run_config(args.config, seed_override=seed)


def _env_from_checkpoint_or_cfg(args, embedded: dict):
    """eval/rollout can run from the checkpoint's recorded environment
    when no config file is given."""
    if args.config is not None:
        cfg = _load_cfg(args)
        if embedded.get("kind") and embedded["kind"] != cfg.env_kind:
            raise ConfigurationError(
                f"checkpoint was trained on {embedded['kind']!r} but the "
                f"config selects {cfg.env_kind!r}")
        return cfg, cfg.build_env()
    cfg = default_run_config()
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    if embedded.get("kind"):
        cfg.env_kind = embedded["kind"]
        return cfg, make_env(cfg.env_kind, env_config_from_dict(embedded))
    return cfg, cfg.build_env()


def _require_env_match(path, file_env: str, cfg_env: str):
    if file_env != cfg_env:
        raise ConfigurationError(
            f"{path} holds {file_env!r} data but the config selects {cfg_env!r}")


# ---------------------------------------------------------------------------
# subcommands

def cmd_collect(args) -> int:
    cfg = _load_cfg(args)
    env = cfg.build_env()
    col = cfg.train.collection
    buf = collect(env, None, col.n_steps, temperature=col.temperature,
                  seed=substream_seed(cfg.train.seed, "collect"))
    save_transitions(args.out, buf, cfg.env_kind,
                     extra={"config_hash": config_hash(cfg)})
    _write_manifest(args.manifest or args.out + ".manifest", "collect", cfg,
                    _cfg_input(args), {"transitions": args.out})
    print(f"collected {len(buf)} transitions -> {args.out}")
    return 0


def cmd_record_expert(args) -> int:
    cfg = _load_cfg(args)
    env = cfg.build_env()
    n = args.episodes if args.episodes is not None else cfg.expert_episodes
    if n < 1:
        raise UsageError("--episodes must be >= 1")
    trajs = record_expert(env, n, seed=substream_seed(cfg.train.seed, "expert"),
                          max_steps=cfg.eval_max_steps)
    save_trajectories(args.out, trajs, extra={"config_hash": config_hash(cfg)})
    _write_manifest(args.manifest or args.out + ".manifest", "record-expert",
                    cfg, _cfg_input(args), {"trajectories": args.out})
    q = trajectory_quality(trajs)
    print(f"recorded {len(trajs)} trajectories -> {args.out} "
          f"(mean |e_y| {q['mean_abs_ey']:.4f} m)")
    return 0


def cmd_train_tspn(args) -> int:
    cfg = _load_cfg(args)
    buf, manifest = load_transitions(args.data)
    _require_env_match(args.data, manifest.get("env", ""), cfg.env_kind)
    result = train_tspn(buf, cfg.train,
                        env_config=cfg.make_env_config().to_dict())
    save_tspn(result.tspn, args.out, config_hash=config_hash(cfg))
    outputs = {"checkpoint": args.out}
    if args.curves:
        rows = [(-1, "", "", result.holdout_mse[0])]
        for i in range(len(result.train_losses)):
            rows.append((i, result.epsilons[i], result.train_losses[i],
                         result.holdout_mse[i + 1]))
        _write_csv(args.curves, ("epoch", "epsilon", "train_loss", "holdout_mse"),
                   rows)
        outputs["curves"] = args.curves
    inputs = _cfg_input(args)
    inputs["transitions"] = args.data
    _write_manifest(args.manifest or args.out + ".manifest", "train-tspn",
                    cfg, inputs, outputs)
    print(f"transition model -> {args.out} "
          f"(holdout mse {result.holdout_mse[-1]:.6e}, "
          f"improvement {result.holdout_mse[0] / result.holdout_mse[-1]:.1f}x)")
    return 0


def cmd_train_policy(args) -> int:
    cfg = _load_cfg(args)
    tp = load_tspn(args.tspn)
    trajs, manifest = load_trajectories(args.expert)
    _require_env_match(args.expert, manifest.get("env", ""), cfg.env_kind)
    env = cfg.build_env()
    result = train_policy(env, trajs, tp, cfg.train)
    save_policy(result.policy, args.out, config_hash=config_hash(cfg))
    outputs = {"checkpoint": args.out}
    if args.curves:
        rows = [(i, result.train_losses[i], result.val_losses[i])
                for i in range(len(result.train_losses))]
        _write_csv(args.curves, ("epoch", "train_loss", "val_loss"), rows)
        outputs["curves"] = args.curves
    inputs = _cfg_input(args)
    inputs["tspn"] = args.tspn
    inputs["trajectories"] = args.expert
    _write_manifest(args.manifest or args.out + ".manifest", "train-policy",
                    cfg, inputs, outputs)
    tag = "stopped early" if result.stopped_early else "ran full schedule"
    print(f"policy -> {args.out} (best epoch {result.best_epoch}, "
          f"val loss {result.val_losses[result.best_epoch]:.6e}, {tag})")
    return 0


def cmd_eval(args) -> int:
    pp = load_policy(args.checkpoint)
    cfg, env = _env_from_checkpoint_or_cfg(args, pp.env_config)
    n = args.episodes if args.episodes is not None else cfg.eval_episodes
    if n < 1:
        raise UsageError("--episodes must be >= 1")
    eval_seed = substream_seed(cfg.train.seed, "eval")
    records = run_episodes(env, pp, n=n, seed=eval_seed,
                           max_steps=cfg.eval_max_steps)
    reference = args.reference if args.reference is not None else cfg.eval_reference
    if reference is None:
        ref_env = cfg.build_env() if args.config else make_env(
            env.config.to_dict()["kind"], env.config)
        expert_records = run_episodes(ref_env, default_controller(ref_env),
                                      n=n, seed=eval_seed,
                                      max_steps=cfg.eval_max_steps)
        reference = iqm(returns_of(expert_records))
    summary = summarize(records, reference, episode_csv=args.episode_csv,
                        summary_csv=args.summary_csv)
    inputs = _cfg_input(args)
    inputs["checkpoint"] = args.checkpoint
    outputs = {}
    if args.episode_csv:
        outputs["episodes"] = args.episode_csv
    if args.summary_csv:
        outputs["summary"] = args.summary_csv
    manifest_path = args.manifest or (
        (args.summary_csv or args.episode_csv or "eval") + ".manifest")
    _write_manifest(manifest_path, "eval", cfg, inputs, outputs)
    for key in ("n_episodes", "max", "mean", "iqm", "normalized_iqm",
                "reference_return"):
        print(f"{key} = {getattr(summary, key)}")
    return 0


def cmd_rollout(args) -> int:
    if args.checkpoint is not None:
        pp = load_policy(args.checkpoint)
        cfg, env = _env_from_checkpoint_or_cfg(args, pp.env_config)

        def actor(e, s):
            idx = argmax_action(policy_logits(pp, s), pp.factor_sizes)
            return e.action_spec.decode(idx)
    else:
        cfg = _load_cfg(args)
        env = cfg.build_env()
        actor = default_controller(env)
    reward_fn = reward_for(env.config.to_dict()["kind"])
    state = env.reset(seed=substream_seed(cfg.train.seed, "rollout"))
    limit = args.steps if args.steps is not None else env.config.step_limit
    rows, ret, step = [], 0.0, 0
    done = False
    while step < limit and not done:
        res = env.step(actor(env, state))
        r = reward_fn(res.info)
        ret += r
        step += 1
        rows.append((step, r, ret, res.info["v"], res.info["e_y"],
                     res.info["e_phi_deg"], int(res.done)))
        state, done = res.state, res.done
    if args.csv:
        _write_csv(args.csv, ("step", "reward", "return", "v", "e_y",
                              "e_phi_deg", "done"), rows)
        inputs = _cfg_input(args)
        if args.checkpoint:
            inputs["checkpoint"] = args.checkpoint
        _write_manifest(args.manifest or args.csv + ".manifest", "rollout",
                        cfg, inputs, {"trace": args.csv})
    who = args.checkpoint or "expert controller"
    print(f"rollout of {who}: {step} steps, return {ret:.3f}")
    return 0


def cmd_sensitivity(args) -> int:
    cfg = _load_cfg(args)
    labels = tuple(args.cells.split(",")) if args.cells else SENSITIVITY_LABELS
    grid = sensitivity_suite(cfg.env_kind, cfg.train,
                             n_expert_episodes=cfg.expert_episodes,
                             n_eval_episodes=cfg.eval_episodes, labels=labels)
    os.makedirs(args.out_dir, exist_ok=True)
    grid_csv = os.path.join(args.out_dir, "sensitivity.csv")
    rows = []
    for cell in grid:
        if cell.error is not None:
            rows.append((cell.label, "", "", "", "", "", cell.error))
            print(f"{cell.label}: ERROR {cell.error}")
            continue
        s = cell.summary
        rows.append((cell.label, s.n_episodes, s.max, s.mean, s.iqm,
                     s.normalized_iqm, ""))
        print(f"{cell.label}: iqm {s.iqm:.3f} (normalized {s.normalized_iqm:.3f})")
    _write_csv(grid_csv, ("cell", "n_episodes", "max", "mean", "iqm",
                          "normalized_iqm", "error"), rows)
    _write_manifest(os.path.join(args.out_dir, "sensitivity.manifest"),
                    "sensitivity", cfg, _cfg_input(args),
                    {"grid": grid_csv})
    return 0


def cmd_init_config(args) -> int:
    write_example_config(args.out, env_kind=args.env, preset=args.preset)
    print(f"wrote {args.preset} config for {args.env} -> {args.out}")
    return 0


def _cfg_input(args) -> dict:
    return {"config": args.config} if getattr(args, "config", None) else {}


# ---------------------------------------------------------------------------
# parser wiring

def build_parser() -> _Parser:
    p = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser,
                           metavar="COMMAND")
    sub.required = True

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="run config file (INI)")
        sp.add_argument("--seed", type=int, help="seed override")
        sp.add_argument("--manifest", help="manifest path override")
        return sp

    sp = add("collect", cmd_collect, "gather random-policy transitions")
    sp.add_argument("--out", required=True, help="transitions dataset path")

    sp = add("record-expert", cmd_record_expert,
             "record expert state trajectories")
    sp.add_argument("--episodes", type=int, help="number of episodes")
    sp.add_argument("--out", required=True, help="trajectory dataset path")

    sp = add("train-tspn", cmd_train_tspn, "fit the transition model")
    sp.add_argument("--data", required=True, help="transitions dataset")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--curves", help="loss-curve CSV path")

    sp = add("train-policy", cmd_train_policy,
             "train the policy against a frozen transition model")
    sp.add_argument("--tspn", required=True, help="transition-model checkpoint")
    sp.add_argument("--expert", required=True, help="expert trajectory dataset")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--curves", help="loss-curve CSV path")

    sp = add("eval", cmd_eval, "evaluate a policy checkpoint")
    sp.add_argument("--checkpoint", required=True, help="policy checkpoint")
    sp.add_argument("--episodes", type=int, help="episode count")
    sp.add_argument("--reference", type=float,
                    help="fixed reference return (default: expert controller)")
    sp.add_argument("--episode-csv", help="per-episode CSV path")
    sp.add_argument("--summary-csv", help="summary CSV path")

    sp = add("rollout", cmd_rollout, "trace one episode to a CSV")
    sp.add_argument("--checkpoint", help="policy checkpoint "
                    "(omit to roll the expert controller)")
    sp.add_argument("--steps", type=int, help="step cap (default: env limit)")
    sp.add_argument("--csv", help="per-step trace CSV path")

    sp = add("sensitivity", cmd_sensitivity, "run the hyperparameter grid")
    sp.add_argument("--out-dir", required=True, help="output directory")
    sp.add_argument("--cells", help="comma-separated cell labels "
                    f"(default: {','.join(SENSITIVITY_LABELS)})")

    sp = sub.add_parser("init-config", help="write an example config file")
    sp.set_defaults(func=cmd_init_config)
    sp.add_argument("--env", default="linetrack",
                    choices=("linetrack", "pixeltrack"))
    sp.add_argument("--preset", default="desk",
                    choices=("desk", "fullscale", "study"))
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return 3
    except UsageError as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    except RfrlfError as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
