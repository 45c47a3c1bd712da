"""The whole pipeline, miniature: learn to drive from expert states only.

No rewards are read during training and the expert's actions are never
recorded. The policy is trained by pushing its predicted next state
(through the frozen transition model) toward the expert's next state.
The eval score at the end is measured with rewards, but that is
measurement, not training signal.
"""

import numpy as np

from rfrlf.collection import collect
from rfrlf.envs import make_env
from rfrlf.evalkit import returns_of, run_episodes
from rfrlf.expertgen import default_controller, record_expert, trajectory_quality
from rfrlf.seeding import substream_seed
from rfrlf.trainer import TrainConfig, train_policy, train_tspn

cfg = TrainConfig(seed=0)
cfg.phase1.epochs = 8
cfg.phase1.iters_per_epoch = 150
cfg.phase1.batch = 128
cfg.phase1.lr = 1e-2
cfg.phase2.epochs = 10
cfg.phase2.episodes_per_epoch = 6

env = make_env("linetrack")

# phase 1: dynamics from random data
buf = collect(env, None, 20_000, seed=substream_seed(cfg.seed, "collect"))
p1 = train_tspn(buf, cfg, env_config=env.config.to_dict())
print(f"dynamics holdout MSE {p1.holdout_mse[-1]:.2e}")

# expert demonstrations: states only
expert = record_expert(make_env("linetrack"), 10,
                       seed=substream_seed(cfg.seed, "expert"))
q = trajectory_quality(expert)
print(f"expert: {len(expert)} episodes, mean |e_y| {q['mean_abs_ey']:.3f} m")

# phase 2: policy against the frozen model
p2 = train_policy(make_env("linetrack"), expert, p1.tspn, cfg)
print(f"phase 2 best epoch {p2.best_epoch}, "
      f"val loss {min(p2.val_losses):.4f}")

# measure both on the same evaluation seeds
seed = substream_seed(cfg.seed, "eval")
mine = run_episodes(make_env("linetrack"), p2.policy, n=30, seed=seed)
ref = run_episodes(env, default_controller(env), n=30, seed=seed)
print(f"policy return  {np.mean(returns_of(mine)):8.1f}")
print(f"expert return  {np.mean(returns_of(ref)):8.1f}")
