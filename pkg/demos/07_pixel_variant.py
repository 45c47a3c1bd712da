"""The image-observation track and the convolutional network variant.

States are 24x32 grayscale frames instead of error vectors, so both
networks swap their dense trunks for conv stacks. Runs a handful of
training iterations just to show the wiring; real training wants the
full schedule.
"""

import numpy as np

from rfrlf.collection import collect
from rfrlf.envs import make_env
from rfrlf.trainer import TrainConfig, train_tspn

env = make_env("pixeltrack")
frame = env.reset(seed=0)
print("observation shape:", frame.shape, "values in",
      f"[{frame.min():.2f}, {frame.max():.2f}]")

# crude ascii look at the top third of the frame
glyphs = " .:-=+*#"
for row in np.asarray(frame)[0, :8]:
    line = "".join(glyphs[min(int(v * (len(glyphs) - 1)), len(glyphs) - 1)]
                   for v in row)
    print(line)

buf = collect(env, None, 1500, temperature=1.0, seed=0)
print(f"\ncollected {len(buf)} pixel transitions")

cfg = TrainConfig(seed=0)
cfg.phase1.epochs = 2
cfg.phase1.iters_per_epoch = 25
cfg.phase1.batch = 8
cfg.phase1.horizon = 3
cfg.phase1.channels = (4, 8, 8)

result = train_tspn(buf, cfg, env_config=env.config.to_dict())
print("holdout curve:", " ".join(f"{v:.3e}" for v in result.holdout_mse))
print("variant:", result.tspn.variant)
