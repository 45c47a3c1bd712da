"""Fill a replay buffer with temperature-1 random driving and look at what
window sampling guarantees."""

import numpy as np

from rfrlf.collection import collect, sample_windows, valid_window_starts
from rfrlf.envs import make_env
from rfrlf.seeding import substream

env = make_env("linetrack")
buf = collect(env, None, 5000, temperature=1.0, seed=0)

n = len(buf)
dones = buf.dones[:n]
print(f"{n} transitions, {int(dones.sum())} episode ends")
print(f"mean |e_y| over stored states: {np.abs(buf.states[:n, 2]).mean():.3f} m")

# training consumes fixed-length windows; a window must never straddle an
# episode boundary, so starts are restricted to runs with no interior done
horizon = 5
starts = valid_window_starts(dones, n, horizon)
print(f"{len(starts)} valid window starts at horizon {horizon} "
      f"({n - int(len(starts))} positions excluded)")

rng = substream(0, "demo-windows")
states, actions, next_states = sample_windows(buf, 64, horizon, rng)
print("sampled window batch:", states.shape, actions.shape, next_states.shape)

# the last next_state of each window chains onto the following state
chained = np.allclose(states[:, 1:], next_states[:, :-1])
print("windows are time-contiguous:", bool(chained))
