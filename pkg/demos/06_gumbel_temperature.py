"""How the Gumbel-Softmax temperature shapes relaxed action draws.

Actions here are factored (7 steering bins x 3 throttle bins). Each
factor block is a simplex; high temperature smears mass, low temperature
pins it to the argmax of the noise-perturbed logits.
"""

import numpy as np

from rfrlf.diffcore import Tensor
from rfrlf.rfsgpn import gumbel_softmax, sample_gumbel
from rfrlf.seeding import substream

rng = substream(0, "demo-gumbel")
factor_sizes = (7, 3)
logits = rng.normal(size=10)
noise = sample_gumbel(rng, logits.shape)

print("steering block of one draw at several temperatures:")
for tau in (5.0, 1.0, 0.3, 0.05):
    y = gumbel_softmax(Tensor(logits), factor_sizes, tau, noise=noise).data
    steer = y[:7]
    bars = " ".join(f"{v:.2f}" for v in steer)
    print(f"  tau={tau:<4} [{bars}]  max={steer.max():.3f}")

# the hard variant forwards a one-hot but keeps the soft gradient path
y_hard = gumbel_softmax(Tensor(logits), factor_sizes, 1.0, noise=noise,
                        hard=True).data
print("hard draw:", y_hard.astype(int))

# empirical draw frequencies approach softmax(logits) regardless of tau
draws = np.zeros(7)
for _ in range(4000):
    g = sample_gumbel(rng, 7)
    draws[np.argmax(logits[:7] + g)] += 1
emp = draws / draws.sum()
ref = np.exp(logits[:7]) / np.exp(logits[:7]).sum()
print("empirical pick rate:", np.round(emp, 3))
print("softmax(logits):    ", np.round(ref, 3))
