"""Reverse-mode autodiff from the ground up.

Build a tiny computation out of the library's primitives, pull gradients
back through it, and cross-check one of them against central finite
differences.
"""

import numpy as np

from rfrlf.diffcore import (ParamSet, Tensor, dense, finite_diff_check,
                            mean_all, relu, square, sub, value_and_grad)

rng = np.random.default_rng(3)

# a one-layer regression: y = relu(W x + b), loss = mean((y - t)^2)
params = ParamSet()
params.add("w", rng.normal(size=(4, 6)) * 0.5)
params.add("b", rng.normal(size=4) * 0.1)

x = rng.normal(size=(8, 6))
t = rng.normal(size=(8, 4))


def loss_fn(leaves):
    y = relu(dense(Tensor(x), leaves["w"], leaves["b"]))
    return mean_all(square(sub(y, Tensor(t))))


value, grads = value_and_grad(loss_fn, params)
print(f"loss          {value:.6f}")
print(f"dL/dw norm    {np.linalg.norm(grads['w']):.6f}")
print(f"dL/db norm    {np.linalg.norm(grads['b']):.6f}")

# the same gradients, measured numerically
report = finite_diff_check(loss_fn, params, step=1e-6)
print(f"fd max rel err {report.max_rel_error:.2e} "
      f"(worst at {report.worst_param}{report.worst_index})")

# freezing removes a parameter from the gradient set but not the forward
params.freeze("b")
_, grads = value_and_grad(loss_fn, params)
print(f"after freeze  dL/db = {np.linalg.norm(grads['b']):.1f} (zeroed)")
