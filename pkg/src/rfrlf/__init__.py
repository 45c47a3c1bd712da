"""Reward-free control via a learned one-step dynamics model.

Two phases: first a target-state prediction network learns one-step
dynamics from random interaction data; then a policy is trained, with
no rewards and no expert actions, by backpropagating the mismatch
between the frozen model's predicted next states and expert next
states.  Rewards exist only as an evaluation yardstick.
"""

__version__ = "0.1.0"
