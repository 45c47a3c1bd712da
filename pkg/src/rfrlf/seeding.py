"""Deterministic derivation of named random substreams from one master seed.

Every stochastic component (collection, init, gumbel noise, eval, ...)
draws from its own substream so components can be added or reordered
without perturbing each other's draws, and identical (seed, labels)
always reproduce the same stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(master: int, *labels: object) -> int:
    """64-bit seed for the substream identified by ``labels`` under ``master``."""
    material = str(int(master)).encode("utf-8")
    for label in labels:
        material += b"/" + str(label).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master: int, *labels: object) -> np.random.Generator:
    """A PCG64 generator seeded from the (master, labels) derivation."""
    return np.random.default_rng(substream_seed(master, *labels))
