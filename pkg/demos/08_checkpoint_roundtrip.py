"""Checkpoints are deterministic byte-for-byte.

Same params, same bytes, every time: the file format has no timestamps
and a canonical manifest, so identical training runs produce identical
artifacts you can diff or hash in CI.
"""

import hashlib
import tempfile
from pathlib import Path

import numpy as np

from rfrlf.checkpoint import load_checkpoint
from rfrlf.tspn import init_tspn, load_tspn, save_tspn

tp = init_tspn("dense", (18,), 21, seed=5)
tp.training_finalized = True

with tempfile.TemporaryDirectory() as d:
    a, b = Path(d) / "a.ck", Path(d) / "b.ck"
    save_tspn(tp, a)
    save_tspn(tp, b)
    ha = hashlib.sha256(a.read_bytes()).hexdigest()
    hb = hashlib.sha256(b.read_bytes()).hexdigest()
    print("sha256(a) =", ha[:32], "...")
    print("sha256(b) =", hb[:32], "...")
    print("identical:", ha == hb)

    ck = load_checkpoint(a)
    print("kind:", ck.kind, "| variant:", ck.variant,
          "| finalized:", ck.finalized)
    print("layers:", len(list(ck.params.names())),
          "| first:", next(iter(ck.params.names())))

    # loading restores arrays exactly (weights travel as float32)
    back = load_tspn(a)
    same = all(np.array_equal(back.params.entry(n).array,
                              np.asarray(tp.params.entry(n).array,
                                         dtype=np.float32).astype(np.float64))
               for n in tp.params.names())
    print("float32 roundtrip exact:", same)
