"""Model checkpoint files: magic tag, JSON manifest, float32 payload.

The manifest lists every layer (name, shape, frozen flag) in parameter
order, any auxiliary arrays (standardizer statistics and the like),
free-form metadata, and a sha256 of the payload bytes.  Writing is
deterministic: saving the same model twice produces identical bytes,
and save -> load -> save is the identity on the file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .diffcore import ParamSet
from .errors import DataCorruptionError, DataFormatError

CHECKPOINT_MAGIC = b"RFRLCK01"
CHECKPOINT_VERSION = 1


@dataclass
class CheckpointData:
    kind: str
    variant: str
    params: ParamSet
    aux: dict
    meta: dict
    finalized: bool
    config_hash: str
    manifest: dict = field(repr=False, default_factory=dict)


def save_checkpoint(path, *, kind: str, variant: str, params: ParamSet,
                    aux: dict | None = None, meta: dict | None = None,
                    finalized: bool = False, config_hash: str = ""):
    aux = aux or {}
    meta = meta or {}
    layers = []
    parts = []
    for name, e in params.items():
        arr = np.ascontiguousarray(e.array, dtype="<f4")
        layers.append({"name": name, "shape": list(e.array.shape),
                       "frozen": bool(e.frozen)})
        parts.append(arr.tobytes())
    aux_entries = []
    for name in sorted(aux):
        arr = np.ascontiguousarray(np.asarray(aux[name]), dtype="<f4")
        aux_entries.append({"name": name, "shape": list(arr.shape)})
        parts.append(arr.tobytes())
    payload = b"".join(parts)
    manifest = {
        "version": CHECKPOINT_VERSION, "kind": kind, "variant": variant,
        "finalized": bool(finalized), "config_hash": config_hash,
        "layers": layers, "aux": aux_entries, "meta": meta,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True,
                                separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(len(manifest_bytes).to_bytes(4, "little"))
        f.write(manifest_bytes)
        f.write(payload)


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(CHECKPOINT_MAGIC) + 4 or not raw.startswith(CHECKPOINT_MAGIC):
        raise DataFormatError(f"{path}: not a checkpoint file (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    mlen = int.from_bytes(raw[off:off + 4], "little")
    off += 4
    if off + mlen > len(raw):
        raise DataCorruptionError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[off:off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataCorruptionError(f"{path}: unreadable manifest: {exc}")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported checkpoint version {manifest.get('version')!r}")
    payload = raw[off + mlen:]
    want = manifest.get("payload_sha256", "")
    got = hashlib.sha256(payload).hexdigest()
    if got != want:
        raise DataCorruptionError(
            f"{path}: payload hash mismatch ({got[:12]} != {want[:12]})")
    expect = sum(int(np.prod(spec["shape"])) for spec in manifest["layers"])
    expect += sum(int(np.prod(spec["shape"])) for spec in manifest["aux"])
    if len(payload) != expect * 4:
        raise DataCorruptionError(
            f"{path}: payload is {len(payload)} bytes, expected {expect * 4}")
    flat = np.frombuffer(payload, dtype="<f4")
    params = ParamSet()
    o = 0
    for spec in manifest["layers"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape))
        params.add(spec["name"], flat[o:o + n].reshape(shape).astype(np.float64),
                   frozen=bool(spec["frozen"]))
        o += n
    aux = {}
    for spec in manifest["aux"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape))
        aux[spec["name"]] = flat[o:o + n].reshape(shape).astype(np.float64)
        o += n
    return CheckpointData(
        kind=manifest["kind"], variant=manifest["variant"], params=params,
        aux=aux, meta=manifest.get("meta", {}),
        finalized=bool(manifest.get("finalized")),
        config_hash=manifest.get("config_hash", ""), manifest=manifest)
