"""Checkpoint file round-trips, determinism, and corruption handling."""

import numpy as np
import pytest

from rfrlf.checkpoint import (CHECKPOINT_MAGIC, load_checkpoint,
                              save_checkpoint)
from rfrlf.diffcore import ParamSet
from rfrlf.errors import DataCorruptionError, DataFormatError
from rfrlf.rfsgpn import init_policy, load_policy, save_policy
from rfrlf.standardize import Standardizer
from rfrlf.tspn import freeze_tspn, init_tspn, load_tspn, save_tspn


def _small_tspn():
    tp = init_tspn("dense", (6,), 4, seed=50, hidden=(8, 6, 4))
    rng = np.random.default_rng(51)
    tp.standardizer = Standardizer(
        mean=rng.normal(size=6), std=np.abs(rng.normal(size=6)) + 0.1)
    tp.training_finalized = True
    return tp


class TestGenericCheckpoint:

    def test_roundtrip_values_f32(self, tmp_path):
        ps = ParamSet()
        rng = np.random.default_rng(0)
        ps.add("a.w", rng.normal(size=(3, 4)))
        ps.add("a.b", rng.normal(size=3), frozen=True)
        p = tmp_path / "m.ck"
        save_checkpoint(p, kind="tspn", variant="dense", params=ps,
                        meta={"x": 1})
        ck = load_checkpoint(p)
        assert ck.kind == "tspn"
        assert ck.meta == {"x": 1}
        # storage is float32: values round through that precision exactly
        assert np.array_equal(ck.params.entry("a.w").array,
                              ps.entry("a.w").array.astype(np.float32).astype(np.float64))
        assert ck.params.entry("a.b").frozen
        assert not ck.params.entry("a.w").frozen

    def test_save_load_save_byte_identical(self, tmp_path):
        tp = _small_tspn()
        freeze_tspn(tp, "partial")
        p1, p2 = tmp_path / "a.ck", tmp_path / "b.ck"
        save_tspn(tp, p1, config_hash="cafe01")
        tp2 = load_tspn(p1)
        save_tspn(tp2, p2, config_hash="cafe01")
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.ck"
        p.write_bytes(b"RFRLDS01" + b"\x00" * 64)   # dataset magic, not checkpoint
        with pytest.raises(DataFormatError):
            load_checkpoint(p)

    def test_payload_corruption_detected(self, tmp_path):
        tp = _small_tspn()
        p = tmp_path / "c.ck"
        save_tspn(tp, p)
        raw = bytearray(p.read_bytes())
        raw[-5] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(DataCorruptionError):
            load_checkpoint(p)

    def test_truncation_detected(self, tmp_path):
        tp = _small_tspn()
        p = tmp_path / "t.ck"
        save_tspn(tp, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:len(raw) - 9])
        with pytest.raises(DataCorruptionError):
            load_checkpoint(p)

    def test_magic_is_checkpoint_tag(self, tmp_path):
        tp = _small_tspn()
        p = tmp_path / "m.ck"
        save_tspn(tp, p)
        assert p.read_bytes().startswith(CHECKPOINT_MAGIC)


class TestTspnCheckpoint:

    def test_full_roundtrip(self, tmp_path):
        tp = _small_tspn()
        freeze_tspn(tp, "full")
        p = tmp_path / "tspn.ck"
        save_tspn(tp, p, config_hash="beef")
        tp2 = load_tspn(p)
        assert tp2.variant == "dense"
        assert tp2.state_shape == (6,)
        assert tp2.action_dim == 4
        assert tp2.hidden == (8, 6, 4)
        assert tp2.norm_kind == "layer"
        assert tp2.training_finalized
        assert tp2.params.all_frozen()
        assert np.allclose(tp2.standardizer.mean,
                           tp.standardizer.mean.astype(np.float32))

    def test_frozen_flags_roundtrip(self, tmp_path):
        tp = _small_tspn()
        freeze_tspn(tp, "partial")
        p = tmp_path / "pf.ck"
        save_tspn(tp, p)
        tp2 = load_tspn(p)
        assert set(tp2.params.frozen_names()) == set(tp.params.frozen_names())

    def test_env_config_preserved(self, tmp_path):
        tp = _small_tspn()
        tp.env_config = {"kind": "linetrack", "dt": 0.05}
        p = tmp_path / "env.ck"
        save_tspn(tp, p)
        assert load_tspn(p).env_config == {"kind": "linetrack", "dt": 0.05}

    def test_kind_mismatch(self, tmp_path):
        pp = init_policy("dense", (6,), (3, 2), seed=52, hidden=(8, 8))
        p = tmp_path / "pol.ck"
        save_policy(pp, p)
        with pytest.raises(DataFormatError):
            load_tspn(p)


class TestPolicyCheckpoint:

    def test_full_roundtrip(self, tmp_path):
        pp = init_policy("dense", (18,), (7, 3), seed=53)
        rng = np.random.default_rng(54)
        pp.params.set_array("head.w", rng.normal(size=(10, 128)))
        pp.standardizer = Standardizer(mean=np.zeros(18), std=np.ones(18))
        pp.env_config = {"kind": "linetrack"}
        p = tmp_path / "policy.ck"
        save_policy(pp, p, config_hash="0ff1ce")
        pp2 = load_policy(p)
        assert pp2.factor_sizes == (7, 3)
        assert pp2.tau == pp.tau
        assert pp2.env_config == {"kind": "linetrack"}
        assert np.array_equal(
            pp2.params.entry("head.w").array,
            pp.params.entry("head.w").array.astype(np.float32).astype(np.float64))

    def test_kind_mismatch(self, tmp_path):
        tp = _small_tspn()
        p = tmp_path / "t.ck"
        save_tspn(tp, p)
        with pytest.raises(DataFormatError):
            load_policy(p)

    def test_aux_absent_when_no_standardizer(self, tmp_path):
        pp = init_policy("dense", (6,), (3,), seed=55, hidden=(8, 8))
        p = tmp_path / "ns.ck"
        save_policy(pp, p)
        pp2 = load_policy(p)
        assert pp2.standardizer is None
