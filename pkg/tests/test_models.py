"""Network architecture, loss, relaxation, and freeze-mode checks."""

import numpy as np
import pytest

from oracles import chi2_quantile, gumbel_softmax_mc_oracle
from rfrlf.diffcore import (ParamSet, Tensor, finite_diff_check, tensor_view,
                            value_and_grad)
from rfrlf.errors import ConfigurationError, ShapeMismatchError
from rfrlf.rfsgpn import (argmax_action, check_frozen, gumbel_softmax,
                          init_policy, merged_param_set, policy_forward,
                          policy_logits, policy_loss, sample_action,
                          sample_gumbel)
from rfrlf.standardize import Standardizer
from rfrlf.tspn import (action_inject, freeze_tspn, init_tspn, tspn_apply,
                        tspn_forward, tspn_loss)


class TestStandardizer:

    def test_fit_apply_normalizes(self):
        rng = np.random.default_rng(0)
        x = rng.normal(3.0, 2.5, size=(500, 6))
        st = Standardizer.fit(x)
        z = st.apply(x)
        assert np.max(np.abs(z.mean(axis=0))) < 1e-12
        assert np.max(np.abs(z.std(axis=0) - 1.0)) < 1e-12

    def test_invert_roundtrip(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(50, 4))
        st = Standardizer.fit(x)
        assert np.max(np.abs(st.invert(st.apply(x)) - x)) < 1e-12

    def test_constant_dim_floored(self):
        x = np.zeros((10, 3))
        x[:, 0] = np.arange(10)
        st = Standardizer.fit(x)
        assert st.std[1] == 1e-6
        z = st.apply(x)
        assert np.all(np.isfinite(z))

    def test_image_shape(self):
        rng = np.random.default_rng(2)
        x = rng.random((20, 3, 4, 4))
        st = Standardizer.fit(x)
        assert st.mean.shape == (3, 4, 4)
        assert st.apply(x).shape == (20, 3, 4, 4)

    def test_shape_mismatch(self):
        st = Standardizer.fit(np.random.default_rng(3).normal(size=(10, 4)))
        with pytest.raises(ShapeMismatchError):
            st.apply(np.zeros(5))

    def test_too_few_samples(self):
        with pytest.raises(ConfigurationError):
            Standardizer.fit(np.zeros((1, 3)))


class TestTspnArchitecture:

    def test_dense_parameter_census(self):
        tp = init_tspn("dense", (18,), 10, seed=0)
        names = tp.params.names()
        assert len(names) == 22
        # the embedding layer carries no normalization parameters
        assert "embed.w" in names and "embed.b" in names
        assert "embed.gain" not in names and "embed.shift" not in names
        for layer in ("enc1", "enc2", "dec1", "dec2"):
            for suffix in ("w", "b", "gain", "shift"):
                assert f"{layer}.{suffix}" in names
        assert tp.params.entry("embed.w").array.shape == (128, 18)
        assert tp.params.entry("enc2.w").array.shape == (32, 64)
        assert tp.params.entry("inject.gate_w").array.shape == (32, 10)
        assert tp.params.entry("out.w").array.shape == (18, 128)
        assert tp.norm_kind == "layer"

    def test_conv_parameter_census(self):
        tp = init_tspn("conv", (3, 24, 32), 3, seed=0)
        names = tp.params.names()
        assert "embed.gain" not in names
        assert tp.params.entry("embed.k").array.shape == (16, 3, 5, 5)
        assert tp.params.entry("enc1.k").array.shape == (32, 16, 4, 4)
        assert tp.params.entry("enc2.k").array.shape == (64, 32, 4, 4)
        assert tp.params.entry("dec1.k").array.shape == (64, 32, 4, 4)
        assert tp.params.entry("dec2.k").array.shape == (32, 16, 4, 4)
        assert tp.params.entry("out.k").array.shape == (3, 16, 1, 1)
        assert tp.norm_kind == "instance"

    def test_forward_shapes(self):
        tp = init_tspn("dense", (18,), 10, seed=1)
        z = np.random.default_rng(0).normal(size=(5, 18))
        a = np.zeros((5, 10)); a[:, 0] = 1.0; a[:, 7] = 1.0
        assert tspn_apply(tp, z, a).shape == (5, 18)
        assert tspn_apply(tp, z[0], a[0]).shape == (18,)

    def test_conv_forward_shapes(self):
        tp = init_tspn("conv", (3, 24, 32), 3, seed=1)
        z = np.random.default_rng(0).normal(size=(2, 3, 24, 32))
        a = np.zeros((2, 3)); a[:, 1] = 1.0
        assert tspn_apply(tp, z, a).shape == (2, 3, 24, 32)
        assert tspn_apply(tp, z[0], a[0]).shape == (3, 24, 32)

    def test_batched_matches_unbatched_bitwise(self):
        tp = init_tspn("dense", (12,), 6, seed=3)
        rng = np.random.default_rng(4)
        z = rng.normal(size=(4, 12))
        a = np.zeros((4, 6))
        a[np.arange(4), rng.integers(0, 6, 4)] = 1.0
        batch = tspn_apply(tp, z, a)
        for i in range(4):
            single = tspn_apply(tp, z[i], a[i])
            assert np.array_equal(batch[i], single)

    def test_action_changes_prediction(self):
        tp = init_tspn("dense", (18,), 10, seed=5)
        z = np.random.default_rng(6).normal(size=18)
        a1 = np.zeros(10); a1[0] = 1.0; a1[7] = 1.0
        a2 = np.zeros(10); a2[6] = 1.0; a2[9] = 1.0
        assert not np.allclose(tspn_apply(tp, z, a1), tspn_apply(tp, z, a2))

    def test_injection_formula(self):
        # with gate weights zeroed the mask is sigmoid(0) = 0.5 exactly
        rng = np.random.default_rng(7)
        h = Tensor(rng.normal(size=(3, 5)))
        a = Tensor(np.eye(4)[:3].astype(float))
        gate_w = Tensor(np.zeros((5, 4)))
        shift_w = Tensor(rng.normal(size=(5, 4)))
        out = action_inject(h, a, gate_w, shift_w)
        want = 0.5 * h.data + a.data @ shift_w.data.T
        assert np.max(np.abs(out.data - want)) < 1e-12

    def test_injection_broadcast_over_feature_maps(self):
        rng = np.random.default_rng(8)
        h = Tensor(rng.normal(size=(2, 4, 3, 3)))
        a = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
        gate_w = Tensor(np.zeros((4, 2)))
        shift_w = Tensor(rng.normal(size=(4, 2)))
        out = action_inject(h, a, gate_w, shift_w)
        shift = (a.data @ shift_w.data.T)[:, :, None, None]
        want = 0.5 * h.data + shift
        assert np.max(np.abs(out.data - want)) < 1e-12

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            init_tspn("transformer", (18,), 10, seed=0)


class TestTspnLoss:

    def test_two_sample_hand_computed(self):
        # oracle: two-pass mean of squared differences, plain Python floats
        tp = init_tspn("dense", (6,), 4, seed=9, hidden=(8, 6, 4))
        rng = np.random.default_rng(10)
        z = rng.normal(size=(2, 6))
        a = np.zeros((2, 4)); a[0, 1] = 1.0; a[1, 3] = 1.0
        targets = rng.normal(size=(2, 6))
        pred = tspn_apply(tp, z, a)
        acc = 0.0
        count = 0
        for i in range(2):
            for j in range(6):
                acc += (float(pred[i, j]) - float(targets[i, j])) ** 2
                count += 1
        want = acc / count
        t = tensor_view(tp.params)
        got = float(tspn_loss(tp, t, z, a, targets).data)
        assert got == pytest.approx(want, abs=1e-7)

    def test_loss_zero_on_perfect_prediction(self):
        tp = init_tspn("dense", (6,), 4, seed=11, hidden=(8, 6, 4))
        rng = np.random.default_rng(12)
        z = rng.normal(size=(3, 6))
        a = np.zeros((3, 4)); a[:, 0] = 1.0
        targets = tspn_apply(tp, z, a)
        t = tensor_view(tp.params)
        assert float(tspn_loss(tp, t, z, a, targets).data) == 0.0

    def test_shape_mismatch_raises(self):
        tp = init_tspn("dense", (6,), 4, seed=13, hidden=(8, 6, 4))
        t = tensor_view(tp.params)
        with pytest.raises(ShapeMismatchError):
            tspn_loss(tp, t, np.zeros((2, 6)), np.zeros((2, 4)), np.zeros((3, 6)))

    def test_dense_gradients_match_finite_differences(self):
        # seed must keep every relu pre-activation clear of zero: central
        # differences straddle the kink otherwise and disagree with the
        # (correct) zero subgradient
        tp = init_tspn("dense", (5,), 4, seed=18, hidden=(7, 5, 3))
        rng = np.random.default_rng(15)
        z = rng.normal(size=(3, 5))
        a = np.zeros((3, 4)); a[np.arange(3), [0, 2, 3]] = 1.0
        targets = rng.normal(size=(3, 5))
        fn = lambda t: tspn_loss(tp, t, z, a, targets)
        _, grads = value_and_grad(fn, tp.params)
        assert all(np.linalg.norm(g) > 1e-12 for g in grads.values())
        report = finite_diff_check(fn, tp.params, step=1e-5)
        assert report.max_rel_error < 1e-4, report.worst_param

    def test_conv_gradients_match_finite_differences(self):
        tp = init_tspn("conv", (2, 8, 8), 3, seed=16, channels=(2, 3, 4))
        rng = np.random.default_rng(17)
        z = rng.normal(size=(2, 2, 8, 8))
        a = np.zeros((2, 3)); a[:, 1] = 1.0
        targets = rng.normal(size=(2, 2, 8, 8))
        report = finite_diff_check(
            lambda t: tspn_loss(tp, t, z, a, targets), tp.params, step=1e-5)
        assert report.max_rel_error < 1e-4, report.worst_param


class TestFreezeModes:

    def test_full_freeze(self):
        tp = init_tspn("dense", (6,), 4, seed=18, hidden=(8, 6, 4))
        freeze_tspn(tp, "full")
        assert tp.params.all_frozen()

    def test_partial_freeze(self):
        tp = init_tspn("dense", (6,), 4, seed=19, hidden=(8, 6, 4))
        freeze_tspn(tp, "partial")
        frozen = set(tp.params.frozen_names())
        assert {"embed.w", "embed.b", "enc1.w", "enc2.gain"} <= frozen
        assert "inject.gate_w" not in frozen
        assert "dec1.w" not in frozen
        assert "out.w" not in frozen

    def test_unknown_mode(self):
        tp = init_tspn("dense", (6,), 4, seed=20, hidden=(8, 6, 4))
        with pytest.raises(ConfigurationError):
            freeze_tspn(tp, "half")


class TestPolicyNetwork:

    def test_untrained_policy_is_exactly_uniform(self):
        pp = init_policy("dense", (18,), (7, 3), seed=21)
        rng = np.random.default_rng(22)
        for _ in range(5):
            lg = policy_logits(pp, rng.normal(size=18))
            assert np.all(lg == 0.0)

    def test_untrained_conv_policy_uniform(self):
        pp = init_policy("conv", (3, 24, 32), (3,), seed=23)
        img = np.random.default_rng(24).random((3, 24, 32))
        assert np.all(policy_logits(pp, img) == 0.0)

    def test_forward_shapes(self):
        pp = init_policy("dense", (18,), (7, 3), seed=25)
        t = tensor_view(pp.params)
        z = np.random.default_rng(26).normal(size=(6, 18))
        out = policy_forward(pp, t, Tensor(z))
        assert out.data.shape == (6, 10)
        out1 = policy_forward(pp, t, Tensor(z[0]))
        assert out1.data.shape == (10,)

    def test_conv_forward_shapes(self):
        pp = init_policy("conv", (3, 24, 32), (3,), seed=27)
        t = tensor_view(pp.params)
        z = np.random.default_rng(28).random((2, 3, 24, 32))
        assert policy_forward(pp, t, Tensor(z)).data.shape == (2, 3)

    def test_standardizer_applied_in_logits(self):
        pp = init_policy("dense", (4,), (3,), seed=29, hidden=(8, 8))
        # give the head nonzero weights so standardization matters; random
        # weights, because a constant row would annihilate the zero-mean
        # layernorm features
        pp.params.set_array(
            "head.w", np.random.default_rng(30).normal(size=(3, 8)))
        raw = np.array([5.0, -2.0, 0.5, 3.0])
        lg_plain = policy_logits(pp, raw)
        pp.standardizer = Standardizer(mean=raw.copy(), std=np.ones(4))
        lg_std = policy_logits(pp, raw)   # standardizes raw to exactly zero
        assert not np.allclose(lg_plain, lg_std)
        assert np.allclose(lg_std, _logits_on_standardized_zero(pp))


class TestGumbelSoftmax:

    def test_simplex_per_factor(self):
        rng = np.random.default_rng(30)
        logits = Tensor(rng.normal(size=(8, 10)))
        noise = sample_gumbel(rng, (8, 10))
        y = gumbel_softmax(logits, (7, 3), 1.0, noise=noise)
        assert np.max(np.abs(y.data[:, :7].sum(axis=1) - 1.0)) < 1e-9
        assert np.max(np.abs(y.data[:, 7:].sum(axis=1) - 1.0)) < 1e-9

    def test_noise_free_is_plain_softmax(self):
        logits = np.array([1.0, 2.0, 0.5, -1.0, 0.0])
        y = gumbel_softmax(Tensor(logits), (5,), 1.0, noise=None)
        z = logits - logits.max()
        want = np.exp(z) / np.exp(z).sum()
        assert np.max(np.abs(y.data - want)) < 1e-12

    def test_monte_carlo_marginal_matches_oracle(self):
        # the expected relaxed sample under gumbel noise, two independent
        # implementations
        logits = np.array([0.5, -0.3, 1.2, 0.0])
        tau = 0.7
        n = 40000
        oracle = gumbel_softmax_mc_oracle(logits, tau, n, np.random.default_rng(31))
        rng = np.random.default_rng(32)
        acc = np.zeros(4)
        for _ in range(n):
            noise = sample_gumbel(rng, (4,))
            acc += gumbel_softmax(Tensor(logits), (4,), tau, noise=noise).data
        mine = acc / n
        assert np.max(np.abs(mine - oracle)) < 0.01

    def test_lower_tau_is_more_peaked(self):
        logits = Tensor(np.array([1.0, 0.0, -0.5]))
        p_hot = gumbel_softmax(logits, (3,), 0.25, noise=None).data.max()
        p_warm = gumbel_softmax(logits, (3,), 2.0, noise=None).data.max()
        assert p_hot > p_warm

    def test_hard_straight_through(self):
        from rfrlf.diffcore import mul, sum_all
        rng = np.random.default_rng(33)
        data = rng.normal(size=(4, 10))
        noise = sample_gumbel(rng, (4, 10))
        weights = rng.normal(size=(4, 10))

        hard_in = Tensor(data, requires_grad=True)
        y = gumbel_softmax(hard_in, (7, 3), 1.0, noise=noise, hard=True)
        assert np.all(np.isin(y.data, [0.0, 1.0]))
        assert np.all(y.data[:, :7].sum(axis=1) == 1.0)
        assert np.all(y.data[:, 7:].sum(axis=1) == 1.0)
        sum_all(mul(y, Tensor(weights))).backward()

        # for a linear functional the straight-through gradient equals the
        # gradient through the soft sample exactly
        soft_in = Tensor(data, requires_grad=True)
        ys = gumbel_softmax(soft_in, (7, 3), 1.0, noise=noise, hard=False)
        sum_all(mul(ys, Tensor(weights))).backward()
        assert np.max(np.abs(hard_in.grad - soft_in.grad)) < 1e-12

    def test_factor_blocks_independent(self):
        rng = np.random.default_rng(34)
        logits = rng.normal(size=10)
        noise = np.zeros(10)
        base = gumbel_softmax(Tensor(logits), (7, 3), 1.0, noise=noise).data
        noise2 = noise.copy()
        noise2[:7] = rng.normal(size=7)   # perturb only the first block
        moved = gumbel_softmax(Tensor(logits), (7, 3), 1.0, noise=noise2).data
        assert not np.allclose(base[:7], moved[:7])
        assert np.array_equal(base[7:], moved[7:])

    def test_bad_tau(self):
        with pytest.raises(ConfigurationError):
            gumbel_softmax(Tensor(np.zeros(3)), (3,), 0.0)

    def test_noise_shape_checked(self):
        with pytest.raises(ShapeMismatchError):
            gumbel_softmax(Tensor(np.zeros(3)), (3,), 1.0, noise=np.zeros(4))


class TestSampleAction:

    def test_temperature_zero_argmax(self):
        logits = np.array([0.1, 3.0, -1.0, 0.0, 2.0, 1.0, -2.0,
                           0.5, 2.5, 0.0])
        idx = sample_action(logits, (7, 3), np.random.default_rng(0),
                            temperature=0.0)
        assert idx == (1, 1)
        assert argmax_action(logits, (7, 3)) == (1, 1)

    def test_uniform_sampling_chi_square(self):
        rng = np.random.default_rng(35)
        counts = np.zeros((7, 3))
        n = 4200
        for _ in range(n):
            i, j = sample_action(np.zeros(10), (7, 3), rng, temperature=1.0)
            counts[i, j] += 1
        expected = n / 21.0
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < chi2_quantile(20, 0.999)

    def test_matches_softmax_distribution(self):
        logits = np.array([2.0, 0.0, -1.0])
        z = logits - logits.max()
        p = np.exp(z) / np.exp(z).sum()
        rng = np.random.default_rng(36)
        n = 30000
        counts = np.zeros(3)
        for _ in range(n):
            counts[sample_action(logits, (3,), rng)[0]] += 1
        chi2 = (((counts - n * p) ** 2) / (n * p)).sum()
        assert chi2 < chi2_quantile(2, 0.999)


class TestComposedPolicyLoss:

    def _tiny(self):
        tp = init_tspn("dense", (5,), 5, seed=40, hidden=(7, 5, 3))
        tp.training_finalized = True
        pp = init_policy("dense", (5,), (3, 2), seed=41, hidden=(6, 6))
        # break the zero head so gradients are informative
        rng = np.random.default_rng(42)
        pp.params.set_array("head.w", rng.normal(0, 0.3, size=(5, 6)))
        return tp, pp

    def test_requires_finalized_tspn(self):
        tp, pp = self._tiny()
        tp.training_finalized = False
        merged = merged_param_set(tp, pp, "full")
        t = tensor_view(merged)
        with pytest.raises(ConfigurationError):
            policy_loss(tp, pp, t, np.zeros((2, 5)), np.zeros((2, 5)), None)

    def test_full_mode_freezes_all_tspn_entries(self):
        tp, pp = self._tiny()
        merged = merged_param_set(tp, pp, "full")
        check_frozen(merged, "full")
        for name in merged.names():
            if name.startswith("tspn/"):
                assert merged.entry(name).frozen
            else:
                assert not merged.entry(name).frozen

    def test_partial_mode_splits_tspn(self):
        tp, pp = self._tiny()
        merged = merged_param_set(tp, pp, "partial")
        check_frozen(merged, "partial")
        assert merged.entry("tspn/embed.w").frozen
        assert merged.entry("tspn/enc1.w").frozen
        assert not merged.entry("tspn/dec1.w").frozen
        assert not merged.entry("tspn/inject.gate_w").frozen

    def test_check_frozen_rejects_violation(self):
        tp, pp = self._tiny()
        merged = merged_param_set(tp, pp, "full")
        merged.unfreeze("tspn/out.w")
        with pytest.raises(ConfigurationError):
            check_frozen(merged, "full")

    def test_gradient_routing_full_mode(self):
        tp, pp = self._tiny()
        rng = np.random.default_rng(43)
        z = rng.normal(size=(4, 5))
        targets = rng.normal(size=(4, 5))
        noise = sample_gumbel(rng, (4, 5))
        merged = merged_param_set(tp, pp, "full")
        val, grads = value_and_grad(
            lambda t: policy_loss(tp, pp, t, z, targets, noise), merged)
        assert val > 0
        pol_mass = sum(np.abs(g).sum() for n, g in grads.items()
                       if n.startswith("policy/"))
        dyn_mass = sum(np.abs(g).sum() for n, g in grads.items()
                       if n.startswith("tspn/"))
        assert pol_mass > 0
        assert dyn_mass == 0.0

    def test_gradient_routing_partial_mode(self):
        tp, pp = self._tiny()
        rng = np.random.default_rng(44)
        z = rng.normal(size=(4, 5))
        targets = rng.normal(size=(4, 5))
        noise = sample_gumbel(rng, (4, 5))
        merged = merged_param_set(tp, pp, "partial")
        _, grads = value_and_grad(
            lambda t: policy_loss(tp, pp, t, z, targets, noise), merged)
        assert np.abs(grads["tspn/dec1.w"]).sum() > 0
        assert np.abs(grads["tspn/embed.w"]).sum() == 0.0
        assert np.abs(grads["policy/q1.w"]).sum() > 0

    def test_composed_gradients_match_finite_differences(self):
        tp, pp = self._tiny()
        rng = np.random.default_rng(45)
        z = rng.normal(size=(3, 5))
        targets = rng.normal(size=(3, 5))
        noise = sample_gumbel(rng, (3, 5))
        merged = merged_param_set(tp, pp, "partial")
        report = finite_diff_check(
            lambda t: policy_loss(tp, pp, t, z, targets, noise, hard=False),
            merged, step=1e-5)
        assert report.max_rel_error < 1e-4, report.worst_param

    def test_hard_sample_loss_still_differentiable(self):
        tp, pp = self._tiny()
        rng = np.random.default_rng(46)
        z = rng.normal(size=(3, 5))
        targets = rng.normal(size=(3, 5))
        noise = sample_gumbel(rng, (3, 5))
        merged = merged_param_set(tp, pp, "full")
        val, grads = value_and_grad(
            lambda t: policy_loss(tp, pp, t, z, targets, noise, hard=True),
            merged)
        assert np.isfinite(val)
        assert np.abs(grads["policy/head.w"]).sum() > 0


def _logits_on_standardized_zero(pp):
    t = tensor_view(pp.params)
    return policy_forward(pp, t, Tensor(np.zeros(pp.state_shape))).data
