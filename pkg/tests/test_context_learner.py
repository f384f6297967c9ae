"""Set-image autoencoder: encodings, latents, and the set ELBO."""

import numpy as np
import pytest

from conftest import random_images, tiny_config
from ssnp.context_learner import NAMESPACE, ContextLearner, register_params
from ssnp.diffcore import (
    DiagonalGaussian,
    ParameterStore,
    RngStream,
    Tape,
    grad_check,
    kl_diag_gaussian,
)
from ssnp.nets import ModelConfig


def make_learner(cfg=None, seed=0, offset_biases=False):
    cfg = cfg or tiny_config()
    store = ParameterStore()
    register_params(cfg, store, RngStream(seed, "init"))
    if offset_biases:
        # Zero biases leave relu inputs exactly on the kink wherever a conv
        # patch is all background, which finite differences cannot handle.
        rng = RngStream(seed, "bias-offset")
        for name in store.names():
            if name.endswith(".b"):
                store.value(name)[...] = 0.05 * rng.normal(store.value(name).shape)
    return ContextLearner(cfg, store), store, cfg


class TestEncodeSet:
    def test_permutation_invariant(self):
        learner, _, cfg = make_learner()
        rng = RngStream(2)
        images = random_images(rng, 6, cfg.image_size)
        t = Tape()
        _, pooled = learner.encode_set(t, images)
        for trial in range(25):
            perm = rng.permutation(6)
            _, permuted = learner.encode_set(Tape(), images[perm])
            np.testing.assert_allclose(pooled.data, permuted.data, rtol=0, atol=1e-12)

    def test_pair_of_identical_images_pools_to_single(self):
        learner, _, cfg = make_learner()
        x = random_images(RngStream(3), 1, cfg.image_size)
        _, single = learner.encode_set(Tape(), x)
        _, pair = learner.encode_set(Tape(), np.concatenate([x, x]))
        np.testing.assert_allclose(single.data, pair.data, rtol=0, atol=1e-12)

    def test_duplicating_whole_set_keeps_pool(self):
        learner, _, cfg = make_learner()
        images = random_images(RngStream(4), 4, cfg.image_size)
        _, once = learner.encode_set(Tape(), images)
        _, twice = learner.encode_set(Tape(), np.concatenate([images, images]))
        np.testing.assert_allclose(once.data, twice.data, rtol=0, atol=1e-12)

    def test_empty_set_rejected(self):
        learner, _, cfg = make_learner()
        with pytest.raises(ValueError, match="nonempty"):
            learner.encode_set(Tape(), np.zeros((0, cfg.image_size, cfg.image_size)))


class TestContextPosterior:
    def test_zeroed_output_layer_returns_bias_gaussian(self):
        learner, store, cfg = make_learner()
        store.value(NAMESPACE + "stat.l2.w")[...] = 0.0
        bias = RngStream(5).normal((2 * cfg.d_c,)) * 0.5
        store.set_value(NAMESPACE + "stat.l2.b", bias)
        t = Tape()
        q = learner.infer_context(t, t.const(np.zeros(cfg.d_h)))
        np.testing.assert_allclose(q.mean.data, bias[: cfg.d_c], rtol=0, atol=0)
        np.testing.assert_allclose(q.log_var.data, bias[cfg.d_c :], rtol=0, atol=0)

    def test_logvar_within_clamp_bounds(self):
        learner, _, cfg = make_learner()
        rng = RngStream(6)
        for _ in range(20):
            t = Tape()
            _, pooled = learner.encode_set(t, random_images(rng, 3, cfg.image_size))
            q = learner.infer_context(t, pooled)
            assert np.all(q.log_var.data >= -10.0) and np.all(q.log_var.data <= 10.0)

    def test_kl_to_prior_gradient_matches_finite_differences(self):
        learner, store, cfg = make_learner(offset_biases=True)
        images = random_images(RngStream(7), 2, cfg.image_size)

        def build(tape: Tape):
            _, pooled = learner.encode_set(tape, images)
            q = learner.infer_context(tape, pooled)
            return kl_diag_gaussian(q, DiagonalGaussian.standard(tape, cfg.d_c))

        names = [n for n in store.names() if n.startswith(NAMESPACE + "enc") or n.startswith(NAMESPACE + "stat")]
        report = grad_check(build, store, rel_tol=1e-4, h=1e-5, param_names=names)
        assert report.passed, str(report)


class TestInstanceLatents:
    def test_kl_zero_when_networks_coincide(self):
        # Make q(z | c, h) compute exactly the same function of c as p(z | c)
        # by zeroing the h rows and copying the conditional-prior weights.
        learner, store, cfg = make_learner()
        w = np.zeros((cfg.d_c + cfg.d_h, cfg.hidden))
        w[: cfg.d_c] = store.value(NAMESPACE + "latdec.l1.w")
        store.set_value(NAMESPACE + "inf.l1.w", w)
        store.set_value(NAMESPACE + "inf.l1.b", store.value(NAMESPACE + "latdec.l1.b"))
        store.set_value(NAMESPACE + "inf.l2.w", store.value(NAMESPACE + "latdec.l2.w"))
        store.set_value(NAMESPACE + "inf.l2.b", store.value(NAMESPACE + "latdec.l2.b"))
        t = Tape()
        rng = RngStream(8)
        c = t.const(rng.normal((cfg.d_c,)))
        h = t.const(rng.normal((5, cfg.d_h)))
        q = learner.infer_instance(t, c, h)
        p = learner.prior_instance(t, c)
        kl = float(kl_diag_gaussian(q, p).data)
        assert kl == pytest.approx(0.0, abs=1e-30)

    def test_kl_nonnegative(self):
        learner, _, cfg = make_learner()
        rng = RngStream(9)
        for _ in range(20):
            t = Tape()
            c = t.const(rng.normal((cfg.d_c,)))
            h = t.const(rng.normal((4, cfg.d_h)))
            assert float(kl_diag_gaussian(learner.infer_instance(t, c, h), learner.prior_instance(t, c)).data) >= 0.0

    def test_per_image_kl_matches_monte_carlo(self):
        learner, _, cfg = make_learner()
        rng = RngStream(10)
        t = Tape()
        c = t.const(rng.normal((cfg.d_c,)))
        h = t.const(rng.normal((1, cfg.d_h)))
        q = learner.infer_instance(t, c, h)
        p = learner.prior_instance(t, c)
        closed = float(kl_diag_gaussian(q, p).data)
        qm, qlv = q.mean.data[0], q.log_var.data[0]
        pm, plv = p.mean.data, p.log_var.data
        n = 100_000
        z = qm + np.exp(0.5 * qlv) * rng.normal((n, cfg.d_z))
        log_q = -0.5 * np.sum(qlv + (z - qm) ** 2 * np.exp(-qlv), axis=1)
        log_p = -0.5 * np.sum(plv + (z - pm) ** 2 * np.exp(-plv), axis=1)
        diffs = log_q - log_p
        assert abs(closed - diffs.mean()) < 3 * diffs.std(ddof=1) / np.sqrt(n)


class TestDecoder:
    def test_zero_logits_give_log_half_per_pixel(self):
        learner, store, cfg = make_learner()
        store.value(NAMESPACE + "obsdec.deconv2.w")[...] = 0.0
        store.value(NAMESPACE + "obsdec.deconv2.b")[...] = 0.0
        rng = RngStream(11)
        t = Tape()
        logits = learner.decode_images(t, t.const(rng.normal((cfg.d_c,))), t.const(rng.normal((2, cfg.d_z))))
        np.testing.assert_array_equal(logits.data, np.zeros_like(logits.data))

    def test_decoder_output_shape(self):
        learner, _, cfg = make_learner()
        rng = RngStream(12)
        t = Tape()
        logits = learner.decode_images(t, t.const(rng.normal((cfg.d_c,))), t.const(rng.normal((3, cfg.d_z))))
        assert logits.data.shape == (3, cfg.image_size, cfg.image_size, 1)


class TestLossContext:
    def test_beta_zero_is_pure_reconstruction(self):
        learner, _, cfg = make_learner()
        images = random_images(RngStream(13), 3, cfg.image_size)
        loss, parts, _ = learner.loss_context(Tape(), images, RngStream(14), 0.0)
        assert float(loss.data) == pytest.approx(parts.recon_nll)

    def test_beta_one_adds_nonnegative_kl(self):
        learner, _, cfg = make_learner()
        images = random_images(RngStream(15), 3, cfg.image_size)
        l0, _, _ = learner.loss_context(Tape(), images, RngStream(16), 0.0)
        l1, parts, _ = learner.loss_context(Tape(), images, RngStream(16), 1.0)
        assert float(l1.data) >= float(l0.data)
        assert parts.kl_instance >= 0.0 and parts.kl_context >= 0.0

    def test_same_stream_reproduces_loss(self):
        learner, _, cfg = make_learner()
        images = random_images(RngStream(17), 4, cfg.image_size)
        a, _, _ = learner.loss_context(Tape(), images, RngStream(18), 0.7)
        b, _, _ = learner.loss_context(Tape(), images, RngStream(18), 0.7)
        assert float(a.data) == float(b.data)

    def test_loss_finite(self):
        learner, _, cfg = make_learner()
        rng = RngStream(19)
        for i in range(5):
            loss, _, _ = learner.loss_context(Tape(), random_images(rng, 3, cfg.image_size), rng.substream(i), 1.0)
            assert np.isfinite(float(loss.data))

    def test_full_loss_gradcheck(self):
        learner, store, cfg = make_learner(seed=3, offset_biases=True)
        images = random_images(RngStream(20), 2, cfg.image_size)

        def build(tape: Tape):
            loss, _, _ = learner.loss_context(tape, images, RngStream(21, "eps"), 1.0)
            return loss

        report = grad_check(build, store, rel_tol=1e-4, h=1e-5)
        assert report.passed, str(report)
