"""Diagonal Gaussians, reparameterized sampling, and the random streams."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssnp.diffcore import (
    LOGVAR_MAX,
    LOGVAR_MIN,
    DiagonalGaussian,
    RngStream,
    Tape,
    backward,
    kl_diag_gaussian,
    reparameterize,
    sum_all,
)


def make_gaussian(tape, mean, log_var):
    return DiagonalGaussian(tape.const(mean), tape.const(log_var))


class TestKL:
    def test_identical_distributions(self):
        t = Tape()
        q = make_gaussian(t, np.zeros(4), np.zeros(4))
        p = make_gaussian(t, np.zeros(4), np.zeros(4))
        assert float(kl_diag_gaussian(q, p).data) == 0.0

    def test_shifted_mean_closed_form(self):
        # KL(N(2,1) || N(0,1)) = mu^2 / 2 = 2
        t = Tape()
        q = make_gaussian(t, [2.0], [0.0])
        p = make_gaussian(t, [0.0], [0.0])
        assert float(kl_diag_gaussian(q, p).data) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        t = Tape()
        q = make_gaussian(t, np.zeros(3), np.zeros(3))
        p = make_gaussian(t, np.zeros(4), np.zeros(4))
        with pytest.raises(ValueError, match="dimension"):
            kl_diag_gaussian(q, p)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_monte_carlo(self, seed):
        """Closed form vs 100k-sample estimate of E_q[log q - log p]."""
        rng = RngStream(seed, "klmc")
        d = 8
        qm = rng.normal((d,))
        qlv = rng.uniform(-1.5, 1.5, (d,))
        pm = rng.normal((d,))
        plv = rng.uniform(-1.5, 1.5, (d,))
        t = Tape()
        closed = float(kl_diag_gaussian(make_gaussian(t, qm, qlv), make_gaussian(t, pm, plv)).data)

        n = 100_000
        z = qm + np.exp(0.5 * qlv) * rng.normal((n, d))
        log_q = -0.5 * np.sum(qlv + (z - qm) ** 2 * np.exp(-qlv), axis=1)
        log_p = -0.5 * np.sum(plv + (z - pm) ** 2 * np.exp(-plv), axis=1)
        diffs = log_q - log_p
        mc = diffs.mean()
        stderr = diffs.std(ddof=1) / np.sqrt(n)
        assert abs(closed - mc) < 3 * stderr

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_nonnegative_and_zero_iff_equal(self, seed):
        rng = RngStream(seed, "klprop")
        d = 6
        qm = rng.normal((d,)) * 3
        qlv = rng.uniform(-3, 3, (d,))
        pm = rng.normal((d,)) * 3
        plv = rng.uniform(-3, 3, (d,))
        t = Tape()
        kl = float(kl_diag_gaussian(make_gaussian(t, qm, qlv), make_gaussian(t, pm, plv)).data)
        assert kl >= 0.0
        same = float(kl_diag_gaussian(make_gaussian(t, qm, qlv), make_gaussian(t, qm, qlv)).data)
        assert same == 0.0

    def test_broadcast_rows_sum(self):
        t = Tape()
        q = make_gaussian(t, np.array([[2.0], [0.0]]), np.zeros((2, 1)))
        p = make_gaussian(t, np.zeros(1), np.zeros(1))
        assert float(kl_diag_gaussian(q, p).data) == pytest.approx(2.0)


class TestDiagonalGaussian:
    def test_logvar_clamped_at_construction(self):
        t = Tape()
        g = make_gaussian(t, np.zeros(3), [-50.0, 0.0, 50.0])
        np.testing.assert_array_equal(g.log_var.data, [LOGVAR_MIN, 0.0, LOGVAR_MAX])

    def test_mismatched_lengths_rejected(self):
        t = Tape()
        with pytest.raises(ValueError):
            DiagonalGaussian(t.const(np.zeros(3)), t.const(np.zeros(4)))


class TestReparameterize:
    def test_near_zero_variance_returns_mean(self):
        t = Tape()
        mean = np.array([1.0, -2.0, 0.5])
        g = make_gaussian(t, mean, np.full(3, -50.0))  # clamps to -10
        s = reparameterize(g, RngStream(3))
        eps = RngStream(3).normal((3,))
        assert np.linalg.norm(s.data - mean) < 1e-2 * np.linalg.norm(eps)

    def test_fixed_seed_reproducible(self):
        t = Tape()
        g = make_gaussian(t, np.zeros(5), np.zeros(5))
        a = reparameterize(g, RngStream(17, "s")).data
        b = reparameterize(g, RngStream(17, "s")).data
        np.testing.assert_array_equal(a, b)

    def test_sample_statistics(self):
        # mean of 100k draws from N(1, e^0.5) within 3 standard errors
        t = Tape()
        n = 100_000
        g = DiagonalGaussian(t.const(np.full(n, 1.0)), t.const(np.full(n, 0.5)))
        draws = reparameterize(g, RngStream(23)).data
        stderr = np.exp(0.25) / np.sqrt(n)
        assert abs(draws.mean() - 1.0) < 3 * stderr

    def test_gradient_flows_to_mean_and_logvar(self):
        t = Tape()
        mean = t.const(np.zeros(3))
        lv = t.const(np.zeros(3))
        g = DiagonalGaussian(mean, lv)
        s = reparameterize(g, RngStream(29))
        backward(t, sum_all(s))
        np.testing.assert_allclose(mean.grad, np.ones(3))
        assert lv.grad is not None and np.all(lv.grad != 0.0)


class TestRngStream:
    def test_streams_deterministic(self):
        a = RngStream(42, "x").normal((8,))
        b = RngStream(42, "x").normal((8,))
        np.testing.assert_array_equal(a, b)

    def test_substreams_differ(self):
        base = RngStream(42)
        a = base.substream(0).normal((8,))
        b = base.substream(1).normal((8,))
        assert not np.allclose(a, b)

    def test_substream_independent_of_parent_consumption(self):
        base = RngStream(9)
        base.normal((100,))
        a = base.substream("child").uniform(size=4)
        b = RngStream(9).substream("child").uniform(size=4)
        np.testing.assert_array_equal(a, b)

    def test_box_muller_moments(self):
        z = RngStream(7).normal((200_000,))
        assert abs(z.mean()) < 3 / np.sqrt(z.size)
        assert abs(z.std() - 1.0) < 0.01

    def test_integers_range_and_permutation(self):
        s = RngStream(11)
        draws = s.integers(1, 11, size=1000)
        assert draws.min() >= 1 and draws.max() <= 10
        perm = RngStream(12).permutation(10)
        assert sorted(perm.tolist()) == list(range(10))

    def test_sign_balance(self):
        s = RngStream(13)
        signs = [s.sign() for _ in range(10_000)]
        frac = signs.count(1) / len(signs)
        assert 0.47 <= frac <= 0.53
