"""Adam optimizer behaviour and the finite-difference gradient checker."""

import numpy as np
import pytest

from ssnp.diffcore import (
    ParameterStore,
    RngStream,
    Tape,
    adam_step,
    backward,
    grad_check,
    matmul,
    mse,
    relu,
    sum_all,
)


class TestAdam:
    def test_first_step_magnitude(self):
        store = ParameterStore()
        store.create("w", (1,), np.array([5.0]))
        store.grad("w")[...] = 1.0
        adam_step(store, lr=0.1)
        # First bias-corrected step moves by ~lr regardless of gradient scale.
        assert store.value("w")[0] == pytest.approx(5.0 - 0.1, abs=1e-6)
        assert store.step == 1
        np.testing.assert_array_equal(store.grad("w"), [0.0])

    def test_zero_gradient_leaves_parameter(self):
        store = ParameterStore()
        store.create("w", (3,), np.array([1.0, 2.0, 3.0]))
        adam_step(store, lr=0.1)
        np.testing.assert_array_equal(store.value("w"), [1.0, 2.0, 3.0])
        assert store.step == 1

    def test_untouched_namespace_never_moves(self):
        store = ParameterStore()
        store.create("one.w", (2,), np.ones(2))
        store.create("two.w", (2,), np.ones(2))
        before = store.value("two.w").copy()
        for _ in range(5):
            store.grad("one.w")[...] = 0.3
            adam_step(store, lr=0.05)
        np.testing.assert_array_equal(store.value("two.w"), before)
        assert np.any(store.value("one.w") != 1.0)

    def test_converges_on_quadratic(self):
        store = ParameterStore()
        store.create("w", (), np.asarray(0.0))
        for _ in range(200):
            w = store.value("w")
            store.grad("w")[...] = 2.0 * (w - 3.0)
            adam_step(store, lr=0.1)
        assert abs(float(store.value("w")) - 3.0) < 0.05


class TestGradCheck:
    def test_linear_loss_is_exact(self):
        store = ParameterStore()
        store.create("w", (4,), np.array([0.1, -0.2, 0.3, 0.4]))
        coef = np.array([1.0, 2.0, -1.0, 0.5])

        def build(tape: Tape):
            return sum_all(matmul(tape.const(coef.reshape(1, 4)), tape.param(store, "w")))

        report = grad_check(build, store, rel_tol=1e-10, h=1e-6)
        assert report.passed, str(report)
        assert report.max_rel_error < 1e-10

    def test_catches_wrong_gradient(self):
        store = ParameterStore()
        store.create("w", (2,), np.array([1.0, 2.0]))

        # relu at a kink violates the checker's smoothness precondition, so
        # disagreement must be reported, not hidden.
        def build(tape: Tape):
            w = tape.param(store, "w")
            return sum_all(relu(matmul(tape.const(np.array([[1.0, -0.5]])), w)))

        report = grad_check(build, store, rel_tol=1e-12, h=0.6)
        assert not report.passed

    def test_report_lists_parameters(self):
        store = ParameterStore()
        rng = RngStream(31)
        store.create("a", (3, 2), rng.normal((3, 2)))
        store.create("b", (2,), rng.normal((2,)))
        target = rng.normal((3,))

        def build(tape: Tape):
            pred = matmul(tape.param(store, "a"), tape.param(store, "b"))
            return mse(pred, tape.const(target))

        report = grad_check(build, store, rel_tol=1e-5)
        assert report.passed
        assert set(report.per_param) == {"a", "b"}
        assert "PASS" in str(report)
