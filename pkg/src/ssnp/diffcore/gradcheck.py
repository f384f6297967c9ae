"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, backward
from .params import ParameterStore


@dataclass
class GradCheckReport:
    rel_tol: float
    max_rel_error: float = 0.0
    worst_param: str = ""
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.rel_tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"gradcheck {status}: max rel error {self.max_rel_error:.3e} "
            f"(worst {self.worst_param!r}, tol {self.rel_tol:.1e})"
        )


def grad_check(
    build_loss,
    store: ParameterStore,
    rel_tol: float = 1e-5,
    h: float = 1e-6,
    param_names: list[str] | None = None,
) -> GradCheckReport:
    """Compare backward() gradients against central finite differences.

    `build_loss` must construct the loss on a fresh tape from the store's
    current values; it is re-invoked per perturbed evaluation. Relative
    error per element is |a - n| / max(|a|, |n|, 1).
    """

    def loss_value() -> float:
        return float(build_loss(Tape()).data)

    tape = Tape()
    loss = build_loss(tape)
    store.zero_grads()
    backward(tape, loss)
    names = param_names if param_names is not None else store.names()
    analytic = {name: store.grad(name).copy() for name in names}
    store.zero_grads()

    report = GradCheckReport(rel_tol=rel_tol)
    for name in names:
        value = store.value(name)
        a = analytic[name]
        worst = 0.0
        flat = value.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            down = loss_value()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1.0)
            if err > worst:
                worst = err
        report.per_param[name] = worst
        if worst > report.max_rel_error:
            report.max_rel_error = worst
            report.worst_param = name
    return report
