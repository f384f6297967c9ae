"""Diagonal Gaussians as (mean, log-variance) tensor pairs.

These represent every posterior and prior in the model. Log-variances are
clamped to [-10, 10] at construction to keep KL and likelihood terms finite.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor, clamp, gauss_sample, kl_diag
from .rng import RngStream

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


class DiagonalGaussian:
    """Mean and log-variance tensors of equal shape (last axis = dimension)."""

    __slots__ = ("mean", "log_var")

    def __init__(self, mean: Tensor, log_var: Tensor):
        if mean.data.shape != log_var.data.shape:
            raise ValueError(
                f"DiagonalGaussian: mean shape {mean.data.shape} != log_var shape {log_var.data.shape}"
            )
        self.mean = mean
        self.log_var = clamp(log_var, LOGVAR_MIN, LOGVAR_MAX)

    @property
    def dim(self) -> int:
        return self.mean.data.shape[-1]

    @staticmethod
    def standard(tape: Tape, dim: int) -> "DiagonalGaussian":
        """The unit prior N(0, I)."""
        return DiagonalGaussian(tape.const(np.zeros(dim)), tape.const(np.zeros(dim)))


def kl_diag_gaussian(q: DiagonalGaussian, p: DiagonalGaussian) -> Tensor:
    """Closed-form KL(q || p), summed over rows when q is batched."""
    if q.dim != p.dim:
        raise ValueError(f"kl_diag_gaussian: dimension mismatch {q.dim} vs {p.dim}")
    return kl_diag(q.mean, q.log_var, p.mean, p.log_var)


def reparameterize(q: DiagonalGaussian, stream: RngStream) -> Tensor:
    """Sample mean + std * eps with eps from the given stream."""
    eps = np.asarray(stream.normal(size=q.mean.data.shape))
    return gauss_sample(q.mean, q.log_var, eps)
