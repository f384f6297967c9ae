"""Array math with reverse-mode differentiation, Gaussian utilities,
parameter storage, and the Adam optimizer."""

from .autodiff import (
    ShapeError,
    Tape,
    Tensor,
    add,
    add_bias,
    affine,
    backward,
    bernoulli_nll,
    broadcast_row,
    clamp,
    concat,
    conv2d,
    conv_transpose2d,
    detach,
    gather_rows,
    gauss_sample,
    kl_diag,
    matmul,
    mean_pool_set,
    mse,
    mul,
    narrow,
    relu,
    reshape,
    scale,
    sub,
    sum_all,
)
from .gaussian import LOGVAR_MAX, LOGVAR_MIN, DiagonalGaussian, kl_diag_gaussian, reparameterize
from .gradcheck import GradCheckReport, grad_check
from .optim import adam_step
from .params import CheckpointFormatError, ParameterStore, load_store, save_store
from .rng import RngStream

__all__ = [
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "add_bias",
    "affine",
    "backward",
    "bernoulli_nll",
    "broadcast_row",
    "clamp",
    "concat",
    "conv2d",
    "conv_transpose2d",
    "detach",
    "gather_rows",
    "gauss_sample",
    "kl_diag",
    "matmul",
    "mean_pool_set",
    "mse",
    "mul",
    "narrow",
    "relu",
    "reshape",
    "scale",
    "sub",
    "sum_all",
    "LOGVAR_MAX",
    "LOGVAR_MIN",
    "DiagonalGaussian",
    "kl_diag_gaussian",
    "reparameterize",
    "GradCheckReport",
    "grad_check",
    "adam_step",
    "CheckpointFormatError",
    "ParameterStore",
    "load_store",
    "save_store",
    "RngStream",
]
