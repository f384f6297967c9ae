import os

# Must be set before numpy loads: single-threaded BLAS is faster for this
# package's small matrices and keeps subprocess runs comparable.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

from ssnp.diffcore import ParameterStore, RngStream
from ssnp.nets import ModelConfig


def tiny_config(image_size: int = 8) -> ModelConfig:
    """Small but structurally complete dimensions for finite-difference work."""
    return ModelConfig(
        image_size=image_size,
        d_h=16,
        d_c=4,
        d_z=3,
        d_ca=5,
        hidden=12,
        conv_channels=(4, 6),
    )


@pytest.fixture
def stream() -> RngStream:
    return RngStream(1234)


@pytest.fixture
def store() -> ParameterStore:
    return ParameterStore()


def random_images(stream: RngStream, m: int, size: int) -> np.ndarray:
    """Binary images with the renderer's value range."""
    return (stream.uniform(0.0, 1.0, (m, size, size)) > 0.7).astype(np.float64)
