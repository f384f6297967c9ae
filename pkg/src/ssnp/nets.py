"""Model dimensions and the small dense-layer helper shared by all heads."""

from __future__ import annotations

from dataclasses import dataclass

from .diffcore import Tape, Tensor, affine
from .diffcore.params import ParameterStore


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    d_h: int = 64          # per-element embedding width (images and pairs)
    d_c: int = 16          # object context latent
    d_z: int = 8           # per-image nuisance latent
    d_ca: int = 16         # action context latent
    hidden: int = 64
    conv_channels: tuple[int, int] = (8, 16)

    def __post_init__(self):
        if self.image_size % 4 != 0:
            raise ValueError(f"image_size {self.image_size} must be divisible by 4")

    @property
    def decoder_grid(self) -> int:
        return self.image_size // 4

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "d_h": self.d_h,
            "d_c": self.d_c,
            "d_z": self.d_z,
            "d_ca": self.d_ca,
            "hidden": self.hidden,
            "conv_channels": list(self.conv_channels),
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(
            image_size=d["image_size"],
            d_h=d["d_h"],
            d_c=d["d_c"],
            d_z=d["d_z"],
            d_ca=d["d_ca"],
            hidden=d["hidden"],
            conv_channels=tuple(d["conv_channels"]),
        )


def dense(tape: Tape, store: ParameterStore, name: str, x: Tensor, relu_after: bool = False) -> Tensor:
    return affine(x, tape.param(store, name + ".w"), tape.param(store, name + ".b"), relu_after)
