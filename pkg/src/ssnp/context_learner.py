"""Set-structured image autoencoder (the context learner).

Five subnetworks: a shared convolutional set encoder, a statistic network
producing the object latent c from the pooled embedding, an inference
network for the per-image nuisance latent z, a latent decoder giving the
conditional prior over z, and an observation decoder that reconstructs
images from (c, z). Its training objective is the negated set ELBO.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import (
    DiagonalGaussian,
    RngStream,
    Tape,
    Tensor,
    add,
    bernoulli_nll,
    broadcast_row,
    concat,
    conv2d,
    conv_transpose2d,
    kl_diag_gaussian,
    mean_pool_set,
    narrow,
    reparameterize,
    reshape,
    scale,
)
from .diffcore.params import ParameterStore
from .nets import ModelConfig, dense

NAMESPACE = "ctx."


@dataclass
class ContextLossParts:
    recon_nll: float
    kl_instance: float
    kl_context: float


def register_params(cfg: ModelConfig, store: ParameterStore, stream: RngStream) -> None:
    c1, c2 = cfg.conv_channels
    grid = cfg.decoder_grid
    store.create_conv(NAMESPACE + "enc.conv1", 3, 3, 1, c1, stream)
    store.create_conv(NAMESPACE + "enc.conv2", 3, 3, c1, c2, stream)
    store.create_dense(NAMESPACE + "enc.fc", grid * grid * c2, cfg.d_h, stream)
    store.create_dense(NAMESPACE + "stat.l1", cfg.d_h, cfg.hidden, stream)
    store.create_dense(NAMESPACE + "stat.l2", cfg.hidden, 2 * cfg.d_c, stream)
    store.create_dense(NAMESPACE + "inf.l1", cfg.d_c + cfg.d_h, cfg.hidden, stream)
    store.create_dense(NAMESPACE + "inf.l2", cfg.hidden, 2 * cfg.d_z, stream)
    store.create_dense(NAMESPACE + "latdec.l1", cfg.d_c, cfg.hidden, stream)
    store.create_dense(NAMESPACE + "latdec.l2", cfg.hidden, 2 * cfg.d_z, stream)
    store.create_dense(NAMESPACE + "obsdec.fc", cfg.d_c + cfg.d_z, grid * grid * c2, stream)
    store.create_conv(NAMESPACE + "obsdec.deconv1", 2, 2, c2, c1, stream)
    store.create_conv(NAMESPACE + "obsdec.deconv2", 2, 2, c1, 1, stream)


def _split_gaussian(t: Tensor, d: int) -> DiagonalGaussian:
    axis = t.data.ndim - 1
    return DiagonalGaussian(narrow(t, axis, 0, d), narrow(t, axis, d, d))


class ContextLearner:
    def __init__(self, cfg: ModelConfig, store: ParameterStore):
        self.cfg = cfg
        self.store = store

    def encode_set(self, tape: Tape, images: np.ndarray) -> tuple[Tensor, Tensor]:
        """Shared conv encoder per image, mean-pooled across the set.

        Returns (per-image embeddings (m, d_h), pooled embedding (d_h,)).
        """
        if images.ndim != 3 or images.shape[0] < 1:
            raise ValueError(f"encode_set needs a nonempty (m, H, W) stack, got {images.shape}")
        m, h, w = images.shape
        x = tape.const(np.asarray(images, dtype=np.float64).reshape(m, h, w, 1))
        y = conv2d(x, tape.param(self.store, NAMESPACE + "enc.conv1.w"),
                   tape.param(self.store, NAMESPACE + "enc.conv1.b"), stride=2, padding=1, relu_after=True)
        y = conv2d(y, tape.param(self.store, NAMESPACE + "enc.conv2.w"),
                   tape.param(self.store, NAMESPACE + "enc.conv2.b"), stride=2, padding=1, relu_after=True)
        flat = reshape(y, (m, y.data.shape[1] * y.data.shape[2] * y.data.shape[3]))
        per_image = dense(tape, self.store, NAMESPACE + "enc.fc", flat)
        return per_image, mean_pool_set(per_image)

    def infer_context(self, tape: Tape, pooled: Tensor) -> DiagonalGaussian:
        y = dense(tape, self.store, NAMESPACE + "stat.l1", pooled, relu_after=True)
        return _split_gaussian(dense(tape, self.store, NAMESPACE + "stat.l2", y), self.cfg.d_c)

    def infer_instance(self, tape: Tape, c: Tensor, per_image: Tensor) -> DiagonalGaussian:
        m = per_image.data.shape[0]
        x = concat([broadcast_row(c, m), per_image], axis=1)
        y = dense(tape, self.store, NAMESPACE + "inf.l1", x, relu_after=True)
        return _split_gaussian(dense(tape, self.store, NAMESPACE + "inf.l2", y), self.cfg.d_z)

    def prior_instance(self, tape: Tape, c: Tensor) -> DiagonalGaussian:
        y = dense(tape, self.store, NAMESPACE + "latdec.l1", c, relu_after=True)
        return _split_gaussian(dense(tape, self.store, NAMESPACE + "latdec.l2", y), self.cfg.d_z)

    def decode_images(self, tape: Tape, c: Tensor, z: Tensor) -> Tensor:
        """Reconstruction logits (m, H, W, 1) from the context and one z per image."""
        m = z.data.shape[0]
        grid = self.cfg.decoder_grid
        c1, c2 = self.cfg.conv_channels
        x = concat([broadcast_row(c, m), z], axis=1)
        y = dense(tape, self.store, NAMESPACE + "obsdec.fc", x, relu_after=True)
        y = reshape(y, (m, grid, grid, c2))
        y = conv_transpose2d(y, tape.param(self.store, NAMESPACE + "obsdec.deconv1.w"),
                             tape.param(self.store, NAMESPACE + "obsdec.deconv1.b"), factor=2, relu_after=True)
        return conv_transpose2d(y, tape.param(self.store, NAMESPACE + "obsdec.deconv2.w"),
                                tape.param(self.store, NAMESPACE + "obsdec.deconv2.b"), factor=2)

    def loss_context(
        self, tape: Tape, images: np.ndarray, stream: RngStream, anneal_beta: float
    ) -> tuple[Tensor, ContextLossParts, Tensor]:
        """Single-sample negated set ELBO.

        Returns (loss, detached term values, the c sample) so a labeled
        record can reuse the same context sample for its reward loss.
        """
        m = images.shape[0]
        per_image, pooled = self.encode_set(tape, images)
        q_c = self.infer_context(tape, pooled)
        c = reparameterize(q_c, stream)
        q_z = self.infer_instance(tape, c, per_image)
        p_z = self.prior_instance(tape, c)
        z = reparameterize(q_z, stream)
        logits = self.decode_images(tape, c, z)
        targets = tape.const(np.asarray(images, dtype=np.float64).reshape(logits.data.shape))
        nll = bernoulli_nll(logits, targets)
        kl_z = kl_diag_gaussian(q_z, p_z)
        kl_c = kl_diag_gaussian(q_c, DiagonalGaussian.standard(tape, self.cfg.d_c))
        loss = nll
        if anneal_beta != 0.0:
            loss = add(loss, scale(add(kl_z, kl_c), anneal_beta))
        parts = ContextLossParts(float(nll.data), float(kl_z.data), float(kl_c.data))
        return loss, parts, c

    def context_mean(self, images: np.ndarray) -> np.ndarray:
        """Posterior mean of the context latent; the deterministic encoding
        used at prediction time."""
        tape = Tape()
        _, pooled = self.encode_set(tape, images)
        return self.infer_context(tape, pooled).mean.data.copy()
