"""Assembled reward predictors for the three trainable model kinds.

- "ssnp": image context learner + action neural process; the decoder sees
  both latents.
- "np": the action neural process alone; images are ignored.
- "ns-finetune": frozen image encoder with a plain regression head; observed
  pairs are ignored, so its predictions cannot adapt.
"""

from __future__ import annotations

import numpy as np

from . import action_model as am
from . import context_learner as cl
from .diffcore import RngStream, Tape, Tensor, broadcast_row, concat, reshape
from .diffcore.params import ParameterStore
from .nets import ModelConfig, dense

KINDS = ("ssnp", "np", "ns-finetune")
HEAD_NAMESPACE = "head."


def register_head_params(cfg: ModelConfig, store: ParameterStore, stream: RngStream) -> None:
    store.create_dense(HEAD_NAMESPACE + "l1", cfg.d_c + 4, cfg.hidden, stream)
    store.create_dense(HEAD_NAMESPACE + "l2", cfg.hidden, cfg.hidden, stream)
    store.create_dense(HEAD_NAMESPACE + "out", cfg.hidden, 1, stream)


def head_rewards(tape: Tape, store: ParameterStore, c: Tensor, actions_norm: np.ndarray) -> Tensor:
    """Regression head r(c, a) used by the finetuned-encoder baseline."""
    t = actions_norm.shape[0]
    x = concat([broadcast_row(c, t), tape.const(actions_norm)], axis=1)
    y = dense(tape, store, HEAD_NAMESPACE + "l1", x, relu_after=True)
    y = dense(tape, store, HEAD_NAMESPACE + "l2", y, relu_after=True)
    return reshape(dense(tape, store, HEAD_NAMESPACE + "out", y), (t,))


def register_model_params(kind: str, cfg: ModelConfig, store: ParameterStore, seed: int) -> None:
    """Create all parameters for one model kind, in a fixed order."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    stream = RngStream(seed, "init")
    if kind in ("ssnp", "ns-finetune"):
        cl.register_params(cfg, store, stream)
    if kind == "ssnp":
        am.register_params(cfg, store, stream, context_dim=cfg.d_c)
    elif kind == "np":
        am.register_params(cfg, store, stream, context_dim=0)
    else:
        register_head_params(cfg, store, stream)


class Predictor:
    """Deterministic reward prediction from a frozen parameter store.

    Context latents are taken at their posterior means; with zero observed
    pairs the action latent is the prior mean (the zero vector). Safe to
    share across threads: every call builds its own scratch tape.
    """

    def __init__(self, kind: str, cfg: ModelConfig, store: ParameterStore):
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.cfg = cfg
        self.store = store
        self.context = cl.ContextLearner(cfg, store) if kind in ("ssnp", "ns-finetune") else None
        if kind == "ssnp":
            self.actions = am.ActionModel(cfg, store, context_dim=cfg.d_c)
        elif kind == "np":
            self.actions = am.ActionModel(cfg, store, context_dim=0)
        else:
            self.actions = None

    def context_mean(self, images: np.ndarray | None) -> np.ndarray | None:
        """Mean object latent from an image set (None for image-free kinds)."""
        if self.context is None:
            return None
        if images is None or len(images) == 0:
            raise ValueError(f"model kind {self.kind!r} needs at least one image")
        return self.context.context_mean(np.asarray(images))

    def action_context_mean(self, observed_actions: np.ndarray, observed_rewards: np.ndarray) -> np.ndarray | None:
        if self.actions is None:
            return None
        return self.actions.action_context_mean(observed_actions, observed_rewards)

    def decode(
        self,
        c_mean: np.ndarray | None,
        ca_mean: np.ndarray | None,
        target_actions: np.ndarray,
    ) -> np.ndarray:
        """Unnormalized reward predictions from precomputed latents."""
        tape = Tape()
        a_norm = am.normalize_actions(target_actions)
        if self.kind == "ns-finetune":
            out = head_rewards(tape, self.store, tape.const(c_mean), a_norm)
        elif self.kind == "ssnp":
            out = self.actions.decode_rewards(tape, tape.const(c_mean), tape.const(ca_mean), a_norm)
        else:
            out = self.actions.decode_rewards(tape, None, tape.const(ca_mean), a_norm)
        return am.denormalize_rewards(out.data)

    def predict(
        self,
        images: np.ndarray | None,
        observed_actions: np.ndarray,
        observed_rewards: np.ndarray,
        target_actions: np.ndarray,
    ) -> np.ndarray:
        """Predict rewards for target actions given images and observed pairs."""
        c = self.context_mean(images) if self.context is not None else None
        ca = self.action_context_mean(observed_actions, observed_rewards) if self.actions is not None else None
        return self.decode(c, ca, target_actions)
