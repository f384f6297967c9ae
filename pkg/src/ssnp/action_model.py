"""Neural process over action-reward pairs, optionally conditioned on the
object context latent.

Observed pairs are embedded and mean-pooled into an action context latent
c_a; the decoder predicts a reward for each target action from
(c, c_a, action). The training loss matches the latent inferred from a
random subset of the pairs to the one from the full set, which is what
makes partial-context prediction work at deployment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffcore import (
    DiagonalGaussian,
    RngStream,
    Tape,
    Tensor,
    add,
    broadcast_row,
    concat,
    detach,
    gather_rows,
    kl_diag_gaussian,
    mean_pool_set,
    mse,
    narrow,
    reparameterize,
    reshape,
    scale,
)
from .diffcore.params import ParameterStore
from .doorsim.kinematics import CAND_ANGLE_RANGE, CAND_CENTER_RANGE, CAND_RADIUS_RANGE
from .nets import ModelConfig, dense

NAMESPACE = "np."

# Affine normalization derived from the candidate sampling box; rewards are
# scaled by the global bound (max handle radius 0.95 * 1.1) * pi.
CENTER_HALF = CAND_CENTER_RANGE[1]
RADIUS_MID = 0.5 * (CAND_RADIUS_RANGE[0] + CAND_RADIUS_RANGE[1])
RADIUS_HALF = 0.5 * (CAND_RADIUS_RANGE[1] - CAND_RADIUS_RANGE[0])
ANGLE_SCALE = CAND_ANGLE_RANGE[1]
REWARD_SCALE = 1.1 * math.pi


def normalization_constants() -> dict:
    return {
        "center_half": CENTER_HALF,
        "radius_mid": RADIUS_MID,
        "radius_half": RADIUS_HALF,
        "angle_scale": ANGLE_SCALE,
        "reward_scale": REWARD_SCALE,
    }


def normalize_actions(actions: np.ndarray) -> np.ndarray:
    """Map raw (n, 4) action rows into [-1, 1] per coordinate."""
    a = np.asarray(actions, dtype=np.float64).reshape(-1, 4)
    out = np.empty_like(a)
    out[:, 0] = a[:, 0] / CENTER_HALF
    out[:, 1] = a[:, 1] / CENTER_HALF
    out[:, 2] = (a[:, 2] - RADIUS_MID) / RADIUS_HALF
    out[:, 3] = a[:, 3] / ANGLE_SCALE
    return out


def denormalize_actions(normed: np.ndarray) -> np.ndarray:
    a = np.asarray(normed, dtype=np.float64).reshape(-1, 4)
    out = np.empty_like(a)
    out[:, 0] = a[:, 0] * CENTER_HALF
    out[:, 1] = a[:, 1] * CENTER_HALF
    out[:, 2] = a[:, 2] * RADIUS_HALF + RADIUS_MID
    out[:, 3] = a[:, 3] * ANGLE_SCALE
    return out


def normalize_rewards(rewards: np.ndarray) -> np.ndarray:
    return np.asarray(rewards, dtype=np.float64) / REWARD_SCALE


def denormalize_rewards(normed: np.ndarray) -> np.ndarray:
    return np.asarray(normed, dtype=np.float64) * REWARD_SCALE


@dataclass
class ActionLossParts:
    mse: float
    kl_prior: float
    kl_match: float
    subset_size: int


def register_params(cfg: ModelConfig, store: ParameterStore, stream: RngStream, context_dim: int) -> None:
    store.create_dense(NAMESPACE + "setenc.l1", 5, cfg.hidden, stream)
    store.create_dense(NAMESPACE + "setenc.l2", cfg.hidden, cfg.d_h, stream)
    store.create_dense(NAMESPACE + "agg.l1", cfg.d_h, cfg.hidden, stream)
    store.create_dense(NAMESPACE + "agg.l2", cfg.hidden, 2 * cfg.d_ca, stream)
    store.create_dense(NAMESPACE + "dec.l1", context_dim + cfg.d_ca + 4, cfg.hidden, stream)
    store.create_dense(NAMESPACE + "dec.l2", cfg.hidden, cfg.hidden, stream)
    store.create_dense(NAMESPACE + "dec.out", cfg.hidden, 1, stream)


class ActionModel:
    """`context_dim` is the width of the conditioning latent; 0 drops the
    image pathway entirely (the pure neural-process variant)."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore, context_dim: int):
        self.cfg = cfg
        self.store = store
        self.context_dim = context_dim

    def encode_actions(self, tape: Tape, pairs: np.ndarray) -> Tensor:
        """Mean-pooled embedding of normalized (action, reward) pairs.

        `pairs` is (j, 5) already-normalized rows; an empty list encodes to
        the zero vector by convention.
        """
        pairs = np.asarray(pairs, dtype=np.float64).reshape(-1, 5)
        if pairs.shape[0] == 0:
            return tape.const(np.zeros(self.cfg.d_h))
        x = tape.const(pairs)
        y = dense(tape, self.store, NAMESPACE + "setenc.l1", x, relu_after=True)
        return mean_pool_set(dense(tape, self.store, NAMESPACE + "setenc.l2", y))

    def aggregate(self, tape: Tape, h_a: Tensor, empty: bool = False) -> DiagonalGaussian:
        """Posterior over the action context latent; with no observed pairs
        this is exactly the unit prior."""
        if empty:
            return DiagonalGaussian.standard(tape, self.cfg.d_ca)
        y = dense(tape, self.store, NAMESPACE + "agg.l1", h_a, relu_after=True)
        return _split_vec(dense(tape, self.store, NAMESPACE + "agg.l2", y), self.cfg.d_ca)

    def decode_rewards(self, tape: Tape, c: Tensor | None, c_a: Tensor, actions_norm: np.ndarray) -> Tensor:
        """Predicted normalized rewards (t,) for target actions."""
        t = actions_norm.shape[0]
        cols = []
        if self.context_dim:
            if c is None:
                raise ValueError("decode_rewards: model was built with a context input")
            cols.append(broadcast_row(c, t))
        cols.append(broadcast_row(c_a, t))
        cols.append(tape.const(actions_norm))
        x = concat(cols, axis=1)
        y = dense(tape, self.store, NAMESPACE + "dec.l1", x, relu_after=True)
        y = dense(tape, self.store, NAMESPACE + "dec.l2", y, relu_after=True)
        return reshape(dense(tape, self.store, NAMESPACE + "dec.out", y), (t,))

    def loss_action(
        self,
        tape: Tape,
        actions: np.ndarray,
        rewards: np.ndarray,
        c_sample: Tensor | None,
        stream: RngStream,
        anneal_beta: float,
        subset_size: int | None = None,
        match_target: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> tuple[Tensor, ActionLossParts]:
        """Reward loss for one labeled record.

        Two encoder passes: the full pair set and a random-size random
        subset. Targets are decoded from a sample of the full posterior;
        the subset posterior is pulled toward the (gradient-stopped) full
        posterior so partial context stays predictive. `match_target`
        substitutes fixed (mean, log_var) arrays for the stopped posterior,
        which finite-difference checks need to see the same function the
        backward pass differentiates.
        """
        n = len(actions)
        if n == 0:
            raise ValueError("loss_action needs at least one labeled pair")
        a_norm = normalize_actions(actions)
        r_norm = normalize_rewards(rewards)
        pairs = np.concatenate([a_norm, r_norm[:, None]], axis=1)

        # The per-pair embeddings are shared between the full pass and the
        # subset pass; only the pooling differs.
        x = tape.const(pairs)
        emb = dense(tape, self.store, NAMESPACE + "setenc.l2",
                    dense(tape, self.store, NAMESPACE + "setenc.l1", x, relu_after=True))
        q_full = self.aggregate(tape, mean_pool_set(emb))
        m_sub = int(stream.integers(1, n + 1)) if subset_size is None else int(subset_size)
        perm = stream.permutation(n)
        # Using the original row order when the subset is the whole set makes
        # the matching term exactly zero there.
        sub_emb = emb if m_sub >= n else gather_rows(emb, perm[:m_sub])
        q_part = self.aggregate(tape, mean_pool_set(sub_emb))

        c_a = reparameterize(q_full, stream)
        preds = self.decode_rewards(tape, c_sample, c_a, a_norm)
        fit = mse(preds, tape.const(r_norm))
        kl_prior = kl_diag_gaussian(q_full, DiagonalGaussian.standard(tape, self.cfg.d_ca))
        if match_target is None:
            q_full_stop = DiagonalGaussian(detach(q_full.mean), detach(q_full.log_var))
        else:
            q_full_stop = DiagonalGaussian(tape.const(match_target[0]), tape.const(match_target[1]))
        kl_match = kl_diag_gaussian(q_part, q_full_stop)
        loss = fit
        if anneal_beta != 0.0:
            loss = add(loss, scale(add(kl_prior, kl_match), anneal_beta))
        parts = ActionLossParts(float(fit.data), float(kl_prior.data), float(kl_match.data), m_sub)
        return loss, parts

    def action_context_mean(self, actions: np.ndarray, rewards: np.ndarray) -> np.ndarray:
        """Posterior mean of c_a from observed pairs (zeros when empty)."""
        actions = np.asarray(actions, dtype=np.float64).reshape(-1, 4)
        if actions.shape[0] == 0:
            return np.zeros(self.cfg.d_ca)
        tape = Tape()
        pairs = np.concatenate([normalize_actions(actions), normalize_rewards(rewards)[:, None]], axis=1)
        return self.aggregate(tape, self.encode_actions(tape, pairs)).mean.data.copy()


def _split_vec(t: Tensor, d: int) -> DiagonalGaussian:
    axis = t.data.ndim - 1
    return DiagonalGaussian(narrow(t, axis, 0, d), narrow(t, axis, d, d))
