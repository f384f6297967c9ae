"""Training loops for the three model kinds, plus checkpoint files.

All kinds share the per-record step discipline: one record, one tape, one
optimizer step. The semi-supervised model interleaves labeled and unlabeled
records in a seed-determined shuffle and adds the reward loss only where
labels exist, so unlabeled records can never move the action network.
"""

from __future__ import annotations

import json
import struct
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .action_model import ActionModel, normalization_constants, normalize_actions, normalize_rewards
from .context_learner import ContextLearner
from .diffcore import RngStream, Tape, add, backward, mse, scale
from .diffcore.optim import adam_step
from .diffcore.params import (
    STORE_MAGIC,
    CheckpointFormatError,
    ParameterStore,
    read_store_payload,
    write_store_payload,
)
from .doorsim.dataset import Dataset
from .models import KINDS, Predictor, head_rewards, register_model_params
from .nets import ModelConfig

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    kind: str = "ssnp"
    epochs: int = 60
    lr: float = 1e-3
    anneal_frac: float = 0.2   # fraction of epochs over which beta ramps to 1
    seed: int = 0
    loss_weight: float = 1.0   # weight of the reward loss inside the total

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epochs": self.epochs,
            "lr": self.lr,
            "anneal_frac": self.anneal_frac,
            "seed": self.seed,
            "loss_weight": self.loss_weight,
        }


def anneal_beta(epoch: int, cfg: TrainConfig) -> float:
    """KL weight ramp: 0 at epoch 0, 1 from the end of the ramp onward."""
    steps = max(1, round(cfg.anneal_frac * cfg.epochs))
    return min(1.0, epoch / steps)


@dataclass
class Checkpoint:
    kind: str
    model_config: ModelConfig
    train_config: dict
    dataset_echo: dict
    normalization: dict
    loss_trace: dict
    final_loss: dict
    store: ParameterStore

    def predictor(self) -> Predictor:
        return Predictor(self.kind, self.model_config, self.store)


def _dataset_echo(ds: Dataset) -> dict:
    return {
        "doors": len(ds.records),
        "images_per_door": ds.images_per_door,
        "actions_per_door": ds.actions_per_door,
        "image_size": ds.image_size,
        "labeled_frac": ds.labeled_frac,
        "seed": ds.seed,
    }


class _EpochLog:
    def __init__(self, path: str | None):
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, epoch: int, loss_x: float | None, loss_a: float | None, beta: float, wall_ms: float) -> None:
        if self._fh is None:
            return
        row = {"epoch": epoch, "meanLossX": loss_x, "meanLossA": loss_a, "beta": beta,
               "wallMs": round(wall_ms, 3)}
        self._fh.write(json.dumps(row) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def train(
    train_ds: Dataset,
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    log_path: str | None = None,
) -> Checkpoint:
    if model_cfg is None:
        model_cfg = ModelConfig(image_size=train_ds.image_size)
    if cfg.kind == "ssnp":
        return _train_ssnp(train_ds, cfg, model_cfg, log_path)
    if cfg.kind == "np":
        return _train_np(train_ds, cfg, model_cfg, log_path)
    return _train_ns_finetune(train_ds, cfg, model_cfg, log_path)


def _finish(
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    ds: Dataset,
    store: ParameterStore,
    trace: dict,
    final_loss: dict,
) -> Checkpoint:
    return Checkpoint(
        kind=cfg.kind,
        model_config=model_cfg,
        train_config=cfg.to_dict(),
        dataset_echo=_dataset_echo(ds),
        normalization=normalization_constants(),
        loss_trace=trace,
        final_loss=final_loss,
        store=store,
    )


def _train_ssnp(ds: Dataset, cfg: TrainConfig, model_cfg: ModelConfig, log_path: str | None) -> Checkpoint:
    store = ParameterStore()
    register_model_params("ssnp", model_cfg, store, cfg.seed)
    ctx = ContextLearner(model_cfg, store)
    act = ActionModel(model_cfg, store, context_dim=model_cfg.d_c)
    if ds.labeled_count == 0:
        warnings.warn("no labeled records: semi-supervised training degenerates to image-only updates")

    base = RngStream(cfg.seed, "train")
    trace = {"loss_x": [], "loss_a": [], "beta": []}
    log = _EpochLog(log_path)
    try:
        for epoch in range(cfg.epochs):
            beta = anneal_beta(epoch, cfg)
            t0 = time.perf_counter()
            order = base.substream("shuffle", epoch).permutation(len(ds.records))
            sum_x, sum_a, n_a = 0.0, 0.0, 0
            for idx in order:
                rec = ds.records[int(idx)]
                rs = base.substream("rec", epoch, int(idx))
                tape = Tape()
                loss_x, _, c = ctx.loss_context(tape, rec.images, rs, beta)
                total = loss_x
                if rec.labeled:
                    loss_a, _ = act.loss_action(tape, rec.actions, rec.rewards, c, rs, beta)
                    total = add(loss_x, scale(loss_a, cfg.loss_weight))
                    sum_a += float(loss_a.data)
                    n_a += 1
                backward(tape, total)
                adam_step(store, cfg.lr)
                sum_x += float(loss_x.data)
            mean_x = sum_x / len(ds.records)
            mean_a = sum_a / n_a if n_a else None
            trace["loss_x"].append(mean_x)
            trace["loss_a"].append(mean_a)
            trace["beta"].append(beta)
            log.write(epoch, mean_x, mean_a, beta, (time.perf_counter() - t0) * 1e3)
    finally:
        log.close()

    ckpt = _finish(cfg, model_cfg, ds, store, trace, {})
    ckpt.final_loss = evaluate_frozen_loss(ckpt, ds)
    return ckpt


def _train_np(ds: Dataset, cfg: TrainConfig, model_cfg: ModelConfig, log_path: str | None) -> Checkpoint:
    labeled_ids = [i for i, rec in enumerate(ds.records) if rec.labeled]
    if not labeled_ids:
        raise ValueError("the supervised baseline needs at least one labeled record")
    store = ParameterStore()
    register_model_params("np", model_cfg, store, cfg.seed)
    act = ActionModel(model_cfg, store, context_dim=0)

    base = RngStream(cfg.seed, "train")
    trace = {"loss_x": [], "loss_a": [], "beta": []}
    log = _EpochLog(log_path)
    try:
        for epoch in range(cfg.epochs):
            beta = anneal_beta(epoch, cfg)
            t0 = time.perf_counter()
            order = base.substream("shuffle", epoch).permutation(len(labeled_ids))
            sum_a = 0.0
            for pos in order:
                idx = labeled_ids[int(pos)]
                rec = ds.records[idx]
                rs = base.substream("rec", epoch, idx)
                tape = Tape()
                loss_a, _ = act.loss_action(tape, rec.actions, rec.rewards, None, rs, beta)
                backward(tape, loss_a)
                adam_step(store, cfg.lr)
                sum_a += float(loss_a.data)
            mean_a = sum_a / len(labeled_ids)
            trace["loss_x"].append(None)
            trace["loss_a"].append(mean_a)
            trace["beta"].append(beta)
            log.write(epoch, None, mean_a, beta, (time.perf_counter() - t0) * 1e3)
    finally:
        log.close()

    ckpt = _finish(cfg, model_cfg, ds, store, trace, {})
    ckpt.final_loss = evaluate_frozen_loss(ckpt, ds)
    return ckpt


def _train_ns_finetune(ds: Dataset, cfg: TrainConfig, model_cfg: ModelConfig, log_path: str | None) -> Checkpoint:
    """Phase 1: image autoencoder on every record. Phase 2: the encoder is
    frozen (it never joins a phase-2 tape) and a fresh head regresses rewards
    from the mean context latent."""
    labeled_ids = [i for i, rec in enumerate(ds.records) if rec.labeled]
    if not labeled_ids:
        raise ValueError("finetuning needs at least one labeled record")
    store = ParameterStore()
    register_model_params("ns-finetune", model_cfg, store, cfg.seed)
    ctx = ContextLearner(model_cfg, store)

    base = RngStream(cfg.seed, "train")
    trace = {"loss_x": [], "loss_a": [], "beta": []}
    log = _EpochLog(log_path)
    try:
        for epoch in range(cfg.epochs):
            beta = anneal_beta(epoch, cfg)
            t0 = time.perf_counter()
            order = base.substream("shuffle", epoch).permutation(len(ds.records))
            sum_x = 0.0
            for idx in order:
                rec = ds.records[int(idx)]
                rs = base.substream("rec", epoch, int(idx))
                tape = Tape()
                loss_x, _, _ = ctx.loss_context(tape, rec.images, rs, beta)
                backward(tape, loss_x)
                adam_step(store, cfg.lr)
                sum_x += float(loss_x.data)
            mean_x = sum_x / len(ds.records)
            trace["loss_x"].append(mean_x)
            trace["loss_a"].append(None)
            trace["beta"].append(beta)
            log.write(epoch, mean_x, None, beta, (time.perf_counter() - t0) * 1e3)

        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            order = base.substream("head-shuffle", epoch).permutation(len(labeled_ids))
            sum_h = 0.0
            for pos in order:
                idx = labeled_ids[int(pos)]
                rec = ds.records[idx]
                # Frozen embedding: computed off-tape, enters the head as a constant.
                c_mean = ctx.context_mean(np.asarray(rec.images))
                tape = Tape()
                preds = head_rewards(tape, store, tape.const(c_mean), normalize_actions(rec.actions))
                loss_h = mse(preds, tape.const(normalize_rewards(rec.rewards)))
                backward(tape, loss_h)
                adam_step(store, cfg.lr)
                sum_h += float(loss_h.data)
            mean_h = sum_h / len(labeled_ids)
            trace["loss_a"].append(mean_h)
            trace["loss_x"].append(None)
            trace["beta"].append(1.0)
            log.write(cfg.epochs + epoch, None, mean_h, 1.0, (time.perf_counter() - t0) * 1e3)
    finally:
        log.close()

    ckpt = _finish(cfg, model_cfg, ds, store, trace, {})
    ckpt.final_loss = evaluate_frozen_loss(ckpt, ds)
    return ckpt


def evaluate_frozen_loss(ckpt: Checkpoint, ds: Dataset) -> dict:
    """Dataset loss at beta = 1 with frozen parameters and a dedicated
    stream; deterministic given (checkpoint bytes, dataset bytes), so a
    reloaded checkpoint reproduces its recorded values exactly."""
    base = RngStream(int(ckpt.train_config["seed"]), "final")
    store = ckpt.store
    mc = ckpt.model_config
    labeled_ids = [i for i, rec in enumerate(ds.records) if rec.labeled]

    if ckpt.kind == "np":
        act = ActionModel(mc, store, context_dim=0)
        sum_a = 0.0
        for idx in labeled_ids:
            rec = ds.records[idx]
            loss_a, _ = act.loss_action(Tape(), rec.actions, rec.rewards, None, base.substream(idx), 1.0)
            sum_a += float(loss_a.data)
        return {"loss_x": None, "loss_a": sum_a / len(labeled_ids) if labeled_ids else None}

    ctx = ContextLearner(mc, store)
    sum_x, sum_a, n_a = 0.0, 0.0, 0
    act = ActionModel(mc, store, context_dim=mc.d_c) if ckpt.kind == "ssnp" else None
    for idx, rec in enumerate(ds.records):
        rs = base.substream(idx)
        tape = Tape()
        loss_x, _, c = ctx.loss_context(tape, rec.images, rs, 1.0)
        sum_x += float(loss_x.data)
        if not rec.labeled:
            continue
        if ckpt.kind == "ssnp":
            loss_a, _ = act.loss_action(tape, rec.actions, rec.rewards, c, rs, 1.0)
        else:
            c_mean = ctx.context_mean(np.asarray(rec.images))
            head_tape = Tape()
            preds = head_rewards(head_tape, store, head_tape.const(c_mean), normalize_actions(rec.actions))
            loss_a = mse(preds, head_tape.const(normalize_rewards(rec.rewards)))
        sum_a += float(loss_a.data)
        n_a += 1
    return {
        "loss_x": sum_x / len(ds.records),
        "loss_a": sum_a / n_a if n_a else None,
    }


# ---------------------------------------------------------------------------
# checkpoint files
# ---------------------------------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Magic, u32 JSON-metadata length, metadata, then the parameter payload."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": ckpt.kind,
        "model_config": ckpt.model_config.to_dict(),
        "train_config": ckpt.train_config,
        "dataset_echo": ckpt.dataset_echo,
        "normalization": ckpt.normalization,
        "loss_trace": ckpt.loss_trace,
        "final_loss": ckpt.final_loss,
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        write_store_payload(ckpt.store, fh)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(STORE_MAGIC))
        if magic != STORE_MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}, expected {STORE_MAGIC!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise CheckpointFormatError("truncated checkpoint header")
        (meta_len,) = struct.unpack("<I", raw)
        blob = fh.read(meta_len)
        if len(blob) != meta_len:
            raise CheckpointFormatError("truncated checkpoint metadata")
        try:
            meta = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"corrupt checkpoint metadata: {exc}") from exc
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {meta.get('format_version')}")
        store = read_store_payload(fh)
    return Checkpoint(
        kind=meta["kind"],
        model_config=ModelConfig.from_dict(meta["model_config"]),
        train_config=meta["train_config"],
        dataset_echo=meta["dataset_echo"],
        normalization=meta["normalization"],
        loss_trace=meta["loss_trace"],
        final_loss=meta["final_loss"],
        store=store,
    )
