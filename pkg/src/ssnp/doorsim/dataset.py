"""Door dataset construction and binary serialization.

Each record bundles one door's hidden kinematics (oracle use only), its
image set, its candidate actions, and — when the record is labeled — the
executed rewards. Generation is keyed per door, so records are identical
whether doors are produced serially or in parallel.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ..diffcore.rng import RngStream
from .kinematics import Action, DoorKinematics, execute_action, sample_candidate_actions, sample_door
from .render import CAM_DIST_RANGE, render

DATASET_MAGIC = b"SSNPDS1\0"
DATASET_VERSION = 1


class DatasetFormatError(ValueError):
    """Malformed or truncated dataset file."""


@dataclass
class ObjectRecord:
    kinematics: DoorKinematics
    images: np.ndarray          # (m, H, W) float32 in [0, 1]
    actions: np.ndarray         # (n, 4) float64: center x, center y, radius, goal angle
    rewards: np.ndarray | None  # (n,) float64, present iff labeled
    labeled: bool

    def action(self, i: int) -> Action:
        return Action.from_array(self.actions[i])


@dataclass
class DatasetConfig:
    train_doors: int = 800
    test_doors: int = 50
    images_per_door: int = 10
    actions_per_door: int = 10
    image_size: int = 32
    labeled_frac: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.labeled_frac <= 1.0:
            raise ValueError(f"labeled_frac {self.labeled_frac} outside [0, 1]")


@dataclass
class Dataset:
    records: list[ObjectRecord]
    images_per_door: int
    actions_per_door: int
    image_size: int
    labeled_frac: float
    seed: int
    version: int = DATASET_VERSION

    @property
    def labeled_count(self) -> int:
        return sum(1 for r in self.records if r.labeled)


def _build_record(stream: RngStream, m: int, n: int, size: int, labeled: bool) -> ObjectRecord:
    door = sample_door(stream)
    images = np.empty((m, size, size), dtype=np.float32)
    for j in range(m):
        theta = float(stream.uniform(0.0, math.pi))
        dist = float(stream.uniform(*CAM_DIST_RANGE))
        images[j] = render(door, theta, dist, size).astype(np.float32)
    actions = sample_candidate_actions(stream, n)
    rewards = np.array([execute_action(door, a) for a in actions])
    rows = np.stack([a.as_array() for a in actions])
    return ObjectRecord(door, images, rows, rewards if labeled else None, labeled)


def generate_dataset(cfg: DatasetConfig) -> tuple[Dataset, Dataset]:
    """Build the train/test pair. Exactly round(k * train_doors) train
    records keep their rewards; test records always do."""
    base = RngStream(cfg.seed)
    n_labeled = round(cfg.labeled_frac * cfg.train_doors)
    perm = base.substream("labels").permutation(cfg.train_doors) if cfg.train_doors else np.array([], dtype=int)
    labeled_ids = set(int(i) for i in perm[:n_labeled])

    train_records = [
        _build_record(
            base.substream(0, i),
            cfg.images_per_door,
            cfg.actions_per_door,
            cfg.image_size,
            i in labeled_ids,
        )
        for i in range(cfg.train_doors)
    ]
    test_records = [
        _build_record(base.substream(1, i), cfg.images_per_door, cfg.actions_per_door, cfg.image_size, True)
        for i in range(cfg.test_doors)
    ]

    def wrap(records):
        return Dataset(
            records,
            cfg.images_per_door,
            cfg.actions_per_door,
            cfg.image_size,
            cfg.labeled_frac,
            cfg.seed,
        )

    return wrap(train_records), wrap(test_records)


def save_dataset(ds: Dataset, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIII",
                ds.version,
                len(ds.records),
                ds.images_per_door,
                ds.actions_per_door,
                ds.image_size,
                ds.image_size,
            )
        )
        fh.write(struct.pack("<dQ", ds.labeled_frac, ds.seed))
        for rec in ds.records:
            k = rec.kinematics
            fh.write(struct.pack("<ddddb", k.hinge_pos[0], k.hinge_pos[1], k.width, k.handle_radius, k.open_sign))
            fh.write(struct.pack("<B", 1 if rec.labeled else 0))
            fh.write(np.ascontiguousarray(rec.images, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(rec.actions, dtype="<f8").tobytes())
            if rec.labeled:
                fh.write(np.ascontiguousarray(rec.rewards, dtype="<f8").tobytes())


def _read_exact(fh, count: int) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise DatasetFormatError(f"truncated dataset file (wanted {count} bytes, got {len(buf)})")
    return buf


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(DATASET_MAGIC))
        if magic != DATASET_MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}, expected {DATASET_MAGIC!r}")
        version, doors, m, n, ih, iw = struct.unpack("<IIIIII", _read_exact(fh, 24))
        if version != DATASET_VERSION:
            raise DatasetFormatError(f"unsupported dataset version {version}")
        k, seed = struct.unpack("<dQ", _read_exact(fh, 16))
        records = []
        for _ in range(doors):
            hx, hy, width, radius, sign = struct.unpack("<ddddb", _read_exact(fh, 33))
            (labeled,) = struct.unpack("<B", _read_exact(fh, 1))
            images = np.frombuffer(_read_exact(fh, 4 * m * ih * iw), dtype="<f4").reshape(m, ih, iw).copy()
            actions = np.frombuffer(_read_exact(fh, 8 * n * 4), dtype="<f8").reshape(n, 4).copy()
            rewards = None
            if labeled:
                rewards = np.frombuffer(_read_exact(fh, 8 * n), dtype="<f8").copy()
            records.append(
                ObjectRecord(DoorKinematics((hx, hy), int(sign), width, radius), images, actions, rewards, bool(labeled))
            )
        return Dataset(records, m, n, ih, k, seed, version)
