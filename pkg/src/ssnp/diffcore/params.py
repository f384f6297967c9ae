"""Named trainable arrays with their gradient and optimizer state.

The store owns four equal-shaped arrays per name (value, gradient
accumulator, and the two Adam moments) plus a global step counter. On first
use the per-name arrays are packed into one contiguous buffer per top-level
namespace ("ctx", "np", ...) with the named arrays as views, so the
optimizer can update a whole subnetwork with a handful of vector ops and
skip subnetworks that a step never touched. The binary snapshot format is
documented in `save_store` and round-trips bit-exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .rng import RngStream

STORE_MAGIC = b"SSNPCKPT1"

_FIELDS = ("value", "grad", "m", "v")


class CheckpointFormatError(ValueError):
    """Malformed or truncated parameter snapshot."""


class ParameterStore:
    def __init__(self):
        self._slots: dict[str, dict[str, np.ndarray]] = {}
        self._blocks: dict[str, dict[str, np.ndarray]] | None = None
        self.step = 0

    # -- registration ------------------------------------------------------

    def create(self, name: str, shape: tuple[int, ...], init: np.ndarray | None = None) -> None:
        if self._blocks is not None:
            raise ValueError("store is finalized; create all parameters before first use")
        if name in self._slots:
            raise ValueError(f"parameter {name!r} already exists")
        value = np.zeros(shape) if init is None else np.asarray(init, dtype=np.float64).reshape(shape)
        self._slots[name] = {
            "value": value,
            "grad": np.zeros(shape),
            "m": np.zeros(shape),
            "v": np.zeros(shape),
        }

    def create_dense(self, name: str, fan_in: int, fan_out: int, stream: RngStream) -> None:
        """Weight matrix with Glorot-normal init plus a zero bias vector."""
        std = np.sqrt(2.0 / (fan_in + fan_out))
        self.create(name + ".w", (fan_in, fan_out), stream.normal((fan_in, fan_out)) * std)
        self.create(name + ".b", (fan_out,), None)

    def create_conv(self, name: str, kh: int, kw: int, cin: int, cout: int, stream: RngStream) -> None:
        fan_in = kh * kw * cin
        fan_out = kh * kw * cout
        std = np.sqrt(2.0 / (fan_in + fan_out))
        self.create(name + ".w", (kh, kw, cin, cout), stream.normal((kh, kw, cin, cout)) * std)
        self.create(name + ".b", (cout,), None)

    # -- packed access -----------------------------------------------------

    @staticmethod
    def _namespace(name: str) -> str:
        return name.split(".", 1)[0]

    def _finalize(self) -> None:
        if self._blocks is not None:
            return
        blocks: dict[str, dict[str, np.ndarray]] = {}
        by_ns: dict[str, list[str]] = {}
        for name in self._slots:
            by_ns.setdefault(self._namespace(name), []).append(name)
        for ns, names in by_ns.items():
            total = sum(self._slots[n]["value"].size for n in names)
            block = {f: np.zeros(total) for f in _FIELDS}
            offset = 0
            for n in names:
                slot = self._slots[n]
                size = slot["value"].size
                shape = slot["value"].shape
                for f in _FIELDS:
                    flat = block[f][offset : offset + size]
                    flat[...] = slot[f].reshape(-1)
                    slot[f] = flat.reshape(shape)
                offset += size
            blocks[ns] = block
        self._blocks = blocks

    def names(self) -> list[str]:
        return list(self._slots)

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def value(self, name: str) -> np.ndarray:
        self._finalize()
        return self._slots[name]["value"]

    def grad(self, name: str) -> np.ndarray:
        self._finalize()
        return self._slots[name]["grad"]

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        self._finalize()
        slot = self._slots[name]
        return slot["m"], slot["v"]

    def blocks(self) -> dict[str, dict[str, np.ndarray]]:
        """Per-namespace packed buffers (value/grad/m/v)."""
        self._finalize()
        return self._blocks

    def set_value(self, name: str, value: np.ndarray) -> None:
        self._finalize()
        slot = self._slots[name]
        slot["value"][...] = np.asarray(value, dtype=np.float64).reshape(slot["value"].shape)

    def zero_grads(self) -> None:
        self._finalize()
        for block in self._blocks.values():
            block["grad"][...] = 0.0


def save_store(store: ParameterStore, fh) -> None:
    """Write the snapshot: magic, u64 step, u32 count, then per name a
    u32-length UTF-8 name, u32 rank, u32 dims, and three consecutive
    little-endian f64 blocks (value, adam m, adam v)."""
    fh.write(STORE_MAGIC)
    write_store_payload(store, fh)


def write_store_payload(store: ParameterStore, fh) -> None:
    store._finalize()
    fh.write(struct.pack("<QI", store.step, len(store._slots)))
    for name, slot in store._slots.items():
        nb = name.encode("utf-8")
        fh.write(struct.pack("<I", len(nb)))
        fh.write(nb)
        shape = slot["value"].shape
        fh.write(struct.pack("<I", len(shape)))
        fh.write(struct.pack(f"<{len(shape)}I", *shape) if shape else b"")
        for key in ("value", "m", "v"):
            fh.write(np.ascontiguousarray(slot[key], dtype="<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointFormatError(f"truncated parameter snapshot (wanted {n} bytes, got {len(buf)})")
    return buf


def load_store(fh) -> ParameterStore:
    magic = fh.read(len(STORE_MAGIC))
    if magic != STORE_MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {STORE_MAGIC!r}")
    return read_store_payload(fh)


def read_store_payload(fh) -> ParameterStore:
    step, count = struct.unpack("<QI", _read_exact(fh, 12))
    store = ParameterStore()
    store.step = step
    for _ in range(count):
        (nlen,) = struct.unpack("<I", _read_exact(fh, 4))
        name = _read_exact(fh, nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", _read_exact(fh, 4))
        shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
        size = int(np.prod(shape)) if shape else 1
        blocks = [
            np.frombuffer(_read_exact(fh, 8 * size), dtype="<f8").astype(np.float64).reshape(shape)
            for _ in range(3)
        ]
        store.create(name, shape, blocks[0])
        store._slots[name]["m"][...] = blocks[1]
        store._slots[name]["v"][...] = blocks[2]
    return store
