"""Counter-based random streams with keyed substreams.

Every stochastic component in the package draws from an `RngStream`. Streams
are keyed by integer/string tuples, so independent pipeline stages (one per
door, per record, per epoch) can be derived without sharing mutable state;
this is what makes parallel dataset generation and evaluation byte-identical
to the serial order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fold_part(h: int, part: int | str) -> int:
    if isinstance(part, str):
        for b in part.encode("utf-8"):
            h = _splitmix64(h ^ b)
        return h
    return _splitmix64(h ^ (int(part) & _MASK64))


def _mix_key(parts: tuple[int | str, ...]) -> tuple[int, int]:
    """Fold key parts into a 128-bit Philox key."""
    h = 0x5851F42D4C957F2D
    for p in parts:
        h = _fold_part(h, p)
    w0 = _splitmix64(h)
    w1 = _splitmix64(w0)
    return w0, w1


class RngStream:
    """Deterministic random stream backed by the Philox counter generator.

    Gaussian draws use Box-Muller on top of the uniform stream so the normals
    do not depend on the host library's rejection sampler.
    """

    def __init__(self, *key_parts: int | str):
        if not key_parts:
            raise ValueError("RngStream needs at least one key part")
        self._key_parts = tuple(key_parts)
        w0, w1 = _mix_key(self._key_parts)
        self._gen = np.random.Generator(np.random.Philox(key=np.array([w0, w1], dtype=np.uint64)))

    def substream(self, *parts: int | str) -> "RngStream":
        """Derive an independent stream keyed by the extended tuple."""
        return RngStream(*self._key_parts, *parts)

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None) -> np.ndarray | float:
        u = self._gen.random(size)
        return lo + (hi - lo) * u

    def normal(self, size=None) -> np.ndarray | float:
        """Standard normal draws via Box-Muller (no spare caching)."""
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # in (0, 1], keeps log finite
        u2 = self._gen.random(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, lo: int, hi: int, size=None):
        """Uniform integers in [lo, hi)."""
        out = self._gen.integers(lo, hi, size=size)
        return int(out) if size is None else out

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def sign(self) -> int:
        """Uniform draw from {-1, +1}."""
        return 1 if self._gen.random() < 0.5 else -1
