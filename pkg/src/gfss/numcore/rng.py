"""Counter-based deterministic PRNG (splitmix64 finalizer).

Streams depend only on (seed, draw index), never on platform or numpy
version, so every experiment is reproducible bit for bit.  Child streams
are derived from string/int labels via :meth:`Rng.spawn`, which lets
independent units of work (images, episodes, runs) draw without any
shared mutable state.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix(z: int) -> int:
    """splitmix64 finalizer on a python int (mod 2**64)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _mix_array(z: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer; uint64 arithmetic wraps mod 2**64."""
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _fold(label) -> int:
    """Hash a label (int or str) into 64 bits, stably across platforms."""
    if isinstance(label, (int, np.integer)):
        return _mix(int(label) ^ 0xA5A5A5A5A5A5A5A5)
    if isinstance(label, str):
        h = _FNV_OFFSET
        for b in label.encode("utf-8"):
            h = ((h ^ b) * _FNV_PRIME) & _MASK
        return h
    raise TypeError(f"rng labels must be int or str, got {type(label).__name__}")


class Rng:
    """One deterministic stream: output i is mix(key + (i+1)*GOLDEN)."""

    __slots__ = ("_key", "_counter")

    def __init__(self, seed: int):
        self._key = _mix(int(seed) & _MASK)
        self._counter = 0

    @classmethod
    def _from_key(cls, key: int) -> "Rng":
        rng = cls.__new__(cls)
        rng._key = key & _MASK
        rng._counter = 0
        return rng

    def spawn(self, *labels) -> "Rng":
        """Derive an independent child stream from this stream's key.

        Independent of how many draws were made; the same labels always
        yield the same child.
        """
        key = self._key
        for label in labels:
            key = _mix(key ^ _fold(label))
        return Rng._from_key(key)

    # raw draws ---------------------------------------------------------

    def _next_block(self, n: int) -> np.ndarray:
        base = (self._key + (self._counter + 1) * _GOLDEN) & _MASK
        self._counter += n
        counters = np.uint64(base) + np.uint64(_GOLDEN) * np.arange(n, dtype=np.uint64)
        return _mix_array(counters)

    def u64(self) -> int:
        self._counter += 1
        return _mix((self._key + self._counter * _GOLDEN) & _MASK)

    # floats ------------------------------------------------------------

    def uniform(self, shape=None) -> np.ndarray | float:
        """Uniform in [0, 1), float64 (53 significant bits)."""
        if shape is None:
            return (self.u64() >> 11) * 2.0**-53
        n = int(np.prod(shape))
        z = self._next_block(n)
        out = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return out.reshape(shape)

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Gaussian draws via Box-Muller; float32 output."""
        n = int(np.prod(shape))
        m = (n + 1) // 2
        z = self._next_block(2 * m)
        # u1 in (0, 1] so log never sees zero
        u1 = ((z[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (z[m:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        pair = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        out = (mean + std * pair).astype(np.float32)
        return out.reshape(shape)

    def truncated_normal(self, shape, std: float = 0.02) -> np.ndarray:
        """Gaussian truncated to two standard deviations (resampled)."""
        out = self.normal(shape, std=std)
        bad = np.abs(out) > 2.0 * std
        while bad.any():
            out[bad] = self.normal((int(bad.sum()),), std=std)
            bad = np.abs(out) > 2.0 * std
        return out

    # integers and sequences ---------------------------------------------

    def randint(self, bound: int) -> int:
        """Integer in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.u64() % bound

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample(self, population: list, k: int) -> list:
        """k distinct elements, order-stable under the stream."""
        if k > len(population):
            raise ValueError(f"cannot sample {k} from {len(population)} items")
        pool = list(population)
        out = []
        for _ in range(k):
            out.append(pool.pop(self.randint(len(pool))))
        return out
