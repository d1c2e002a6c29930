"""Counter-based, splittable random streams.

Every random number is a pure function of ``(key, index, draw)``: a stream
key derived from the seed and a path of labels, an instance index, and a
draw number within that instance.  Nothing is consumed sequentially, so the
values drawn for instance ``i`` never depend on how many other instances
exist, and all draws vectorise over numpy index arrays.

The mixing function is the SplitMix64 finaliser; all arithmetic is on
``uint64`` with wrap-around, which makes the streams bit-identical on every
platform numpy supports.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def splitmix64(z: int) -> int:
    """Scalar SplitMix64 finaliser on a Python int (reference implementation)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _M1) & _MASK64
    z = ((z ^ (z >> 27)) * _M2) & _MASK64
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def label_to_int(label: int | str) -> int:
    """Map a stream label to a 64-bit word. Strings go through BLAKE2b."""
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    raise TypeError(f"stream labels must be int or str, got {type(label).__name__}")


def combine(key: int, word: int) -> int:
    """Fold one 64-bit word into a key (scalar)."""
    return splitmix64(key ^ ((splitmix64(word) + _GOLDEN) & _MASK64))


def combine_array(key: int | np.ndarray, words: np.ndarray) -> np.ndarray:
    """Vectorised :func:`combine`; broadcasts ``key`` against ``words``."""
    key = np.asarray(key, dtype=np.uint64)
    words = np.asarray(words).astype(np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(key ^ (_mix64(words) + np.uint64(_GOLDEN)))


class CounterRNG:
    """A named random stream.

    >>> rng = CounterRNG.from_seed(7, "olive-layer")
    >>> u = rng.uniform(np.arange(4), draw=0)
    >>> bool(((0 <= u) & (u < 1)).all())
    True
    """

    __slots__ = ("key",)

    def __init__(self, key: int):
        self.key = int(key) & _MASK64

    @classmethod
    def from_seed(cls, seed: int, *labels: int | str) -> "CounterRNG":
        return cls(combine(0x5EED, label_to_int(seed))).child(*labels)

    def child(self, *labels: int | str) -> "CounterRNG":
        key = self.key
        for label in labels:
            key = combine(key, label_to_int(label))
        return CounterRNG(key)

    def child_seed(self, *labels: int | str) -> int:
        """A 63-bit integer seed for a sub-stream, usable as a config seed."""
        return self.child(*labels).key >> 1

    def bits(self, index, draw: int = 0) -> np.ndarray:
        """Raw 64-bit words for each ``index`` at draw number ``draw``."""
        per_instance = combine_array(self.key, np.asarray(index))
        return combine_array(per_instance, np.asarray(draw))

    def uniform(self, index, draw: int = 0, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform floats in ``[low, high)`` with 53 random bits each."""
        u = (self.bits(index, draw) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        if low == 0.0 and high == 1.0:
            return u
        return low + (high - low) * u

    def integers(self, index, draw: int, n: int) -> np.ndarray:
        """Integers in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.bits(index, draw) % np.uint64(n)).astype(np.int64)

    def random(self, count: int, draw: int = 0) -> np.ndarray:
        """``count`` uniforms for indices ``0..count-1``."""
        return self.uniform(np.arange(count, dtype=np.uint64), draw)

    def __repr__(self) -> str:
        return f"CounterRNG(key=0x{self.key:016x})"
