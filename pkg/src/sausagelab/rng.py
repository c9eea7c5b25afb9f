"""Counter-based splittable random number streams.

Every sampler in this package draws from an `RngStream`, a thin wrapper
around numpy's Philox bit generator keyed by (seed, stream_id).  Philox is
counter-based: the same key always regenerates the same sequence on every
platform, and distinct keys give statistically independent streams.  Work
is split across tasks by deriving child streams from task indices, never
by sharing a stream, so results are independent of worker count and
scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


def mix64(*words: int) -> int:
    """Hash integers into one 64-bit value (splitmix64 finalizer chain).

    Used to derive stream ids from structured task coordinates such as
    (experiment kind, t index, path index).  Pure-integer arithmetic, so
    the result is identical on every platform and Python version (unlike
    the builtin salted `hash`).
    """
    acc = 0x8A5CD789635D2DFF
    for w in words:
        acc = (acc + (int(w) & _MASK64) + 0x9E3779B97F4A7C15) & _MASK64
        z = acc
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        acc = (z ^ (z >> 31)) & _MASK64
    return acc


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by (seed, stream_id).

    `counter` offsets the Philox counter block; children created with
    `block()` are provably non-overlapping segments of the same keyed
    stream (each block has 2^66 draws of headroom), while `child()`
    derives an independently keyed stream by hashing extra indices.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64],
                       dtype=np.uint64)
        ctr = np.array([0, self.counter & _MASK64, 0, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=ctr, key=key))

    def child(self, *indices: int) -> "RngStream":
        """Independent stream derived by hashing indices into the id."""
        return RngStream(self.seed, mix64(self.stream_id, *indices))

    def block(self, i: int) -> "RngStream":
        """Disjoint counter block i of this stream (blocks start at 1)."""
        return RngStream(self.seed, self.stream_id, self.counter + int(i) + 1)
