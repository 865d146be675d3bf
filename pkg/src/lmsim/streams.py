"""Seeded, splittable random streams.

Every stochastic operation in the simulator draws from its own labelled
stream so that adding draws in one module never shifts the values another
module sees.  A stream is identified by ``(seed, label)``; children are
derived by extending the label path, e.g. ``root.derive("demand")`` has the
label ``"root/demand"``.

The label is hashed with SHA-256 (never the builtin ``hash``, which is salted
per process) and fed to numpy's ``SeedSequence`` together with the seed.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = np.uint64


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]


class RandomStream:
    """A single-owner generator keyed by ``(seed, label)``.

    Use :meth:`derive` to hand an independent child stream to another
    consumer instead of sharing one instance.
    """

    __slots__ = ("seed", "label", "_gen")

    def __init__(self, seed: int, label: str = "root") -> None:
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not label:
            raise ValueError("stream label must be nonempty")
        self.seed = int(seed)
        self.label = label
        seed_words = [self.seed & 0xFFFFFFFF, self.seed >> 32]
        ss = np.random.SeedSequence(seed_words + _label_words(label))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, label={self.label!r})"

    def derive(self, child_label: str) -> "RandomStream":
        return derive_stream(self, child_label)

    @property
    def generator(self) -> np.random.Generator:
        """The underlying numpy generator (for vectorised draws)."""
        return self._gen

    def next_u64(self) -> int:
        return int(self._gen.integers(0, 2**64, dtype=_U64, endpoint=False))

    def u64s(self, n: int) -> np.ndarray:
        return self._gen.integers(0, 2**64, size=n, dtype=_U64, endpoint=False)

    def random(self, size=None):
        return self._gen.random(size)

    def poisson(self, lam, size=None):
        return self._gen.poisson(lam, size)

    def beta(self, a, b, size=None):
        return self._gen.beta(a, b, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def categorical(self, weights, size: int) -> np.ndarray:
        """Draw ``size`` indices with probability proportional to ``weights``."""
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0:
            raise ValueError("categorical weights must have positive mass")
        cdf = np.cumsum(w / total)
        cdf[-1] = 1.0
        u = self._gen.random(size)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def derive_stream(root: RandomStream, label: str) -> RandomStream:
    """Child stream of ``root``; deterministic in the root's seed and label path."""
    if not label:
        raise ValueError("derive label must be nonempty")
    return RandomStream(root.seed, f"{root.label}/{label}")
