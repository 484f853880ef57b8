"""Deterministic named random streams.

Every source of randomness in the simulator is a `Stream` keyed by a stable
64-bit hash of string/int labels, backed by the counter-based Philox engine.
Higher-level draws (normal, gamma, Dirichlet, shuffles) are built on raw
uniforms only, so results do not depend on numpy's internal distribution
algorithms and are reproducible across platforms and schedules.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np


def hash64(*labels) -> int:
    """Stable 64-bit hash of a sequence of ints/strings (order-sensitive)."""
    h = hashlib.sha256()
    for part in labels:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little")


class Stream:
    """A named deterministic random stream."""

    def __init__(self, *labels):
        self.key = hash64(*labels)
        self._gen = np.random.Generator(np.random.Philox(key=self.key))

    # raw uniforms are the only primitive taken from the engine
    def uniform(self, n: int) -> np.ndarray:
        """n uniforms in [0, 1)."""
        return self._gen.random(n)

    def normal(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller on paired uniforms."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1], keeps log finite
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n]

    def gamma(self, shape: float) -> float:
        """One Gamma(shape, 1) draw via Marsaglia-Tsang squeeze."""
        if shape <= 0.0:
            raise ValueError("gamma shape must be positive")
        if shape < 1.0:
            u = 1.0 - float(self.uniform(1)[0])
            return self.gamma(shape + 1.0) * u ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = float(self.normal(1)[0])
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = float(self.uniform(1)[0])
            if u < 1.0 - 0.0331 * x ** 4:
                return d * v
            if u > 0.0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return d * v

    def dirichlet(self, alpha: float, size: int) -> np.ndarray:
        """Symmetric Dirichlet(alpha) over `size` coordinates."""
        g = np.array([self.gamma(alpha) for _ in range(size)])
        total = g.sum()
        if total <= 0.0:  # astronomically unlikely underflow at tiny alpha
            g = np.full(size, 1.0 / size)
            total = 1.0
        return g / total

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        idx = np.arange(n)
        u = self.uniform(max(n - 1, 0))
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            j = min(j, i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), in draw order."""
        if not 0 <= k <= n:
            raise ValueError("k out of range")
        idx = np.arange(n)
        u = self.uniform(k)
        for i in range(k):
            j = i + min(int(u[i] * (n - i)), n - i - 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k].copy()
