"""Deterministic innovation streams.

Innovation ``eps_j`` for any integer ``j`` is a fixed function of
``(seed, key, j)``: indices are grouped into blocks of ``BLOCK`` and every
block owns a ``SeedSequence`` child. Two consumers that ask for the same
index therefore see the same draw, whatever window they request and
whichever thread does the work.
"""

from __future__ import annotations

import numpy as np

BLOCK = 4096
_AUX = 0


def _zigzag(b):
    return 2 * b if b >= 0 else -2 * b - 1


class InnovationStream:
    def __init__(self, seed, key=()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)

    def __repr__(self):
        return f"InnovationStream(seed={self.seed}, key={self.key})"

    def child(self, *key):
        return InnovationStream(self.seed, self.key + tuple(int(k) for k in key))

    def _generator(self, suffix):
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key + suffix)
        return np.random.Generator(np.random.PCG64(ss))

    def uniforms(self, lo, hi, k):
        """Uniforms for indices ``lo..hi`` (inclusive), shape ``(hi-lo+1, k)``."""
        if hi < lo:
            return np.empty((0, k))
        b0, b1 = lo // BLOCK, hi // BLOCK
        parts = []
        for b in range(b0, b1 + 1):
            u = self._generator((_zigzag(b) + 1,)).random((BLOCK, k))
            start = lo - b * BLOCK if b == b0 else 0
            stop = hi - b * BLOCK + 1 if b == b1 else BLOCK
            parts.append(u[start:stop])
        out = parts[0] if len(parts) == 1 else np.concatenate(parts)
        return _open_unit(out)

    def innovations(self, model, lo, hi):
        """``eps_j`` for ``j = lo..hi`` drawn from ``model``."""
        return model.from_uniforms(self.uniforms(lo, hi, model.n_uniforms))

    def auxiliary(self, model, tag, size=1):
        """Draws from a side stream that never collides with indexed ones."""
        u = self._generator((_AUX, int(tag))).random((size, model.n_uniforms))
        return model.from_uniforms(_open_unit(u))


def _open_unit(u):
    # midpoints of a 2**-52 grid: exactly representable and strictly inside (0, 1)
    return (np.floor(u * 2.0**52) + 0.5) * 2.0**-52


def uniforms_open(rng, shape):
    return _open_unit(as_generator(rng).random(shape))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
