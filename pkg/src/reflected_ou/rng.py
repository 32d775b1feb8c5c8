"""Reproducible random streams.

Every trajectory owns a Philox stream keyed by ``(seed, tag, path)``. Draws are
consumed strictly in step order (one block of ``dim`` normals per step), so the
noise seen by a path depends only on its key and the step index, never on how
paths are batched or scheduled across workers.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a key below the global seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class PathNoise:
    """Standard normal increments for a set of paths, drawn in step order."""

    def __init__(self, seed: int, path_ids: Sequence[int], dim: int, tag: int = 0):
        self._gens = [stream(seed, tag, int(p)) for p in path_ids]
        self.dim = int(dim)

    @property
    def paths(self) -> int:
        return len(self._gens)

    def next_block(self, steps: int) -> np.ndarray:
        """Array of shape (steps, paths, dim)."""
        out = np.empty((steps, len(self._gens), self.dim))
        for j, gen in enumerate(self._gens):
            out[:, j, :] = gen.standard_normal((steps, self.dim))
        return out


def block_steps(paths: int, dim: int, budget: int = 4_000_000) -> int:
    """Number of steps to draw per block so a block holds about ``budget`` doubles."""
    return max(1, budget // max(1, paths * dim))
