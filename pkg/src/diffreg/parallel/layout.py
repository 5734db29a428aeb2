"""Slab decomposition of the grid among ``p`` workers."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import ConfigurationError


def _ranges(n: int, p: int) -> tuple[tuple[int, int], ...]:
    bounds = np.cumsum([0] + [n // p + (1 if r < n % p else 0) for r in range(p)])
    return tuple((int(bounds[r]), int(bounds[r + 1])) for r in range(p))


@dataclass(frozen=True)
class SlabLayout:
    """Contiguous x1 slabs in real space, contiguous x2 slabs in the spectral stage.

    Slab sizes differ by at most one plane.
    """

    shape: tuple[int, int, int]
    p: int

    def __post_init__(self):
        n1, n2, _ = self.shape
        if self.p < 1:
            raise ConfigurationError("worker count must be positive")
        if self.p > n1 or self.p > n2:
            raise ConfigurationError(f"p={self.p} leaves a worker without planes on grid {self.shape}")

    @cached_property
    def x1(self) -> tuple[tuple[int, int], ...]:
        return _ranges(self.shape[0], self.p)

    @cached_property
    def x2(self) -> tuple[tuple[int, int], ...]:
        return _ranges(self.shape[1], self.p)

    def width(self, rank: int) -> int:
        lo, hi = self.x1[rank]
        return hi - lo

    @property
    def min_width(self) -> int:
        return min(self.width(r) for r in range(self.p))

    @cached_property
    def _owner_table(self) -> np.ndarray:
        own = np.empty(self.shape[0], dtype=np.int64)
        for r, (lo, hi) in enumerate(self.x1):
            own[lo:hi] = r
        return own

    def owner(self, plane) -> np.ndarray:
        """Rank owning global x1-plane(s), taken modulo n1."""
        return self._owner_table[np.mod(plane, self.shape[0])]

    def split(self, f: np.ndarray, axis: int = 0) -> list[np.ndarray]:
        """Per-worker copies of the x1 (axis 0) or x2 (axis 1) slabs of ``f``."""
        rng = self.x1 if axis == 0 else self.x2
        idx = [slice(None)] * f.ndim
        out = []
        for lo, hi in rng:
            idx[axis] = slice(lo, hi)
            out.append(np.array(f[tuple(idx)]))
        return out
