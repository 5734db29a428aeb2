"""Periodic grid descriptor and the field arithmetic shared by every module.

Fields are plain numpy arrays laid out row-major with x1 outermost:

* scalar field: shape ``(n1, n2, n3)``
* vector field: shape ``(3, n1, n2, n3)``
* time series: shape ``(nt + 1, n1, n2, n3)``

so ``values.ravel()[(i * n2 + j) * n3 + k] == values[i, j, k]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Grid:
    """Regular periodic grid on [0, 2*pi)^3 with ``nt`` pseudo-time steps on [0, 1]."""

    n1: int
    n2: int
    n3: int
    nt: int = 4

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 8 or n % 2:
                raise DimensionError(f"{name}={n}: grid sizes must be even integers >= 8")
        if not isinstance(self.nt, (int, np.integer)) or self.nt < 1:
            raise DimensionError(f"nt={self.nt}: need at least one time step")

    @classmethod
    def cube(cls, n: int, nt: int = 4) -> "Grid":
        return cls(n, n, n, nt)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def vshape(self) -> tuple[int, int, int, int]:
        return (3, self.n1, self.n2, self.n3)

    @property
    def size(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def spacing(self) -> tuple[float, float, float]:
        return (TWO_PI / self.n1, TWO_PI / self.n2, TWO_PI / self.n3)

    @property
    def cell_volume(self) -> float:
        h1, h2, h3 = self.spacing
        return h1 * h2 * h3

    @property
    def dt(self) -> float:
        return 1.0 / self.nt

    def with_nt(self, nt: int) -> "Grid":
        return Grid(self.n1, self.n2, self.n3, nt)

    def coarse(self) -> "Grid":
        """Half resolution per axis (used by the two-level preconditioner)."""
        for n in self.shape:
            if n % 4:
                raise DimensionError(f"grid {self.shape} cannot be halved to an even grid")
        return Grid(self.n1 // 2, self.n2 // 2, self.n3 // 2, self.nt)

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.arange(n) * h for n, h in zip(self.shape, self.spacing))

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable node coordinates (x1, x2, x3)."""
        a1, a2, a3 = self.axes
        return a1[:, None, None], a2[None, :, None], a3[None, None, :]

    def mesh(self) -> np.ndarray:
        """Full node coordinates, shape ``(3, n1, n2, n3)``."""
        x1, x2, x3 = self.coords()
        return np.stack(np.broadcast_arrays(x1, x2, x3)).astype(float)

    def index(self, i: int, j: int, k: int) -> int:
        return (i * self.n2 + j) * self.n3 + k

    def unindex(self, flat: int) -> tuple[int, int, int]:
        ij, k = divmod(flat, self.n3)
        i, j = divmod(ij, self.n2)
        return i, j, k

    # field constructors -------------------------------------------------

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def vzeros(self) -> np.ndarray:
        return np.zeros(self.vshape)

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(x1, x2, x3)`` on the nodes."""
        return np.ascontiguousarray(np.broadcast_to(fn(*self.coords()), self.shape), dtype=float)

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if f.shape[-3:] != self.shape:
                raise DimensionError(f"field of shape {f.shape} does not live on grid {self.shape}")

    # arithmetic -----------------------------------------------------------

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        """L2 inner product by the rectangle rule (spectrally accurate for periodic data)."""
        if x.shape != y.shape:
            raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
        self.check(x)
        return float(np.vdot(x, y)) * self.cell_volume

    def norm(self, x: np.ndarray) -> float:
        return math.sqrt(max(self.inner(x, x), 0.0))

    def axpy(self, a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if x.shape != y.shape:
            raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
        self.check(x)
        return a * x + y


def inner(grid: Grid, x: np.ndarray, y: np.ndarray) -> float:
    return grid.inner(x, y)


def norm2(grid: Grid, x: np.ndarray) -> float:
    return grid.norm(x)


def axpy(grid: Grid, a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grid.axpy(a, x, y)


def grid_of(field: np.ndarray, nt: int = 4) -> Grid:
    n1, n2, n3 = field.shape[-3:]
    return Grid(n1, n2, n3, nt)
