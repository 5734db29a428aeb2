"""Counted compute kernels (FFT, FD, IP) behind one interface.

The solver never calls numpy/scipy transforms, stencils or interpolation
directly; it goes through a :class:`Kernels` instance. The serial backend lives
here, the slab-parallel backend in :mod:`diffreg.parallel`. Both count kernel
invocations identically so reports can be compared across worker counts.
"""
from __future__ import annotations

import time
from collections import Counter
from contextlib import contextmanager

import numpy as np

from . import fd, interp, spectral
from .grid import Grid


class Kernels:
    """Serial backend.

    Counter keys: ``fft`` (one per scalar forward or inverse transform;
    ``fft_points`` sums their real-space sizes),
    ``fd`` (one per scalar gradient or divergence), ``ip`` (one per scalar
    field interpolated at a point set), ``ip_grad`` (interpolant gradient),
    ``ip_adj`` (transposed interpolation), plus per-equation solve counts
    added by the transport module.
    """

    p = 1

    def __init__(self):
        self.counters: Counter = Counter()
        self.timers: Counter = Counter()
        self.comm: Counter = Counter()

    @contextmanager
    def timed(self, key: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timers[key] += time.perf_counter() - t0

    def reset(self) -> None:
        self.counters.clear()
        self.timers.clear()
        self.comm.clear()

    # FFT -----------------------------------------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        self.counters["fft"] += 1
        self.counters["fft_points"] += f.size
        with self.timed("fft"):
            return self._fft(f)

    def ifft(self, F: np.ndarray, shape) -> np.ndarray:
        self.counters["fft"] += 1
        self.counters["fft_points"] += int(np.prod(shape))
        with self.timed("fft"):
            return self._ifft(F, tuple(shape))

    def _fft(self, f):
        return spectral.fft_forward(f)

    def _ifft(self, F, shape):
        return spectral.fft_inverse(F, shape)

    def apply_symbol(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(f) * symbol, f.shape)

    def apply_symbol_vec(self, v: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return np.stack([self.apply_symbol(c, symbol) for c in v])

    def regop(self, grid: Grid, v: np.ndarray, beta: float, zero_mode: float = 1.0) -> np.ndarray:
        spectral._check_beta(beta)
        return self.apply_symbol_vec(v, beta * spectral.laplacian_symbol(grid.shape, zero_mode))

    def inv_regop(self, grid: Grid, w: np.ndarray, beta: float) -> np.ndarray:
        spectral._check_beta(beta)
        return self.apply_symbol_vec(w, 1.0 / (beta * spectral.laplacian_symbol(grid.shape)))

    def reg_seminorm(self, grid: Grid, v: np.ndarray) -> float:
        ksq = spectral.laplacian_symbol(grid.shape, zero_mode=0.0)
        total = 0.0
        for c in v:
            F = self.fft(c)
            total += spectral._half_space_sum(ksq * np.abs(F) ** 2, grid.n3)
        return total * grid.cell_volume / grid.size

    def leray(self, grid: Grid, v: np.ndarray) -> np.ndarray:
        k, inv = spectral.leray_symbols(grid.shape)
        V = [self.fft(c) for c in v]
        kdotv = (k[0] * V[0] + k[1] * V[1] + k[2] * V[2]) * inv
        return np.stack([self.ifft(V[i] - k[i] * kdotv, grid.shape) for i in range(3)])

    def restrict(self, f: np.ndarray) -> np.ndarray:
        fine = f.shape[-3:]
        spectral._check_halvable(fine)
        coarse = tuple(n // 2 for n in fine)
        return self.ifft(spectral.restrict_spectrum(self.fft(f), fine, coarse), coarse)

    def prolong(self, f: np.ndarray) -> np.ndarray:
        coarse = f.shape[-3:]
        fine = tuple(2 * n for n in coarse)
        return self.ifft(spectral.prolong_spectrum(self.fft(f), coarse, fine), fine)

    def prolong_plus_high_pass(self, coarse: np.ndarray, fine: np.ndarray) -> np.ndarray:
        """prolong(coarse) + high_pass(fine), sharing one inverse transform."""
        cshape, fshape = coarse.shape, fine.shape
        spec = spectral.prolong_spectrum(self.fft(coarse), cshape, fshape)
        spec += spectral.high_pass_spectrum(self.fft(fine), fshape)
        return self.ifft(spec, fshape)

    # FD ------------------------------------------------------------------

    def gradient(self, f: np.ndarray, grid: Grid) -> np.ndarray:
        self.counters["fd"] += 1
        with self.timed("fd"):
            return self._gradient(f, grid)

    def divergence(self, v: np.ndarray, grid: Grid) -> np.ndarray:
        self.counters["fd"] += 1
        with self.timed("fd"):
            return self._divergence(v, grid)

    def _gradient(self, f, grid):
        return fd.fd_gradient(f, grid.spacing)

    def _divergence(self, v, grid):
        return fd.fd_divergence(v, grid.spacing)

    # IP ------------------------------------------------------------------

    def interpolate(self, f: np.ndarray, s: np.ndarray, degree: int, u_max: float = 0.0) -> np.ndarray:
        """Interpolate a scalar field at fractional indices ``s`` (3, M); returns (M,).

        ``u_max`` (x1 index units) bounds the distance of each query from the
        grid node that issued it; the parallel backend sizes its halo with it.
        """
        self.counters["ip"] += 1
        with self.timed("ip"):
            return self._interpolate(f, s, degree, u_max)

    def interpolate_gradient(self, f: np.ndarray, s: np.ndarray, degree: int, u_max: float = 0.0) -> np.ndarray:
        """Gradient of the interpolant (per index unit) at ``s``; returns (3, M)."""
        self.counters["ip_grad"] += 1
        with self.timed("ip"):
            return self._interpolate_gradient(f, s, degree, u_max)

    def scatter(self, vals: np.ndarray, s: np.ndarray, shape, degree: int, u_max: float = 0.0) -> np.ndarray:
        """Transpose of :meth:`interpolate` for queries issued by the grid nodes; returns ``shape``."""
        self.counters["ip_adj"] += 1
        with self.timed("ip"):
            return self._scatter(np.ravel(vals), s, tuple(shape), degree, u_max)

    def _interpolate(self, f, s, degree, u_max):
        return interp.interpolate_index(f, s, degree)

    def _interpolate_gradient(self, f, s, degree, u_max):
        return interp.interpolate_gradient_index(f, s, degree)

    def _scatter(self, vals, s, shape, degree, u_max):
        return interp.scatter_index(vals, s, shape, degree)

