"""Slab-parallel kernels: distributed FFT, FD and interpolation.

Each call scatters global arrays into per-worker slab copies, runs one
function per worker thread and gathers the slab results. Workers see only
their own slab plus what arrives through the :class:`Mailbox`; disabling
the mailbox therefore breaks every ``p > 1`` run.
"""
from __future__ import annotations

import math
import threading
import time
from collections import Counter
from contextlib import contextmanager

import numpy as np
import scipy.fft as sfft

from .. import fd, interp
from ..errors import ConfigurationError
from ..kernels import Kernels
from .layout import SlabLayout
from .mailbox import Mailbox, Runtime

PHASES = ("ghost_comm", "interp_comm", "scatter_comm", "interp_kernel", "scatter_mpi_buffer")
EPS = 2.220446049250313e-16


def snapped_floor(s: np.ndarray) -> np.ndarray:
    """floor() after the on-node snap used by the interpolation kernels."""
    r = np.floor(s + 0.5)
    snap = np.abs(s - r) <= 16 * EPS * np.maximum(1.0, np.abs(s))
    return np.floor(np.where(snap, r, s)).astype(np.int64)


def stencil_reach(degree: int) -> tuple[int, int]:
    """x1-plane offsets (lo, hi) from floor(s1) touched by value and derivative stencils."""
    return (-1, 1) if degree == 1 else (-2, 2)


class SlabKernels(Kernels):
    """Kernels over ``p`` slab workers; counters match the serial backend call for call."""

    def __init__(self, p: int, mailbox: Mailbox | None = None):
        super().__init__()
        self.p = p
        self.mailbox = mailbox if mailbox is not None else Mailbox(p)
        self.runtime = Runtime(p, self.mailbox)
        self.comm = self.mailbox.stats
        self._layouts: dict[tuple, SlabLayout] = {}
        self._lock = threading.Lock()

    def reset(self) -> None:
        self.counters.clear()
        self.timers.clear()
        self.mailbox.stats.clear()

    def close(self) -> None:
        self.runtime.close()

    def layout(self, shape) -> SlabLayout:
        shape = tuple(int(n) for n in shape)
        if shape not in self._layouts:
            self._layouts[shape] = SlabLayout(shape, self.p)
        return self._layouts[shape]

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            with self._lock:
                self.timers[f"phase:{name}"] += time.perf_counter() - t0

    # FFT -----------------------------------------------------------------

    def _fft(self, f):
        if self.p == 1:
            return super()._fft(f)
        lay = self.layout(f.shape)
        mb = self.mailbox

        def work(r, fr):
            part = sfft.rfft2(fr, axes=(1, 2))
            blocks = [np.ascontiguousarray(part[:, lo:hi]) for lo, hi in lay.x2]
            got = mb.alltoall(r, blocks, tag="fft", category="fft")
            return sfft.fft(np.concatenate(got, axis=0), axis=0)

        return np.concatenate(self.runtime.run(work, lay.split(f, 0)), axis=1)

    def _ifft(self, F, shape):
        if self.p == 1:
            return super()._ifft(F, shape)
        lay = self.layout(shape)
        mb = self.mailbox

        def work(r, Fr):
            part = sfft.ifft(Fr, axis=0)
            blocks = [np.ascontiguousarray(part[lo:hi]) for lo, hi in lay.x1]
            got = mb.alltoall(r, blocks, tag="ifft", category="fft")
            return sfft.irfft2(np.concatenate(got, axis=1), s=shape[1:], axes=(1, 2))

        return np.concatenate(self.runtime.run(work, lay.split(F, 1)), axis=0)

    # FD ------------------------------------------------------------------

    def _check_fd(self, shape) -> SlabLayout:
        lay = self.layout(shape)
        if lay.min_width < fd.HALF_WIDTH:
            raise ConfigurationError(f"slab width {lay.min_width} below the FD ghost width {fd.HALF_WIDTH}")
        fd._check(shape)
        return lay

    def _ghost_pad(self, r: int, fr: np.ndarray) -> np.ndarray:
        """Slab padded with 4 planes from each ring neighbour along x1."""
        w = fd.HALF_WIDTH
        left, right = (r - 1) % self.p, (r + 1) % self.p
        mb = self.mailbox
        with self.phase("ghost_comm"):
            mb.send(r, left, np.ascontiguousarray(fr[:w]), "fd_lo", "fd_ghost")
            mb.send(r, right, np.ascontiguousarray(fr[-w:]), "fd_hi", "fd_ghost")
            # receive in send order so p = 2 (left == right) keeps FIFO pairing
            hi_ghost = mb.recv(r, right, "fd_lo")
            lo_ghost = mb.recv(r, left, "fd_hi")
        return np.concatenate([lo_ghost, fr, hi_ghost], axis=0)

    def _gradient(self, f, grid):
        if self.p == 1:
            return super()._gradient(f, grid)
        lay = self._check_fd(f.shape)
        h = grid.spacing

        def work(r, fr):
            g0 = fd.diff_padded(self._ghost_pad(r, fr), 0, h[0])
            return np.stack([g0, fd.partial(fr, 1, h[1]), fd.partial(fr, 2, h[2])])

        return np.concatenate(self.runtime.run(work, lay.split(f, 0)), axis=1)

    def _divergence(self, v, grid):
        if self.p == 1:
            return super()._divergence(v, grid)
        lay = self._check_fd(v.shape[1:])
        h = grid.spacing

        def work(r, vr):
            out = fd.diff_padded(self._ghost_pad(r, vr[0]), 0, h[0])
            out += fd.partial(vr[1], 1, h[1])
            out += fd.partial(vr[2], 2, h[2])
            return out

        return np.concatenate(self.runtime.run(work, lay.split(v, 1)), axis=0)

    # IP ------------------------------------------------------------------

    def halo_width(self, shape, degree: int, u_max: float) -> int:
        halo = int(math.ceil(u_max)) + degree
        if halo > shape[0] // 2:
            raise ConfigurationError(
                f"interpolation halo {halo} exceeds half the x1 extent {shape[0]}; displacement too large")
        return halo

    def _query_split(self, lay: SlabLayout, m: int) -> list[tuple[int, int]]:
        """Queries issued by grid nodes follow the x1 slabs; other point sets are split evenly."""
        n1, n2, n3 = lay.shape
        if m == n1 * n2 * n3:
            plane = n2 * n3
            return [(lo * plane, hi * plane) for lo, hi in lay.x1]
        b = np.linspace(0, m, self.p + 1).astype(np.int64)
        return [(int(b[r]), int(b[r + 1])) for r in range(self.p)]

    def _extended(self, r: int, fr: np.ndarray, lay: SlabLayout, halo: int) -> np.ndarray:
        """Own slab plus ``halo`` planes on each side, fetched from their owners."""
        n1 = lay.shape[0]
        mb = self.mailbox

        def needed(rank):
            lo, hi = lay.x1[rank]
            return np.arange(lo - halo, hi + halo) % n1

        mine = needed(r)
        lo_r = lay.x1[r][0]
        with self.phase("ghost_comm"):
            for d in range(self.p):
                if d == r:
                    continue
                want = needed(d)
                sel = want[lay.owner(want) == r]
                if sel.size:
                    mb.send(r, d, np.ascontiguousarray(fr[sel - lo_r]), "ip_ghost", "ip_ghost")
            ext = np.empty((mine.size,) + fr.shape[1:])
            own = lay.owner(mine)
            for s in range(self.p):
                mask = own == s
                if not mask.any():
                    continue
                if s == r:
                    ext[mask] = fr[mine[mask] - lo_r]
                else:
                    ext[mask] = mb.recv(r, s, "ip_ghost")
        return ext

    def _classify(self, r: int, s1: np.ndarray, lay: SlabLayout, halo: int, degree: int):
        """Local-point mask and owning rank of every query of worker ``r``."""
        n1 = lay.shape[0]
        lo, hi = lay.x1[r]
        base = snapped_floor(s1)
        a, b = stencil_reach(degree)
        start = base + a - (lo - halo)
        span = (hi - lo) + 2 * halo
        local = (np.mod(start, n1) + (b - a)) < span
        return local, lay.owner(base)

    def _routed(self, fn, f, s, degree, u_max, ncomp):
        """Evaluate ``fn(ext, lo1, n1, pts) -> (ncomp, k)`` at ``s`` across the workers."""
        lay = self.layout(f.shape)
        n1 = lay.shape[0]
        halo = self.halo_width(f.shape, degree, u_max)
        parts = self._query_split(lay, s.shape[1])
        mb = self.mailbox

        def work(r, fr, sr):
            ext = self._extended(r, fr, lay, halo)
            lo1 = lay.x1[r][0] - halo
            local, owner = self._classify(r, sr[0], lay, halo, degree)
            with self.phase("scatter_mpi_buffer"):
                dest = np.where(local, r, owner)
                routes = [np.flatnonzero(dest == d) for d in range(self.p)]
                outbox = [np.ascontiguousarray(sr[:, idx]) for idx in routes]
            with self.phase("interp_comm"):
                inbox = mb.alltoall(r, outbox, tag="ip_route", category="ip_route")
            with self.phase("interp_kernel"):
                answers = [fn(ext, lo1, n1, pts) for pts in inbox]
            with self.phase("scatter_comm"):
                back = mb.alltoall(r, answers, tag="ip_return", category="ip_return")
            with self.phase("scatter_mpi_buffer"):
                out = np.empty((ncomp, sr.shape[1]))
                for d in range(self.p):
                    out[:, routes[d]] = back[d]
            return out

        res = self.runtime.run(work, lay.split(f, 0), [s[:, lo:hi] for lo, hi in parts])
        return np.concatenate(res, axis=1)

    def _interpolate(self, f, s, degree, u_max):
        if self.p == 1:
            return super()._interpolate(f, s, degree, u_max)

        def fn(ext, lo1, n1, pts):
            return interp.interpolate_index(ext, pts, degree, lo1, n1)[None]

        return self._routed(fn, f, s, degree, u_max, 1)[0]

    def _interpolate_gradient(self, f, s, degree, u_max):
        if self.p == 1:
            return super()._interpolate_gradient(f, s, degree, u_max)

        def fn(ext, lo1, n1, pts):
            return interp.interpolate_gradient_index(ext, pts, degree, lo1, n1)

        return self._routed(fn, f, s, degree, u_max, 3)

    def _scatter(self, vals, s, shape, degree, u_max):
        if self.p == 1:
            return super()._scatter(vals, s, shape, degree, u_max)
        lay = self.layout(shape)
        n1 = lay.shape[0]
        halo = self.halo_width(shape, degree, u_max)
        parts = self._query_split(lay, s.shape[1])
        mb = self.mailbox

        def work(r, sr, vr):
            lo, hi = lay.x1[r]
            lo1 = lo - halo
            ext = np.zeros((hi - lo + 2 * halo,) + tuple(shape[1:]))
            local, owner = self._classify(r, sr[0], lay, halo, degree)
            with self.phase("scatter_mpi_buffer"):
                dest = np.where(local, r, owner)
                routes = [np.flatnonzero(dest == d) for d in range(self.p)]
                outbox = [(np.ascontiguousarray(sr[:, idx]), np.ascontiguousarray(vr[idx])) for idx in routes]
            with self.phase("interp_comm"):
                inbox = mb.alltoall(r, outbox, tag="sc_route", category="ip_route")
            with self.phase("interp_kernel"):
                for pts, vals in inbox:
                    interp.scatter_index(vals, pts, ext.shape, degree, lo1, n1, out=ext)
            with self.phase("scatter_mpi_buffer"):
                planes = np.arange(lo1, hi + halo) % n1
                owners = lay.owner(planes)
                contrib = []
                for d in range(self.p):
                    dlo, dhi = lay.x1[d]
                    acc = np.zeros((dhi - dlo,) + tuple(shape[1:]))
                    for j in np.flatnonzero(owners == d):
                        acc[planes[j] - dlo] += ext[j]
                    contrib.append(acc)
            with self.phase("scatter_comm"):
                got = mb.alltoall(r, contrib, tag="sc_halo", category="scatter_halo")
            total = got[0].copy()
            for g in got[1:]:
                total += g
            return total

        res = self.runtime.run(work, [s[:, lo:hi] for lo, hi in parts],
                               [vals[lo:hi] for lo, hi in parts])
        return np.concatenate(res, axis=0)


def _with_kernels(p, mailbox, fn):
    k = SlabKernels(p, mailbox)
    try:
        return fn(k)
    finally:
        k.close()


def dist_fft_forward(f: np.ndarray, p: int, mailbox: Mailbox | None = None) -> np.ndarray:
    return _with_kernels(p, mailbox, lambda k: k.fft(f))


def dist_fft_inverse(F: np.ndarray, shape, p: int, mailbox: Mailbox | None = None) -> np.ndarray:
    return _with_kernels(p, mailbox, lambda k: k.ifft(F, shape))


def dist_fd_gradient(f: np.ndarray, grid, p: int, mailbox: Mailbox | None = None) -> np.ndarray:
    return _with_kernels(p, mailbox, lambda k: k.gradient(f, grid))


def dist_fd_divergence(v: np.ndarray, grid, p: int, mailbox: Mailbox | None = None) -> np.ndarray:
    return _with_kernels(p, mailbox, lambda k: k.divergence(v, grid))


def dist_interpolate(f: np.ndarray, q: np.ndarray, degree: int, p: int, mailbox: Mailbox | None = None,
                     ) -> np.ndarray:
    """Evaluate ``f`` at query points ``q`` (3, M) in radians with ``p`` workers."""
    from ..grid import grid_of

    s = interp.to_index_units(q, grid_of(f).spacing)
    return _with_kernels(p, mailbox, lambda k: k.interpolate(f, s, degree, 0.0))


def phase_breakdown(kernels: Kernels) -> dict[str, float]:
    """Summed worker time per communication/compute phase."""
    return {ph: float(kernels.timers.get(f"phase:{ph}", 0.0)) for ph in PHASES}


def comm_volume(kernels: Kernels) -> dict[str, int]:
    return dict(Counter({k: v for k, v in kernels.comm.items() if k.endswith("_bytes")}))


def dist_solve(m0: np.ndarray, m1: np.ndarray, config, p: int, grid=None, v0=None,
               mailbox: Mailbox | None = None):
    """Full registration (with the configured continuation) on ``p`` slab workers."""
    from ..solver import beta_continuation

    return _with_kernels(p, mailbox, lambda k: beta_continuation(m0, m1, config, grid, v0, k))
