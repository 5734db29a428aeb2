"""Tensor-product Lagrange interpolation (trilinear and tricubic) at scattered points.

Query points are given in radians and wrapped periodically. Internally they
are converted to fractional grid indices ``s = x / h``; a coordinate within a
few ulps of a node is snapped onto it so that on-node queries return the
stored value exactly.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .errors import InputError, ParameterError

DEGREES = (1, 3)


@numba.njit(cache=True, nogil=True, inline="always")
def _snap(s):
    r = math.floor(s + 0.5)
    if abs(s - r) <= 16 * 2.220446049250313e-16 * max(1.0, abs(s)):
        return r
    return s


@numba.njit(cache=True, nogil=True)
def _interp_kernel(f, lo1, n1, s1, s2, s3, degree, out):
    """Evaluate at fractional indices (s1, s2, s3).

    ``f`` holds global x1-planes lo1 .. lo1 + f.shape[0] - 1 (taken modulo n1);
    axes 2 and 3 are complete and periodic. The serial path passes lo1 = 0.
    """
    m1, n2, n3 = f.shape
    w1 = np.empty(4)
    w2 = np.empty(4)
    w3 = np.empty(4)
    i1 = np.empty(4, np.int64)
    i2 = np.empty(4, np.int64)
    i3 = np.empty(4, np.int64)
    npts = degree + 1
    off = 0 if degree == 1 else -1
    for p in range(s1.shape[0]):
        for ax in range(3):
            if ax == 0:
                s = _snap(s1[p])
            elif ax == 1:
                s = _snap(s2[p])
            else:
                s = _snap(s3[p])
            b = math.floor(s)
            t = s - b
            if degree == 1:
                wa = 1.0 - t
                wb = t
                wc = 0.0
                wd = 0.0
            else:
                tm1 = t - 1.0
                tm2 = t - 2.0
                tp1 = t + 1.0
                wa = -t * tm1 * tm2 / 6.0
                wb = tp1 * tm1 * tm2 / 2.0
                wc = -tp1 * t * tm2 / 2.0
                wd = tp1 * t * tm1 / 6.0
            ib = np.int64(b)
            if ax == 0:
                w1[0] = wa
                w1[1] = wb
                w1[2] = wc
                w1[3] = wd
                for a in range(npts):
                    i1[a] = (ib + off + a - lo1) % n1
            elif ax == 1:
                w2[0] = wa
                w2[1] = wb
                w2[2] = wc
                w2[3] = wd
                for a in range(npts):
                    i2[a] = (ib + off + a) % n2
            else:
                w3[0] = wa
                w3[1] = wb
                w3[2] = wc
                w3[3] = wd
                for a in range(npts):
                    i3[a] = (ib + off + a) % n3
        acc = 0.0
        for a in range(npts):
            ia = i1[a]
            acc_b = 0.0
            for b2 in range(npts):
                ib2 = i2[b2]
                acc_c = 0.0
                for c in range(npts):
                    acc_c += w3[c] * f[ia, ib2, i3[c]]
                acc_b += w2[b2] * acc_c
            acc += w1[a] * acc_b
        out[p] = acc


def check_degree(degree: int) -> None:
    if degree not in DEGREES:
        raise ParameterError(f"interpolation degree must be 1 or 3, got {degree}")


def to_index_units(q: np.ndarray, spacing) -> np.ndarray:
    """Radians -> fractional grid indices, shape (3, M)."""
    q = np.asarray(q, dtype=float).reshape(3, -1)
    if not np.all(np.isfinite(q)):
        raise InputError("query coordinates must be finite")
    return np.stack([q[i] / spacing[i] for i in range(3)])


def interpolate_index(f: np.ndarray, s: np.ndarray, degree: int = 3, lo1: int = 0, n1: int | None = None) -> np.ndarray:
    """Interpolate at fractional indices ``s`` (3, M). See :func:`_interp_kernel` for ``lo1``."""
    check_degree(degree)
    f = np.ascontiguousarray(f, dtype=float)
    out = np.empty(s.shape[1])
    _interp_kernel(f, lo1, f.shape[0] if n1 is None else n1,
                   np.ascontiguousarray(s[0]), np.ascontiguousarray(s[1]), np.ascontiguousarray(s[2]),
                   degree, out)
    return out


def interpolate(f: np.ndarray, q: np.ndarray, degree: int = 3) -> np.ndarray:
    """Evaluate the grid function ``f`` (n1, n2, n3) at query points ``q`` (3, M) in radians."""
    spacing = tuple(2.0 * math.pi / n for n in f.shape)
    return interpolate_index(f, to_index_units(q, spacing), degree)


@numba.njit(cache=True, nogil=True)
def _scatter_kernel(vals, lo1, n1, s1, s2, s3, degree, out):
    """Transpose of :func:`_interp_kernel`: out[stencil(p)] += w(p) * vals[p]."""
    m1, n2, n3 = out.shape
    w = np.empty((3, 4))
    idx = np.empty((3, 4), np.int64)
    npts = degree + 1
    off = 0 if degree == 1 else -1
    for p in range(s1.shape[0]):
        for ax in range(3):
            if ax == 0:
                s = _snap(s1[p])
            elif ax == 1:
                s = _snap(s2[p])
            else:
                s = _snap(s3[p])
            b = math.floor(s)
            t = s - b
            if degree == 1:
                w[ax, 0] = 1.0 - t
                w[ax, 1] = t
            else:
                tm1 = t - 1.0
                tm2 = t - 2.0
                tp1 = t + 1.0
                w[ax, 0] = -t * tm1 * tm2 / 6.0
                w[ax, 1] = tp1 * tm1 * tm2 / 2.0
                w[ax, 2] = -tp1 * t * tm2 / 2.0
                w[ax, 3] = tp1 * t * tm1 / 6.0
            ib = np.int64(b)
            nax = n1 if ax == 0 else (n2 if ax == 1 else n3)
            shift = lo1 if ax == 0 else 0
            for a in range(npts):
                idx[ax, a] = (ib + off + a - shift) % nax
        val = vals[p]
        for a in range(npts):
            va = w[0, a] * val
            for b2 in range(npts):
                vb = w[1, b2] * va
                for c in range(npts):
                    out[idx[0, a], idx[1, b2], idx[2, c]] += w[2, c] * vb


def scatter_index(vals: np.ndarray, s: np.ndarray, shape, degree: int = 3, lo1: int = 0,
                  n1: int | None = None, out: np.ndarray | None = None) -> np.ndarray:
    """Adjoint of :func:`interpolate_index` with respect to the Euclidean inner product."""
    check_degree(degree)
    if out is None:
        out = np.zeros(shape)
    _scatter_kernel(np.ascontiguousarray(vals, dtype=float).ravel(), lo1, shape[0] if n1 is None else n1,
                    np.ascontiguousarray(s[0]), np.ascontiguousarray(s[1]), np.ascontiguousarray(s[2]),
                    degree, out)
    return out


@numba.njit(cache=True, nogil=True, inline="always")
def _axis_weights(s, degree, wv, wd):
    """Value and derivative weights along one axis.

    Returns (base, start_v, n_v, start_d, n_d); stencil node a sits at index
    base + start + a. At an exact node the two one-sided polynomial derivatives
    are averaged, which gives the central 5-point (cubic) or 3-point (linear)
    difference.
    """
    s = _snap(s)
    b = math.floor(s)
    t = s - b
    ib = np.int64(b)
    if degree == 1:
        wv[0] = 1.0 - t
        wv[1] = t
        if t == 0.0:
            wd[0] = -0.5
            wd[1] = 0.0
            wd[2] = 0.5
            return ib, 0, 2, -1, 3
        wd[0] = -1.0
        wd[1] = 1.0
        return ib, 0, 2, 0, 2
    tm1 = t - 1.0
    tm2 = t - 2.0
    tp1 = t + 1.0
    wv[0] = -t * tm1 * tm2 / 6.0
    wv[1] = tp1 * tm1 * tm2 / 2.0
    wv[2] = -tp1 * t * tm2 / 2.0
    wv[3] = tp1 * t * tm1 / 6.0
    if t == 0.0:
        wd[0] = 1.0 / 12.0
        wd[1] = -2.0 / 3.0
        wd[2] = 0.0
        wd[3] = 2.0 / 3.0
        wd[4] = -1.0 / 12.0
        return ib, -1, 4, -2, 5
    t2 = t * t
    wd[0] = -(3.0 * t2 - 6.0 * t + 2.0) / 6.0
    wd[1] = (3.0 * t2 - 4.0 * t - 1.0) / 2.0
    wd[2] = -(3.0 * t2 - 2.0 * t - 2.0) / 2.0
    wd[3] = (3.0 * t2 - 1.0) / 6.0
    return ib, -1, 4, -1, 4


@numba.njit(cache=True, nogil=True)
def _interp_grad_kernel(f, lo1, n1, s1, s2, s3, degree, grad):
    """Gradient (w.r.t. fractional indices) of the interpolant at each query point."""
    m1, n2, n3 = f.shape
    wv = np.zeros((3, 5))
    wd = np.zeros((3, 5))
    iv = np.zeros((3, 5), np.int64)
    idd = np.zeros((3, 5), np.int64)
    nv = np.zeros(3, np.int64)
    nd = np.zeros(3, np.int64)
    for p in range(s1.shape[0]):
        for ax in range(3):
            if ax == 0:
                s = s1[p]
            elif ax == 1:
                s = s2[p]
            else:
                s = s3[p]
            ib, sv, cv, sd, cd = _axis_weights(s, degree, wv[ax], wd[ax])
            nax = n1 if ax == 0 else (n2 if ax == 1 else n3)
            shift = lo1 if ax == 0 else 0
            nv[ax] = cv
            nd[ax] = cd
            for a in range(cv):
                iv[ax, a] = (ib + sv + a - shift) % nax
            for a in range(cd):
                idd[ax, a] = (ib + sd + a - shift) % nax
        for dax in range(3):
            acc = 0.0
            n_a = nd[0] if dax == 0 else nv[0]
            n_b = nd[1] if dax == 1 else nv[1]
            n_c = nd[2] if dax == 2 else nv[2]
            for a in range(n_a):
                if dax == 0:
                    ia = idd[0, a]
                    wa = wd[0, a]
                else:
                    ia = iv[0, a]
                    wa = wv[0, a]
                acc_b = 0.0
                for b2 in range(n_b):
                    if dax == 1:
                        ib2 = idd[1, b2]
                        wb = wd[1, b2]
                    else:
                        ib2 = iv[1, b2]
                        wb = wv[1, b2]
                    acc_c = 0.0
                    for c in range(n_c):
                        if dax == 2:
                            acc_c += wd[2, c] * f[ia, ib2, idd[2, c]]
                        else:
                            acc_c += wv[2, c] * f[ia, ib2, iv[2, c]]
                    acc_b += wb * acc_c
                acc += wa * acc_b
            grad[dax, p] = acc


def interpolate_gradient_index(f: np.ndarray, s: np.ndarray, degree: int = 3, lo1: int = 0,
                               n1: int | None = None) -> np.ndarray:
    """d/ds of the interpolant of ``f`` at fractional indices ``s``; returns (3, M) per index unit."""
    check_degree(degree)
    f = np.ascontiguousarray(f, dtype=float)
    out = np.empty((3, s.shape[1]))
    _interp_grad_kernel(f, lo1, f.shape[0] if n1 is None else n1,
                        np.ascontiguousarray(s[0]), np.ascontiguousarray(s[1]), np.ascontiguousarray(s[2]),
                        degree, out)
    return out
