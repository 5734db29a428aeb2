"""Eighth-order central finite differences on the periodic grid."""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DimensionError

HALF_WIDTH = 4


@lru_cache(maxsize=None)
def central_weights(half_width: int = HALF_WIDTH) -> tuple[Fraction, ...]:
    """Weights c_1..c_r of f'(0) ~ sum_k c_k (f(k) - f(-k)) for unit spacing.

    Solved exactly from the Taylor order conditions
    2 * sum_k c_k k^(2j-1) = [j == 1], j = 1..r.
    """
    r = half_width
    rows = [[Fraction(2 * k ** (2 * j - 1)) for k in range(1, r + 1)] for j in range(1, r + 1)]
    rhs = [Fraction(int(j == 1)) for j in range(1, r + 1)]
    # Gauss-Jordan elimination over the rationals
    for col in range(r):
        piv = next(i for i in range(col, r) if rows[i][col] != 0)
        rows[col], rows[piv] = rows[piv], rows[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        p = rows[col][col]
        rows[col] = [a / p for a in rows[col]]
        rhs[col] /= p
        for i in range(r):
            if i != col and rows[i][col] != 0:
                fac = rows[i][col]
                rows[i] = [a - fac * b for a, b in zip(rows[i], rows[col])]
                rhs[i] -= fac * rhs[col]
    return tuple(rhs)


def _weights_float() -> tuple[float, ...]:
    return tuple(float(c) for c in central_weights())


def _check(shape) -> None:
    if min(shape) < 2 * HALF_WIDTH + 1:
        raise DimensionError(f"grid {shape} too small for the 9-point stencil")


def diff_padded(fp: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Derivative along ``axis`` of an array padded with ``HALF_WIDTH`` ghost entries on both sides.

    This is the single arithmetic path used by the serial and the slab-parallel
    kernels, so both produce bitwise-identical results.
    """
    r = HALF_WIDTH
    n = fp.shape[axis] - 2 * r
    inv_h = 1.0 / h

    def sl(off):
        idx = [slice(None)] * fp.ndim
        idx[axis] = slice(r + off, r + off + n)
        return fp[tuple(idx)]

    out = np.zeros(sl(0).shape)
    for k, c in enumerate(_weights_float(), start=1):
        out += c * (sl(k) - sl(-k))
    return out * inv_h


def pad_periodic(f: np.ndarray, axis: int, width: int = HALF_WIDTH) -> np.ndarray:
    n = f.shape[axis]
    idx = np.arange(-width, n + width) % n
    return np.take(f, idx, axis=axis)


def partial(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """d f / d x_axis with periodic wrap (modular indexing)."""
    return diff_padded(pad_periodic(f, axis), axis, h)


def fd_gradient(f: np.ndarray, spacing) -> np.ndarray:
    _check(f.shape)
    return np.stack([partial(f, ax, spacing[ax]) for ax in range(3)])


def fd_divergence(v: np.ndarray, spacing) -> np.ndarray:
    _check(v.shape[-3:])
    out = partial(v[0], 0, spacing[0])
    out += partial(v[1], 1, spacing[1])
    out += partial(v[2], 2, spacing[2])
    return out
