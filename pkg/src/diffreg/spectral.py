"""Real-to-complex transforms and the diagonal spectral operators.

Coefficients use the half-space layout of ``scipy.fft.rfftn``: shape
``(n1, n2, n3 // 2 + 1)``, unnormalized forward transform and a ``1/N``
inverse.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import DimensionError, ParameterError
from .grid import Grid


def fft_forward(f: np.ndarray) -> np.ndarray:
    return sfft.rfftn(f, axes=(-3, -2, -1))


def fft_inverse(F: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    return sfft.irfftn(F, s=shape, axes=(-3, -2, -1))


def spectral_shape(shape: tuple[int, int, int]) -> tuple[int, int, int]:
    n1, n2, n3 = shape
    return (n1, n2, n3 // 2 + 1)


@lru_cache(maxsize=32)
def wavenumbers(shape: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer wavenumbers, broadcastable against the half-space layout."""
    n1, n2, n3 = shape
    k1 = np.fft.fftfreq(n1, 1.0 / n1)[:, None, None]
    k2 = np.fft.fftfreq(n2, 1.0 / n2)[None, :, None]
    k3 = np.fft.rfftfreq(n3, 1.0 / n3)[None, None, :]
    return k1, k2, k3


@lru_cache(maxsize=32)
def derivative_wavenumbers(shape: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Wavenumbers for odd (first-derivative) symbols: Nyquist entries set to 0.

    The Nyquist coefficient of a real field is its own Hermitian partner, so an
    odd symbol there cannot map real fields to real fields.
    """
    out = []
    for ax, k in enumerate(wavenumbers(shape)):
        k = k.copy()
        n = shape[ax]
        k[np.abs(k) == n // 2] = 0.0
        k.setflags(write=False)
        out.append(k)
    return tuple(out)


def leray_symbols(shape) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    """Derivative wavenumbers and 1/|k|^2 over them (0 where |k| = 0)."""
    k = derivative_wavenumbers(tuple(shape))
    ksq = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    inv = np.zeros_like(ksq)
    np.divide(1.0, ksq, out=inv, where=ksq > 0)
    return k, inv


@lru_cache(maxsize=32)
def _ksq(shape):
    k1, k2, k3 = wavenumbers(shape)
    ksq = k1**2 + k2**2 + k3**2
    ksq.setflags(write=False)
    return ksq


def laplacian_symbol(shape, zero_mode: float = 1.0) -> np.ndarray:
    """|k|^2 with the k = 0 entry replaced by ``zero_mode``.

    ``zero_mode=1`` keeps beta*A and its inverse SPD for preconditioning;
    ``zero_mode=0`` is the true H1-seminorm symbol used in the objective.
    """
    ksq = _ksq(tuple(shape)).copy()
    ksq[0, 0, 0] = zero_mode
    return ksq


def apply_symbol(f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Diagonal spectral operator on a scalar field (two FFTs and a Hadamard product)."""
    return fft_inverse(fft_forward(f) * symbol, f.shape[-3:])


def _check_beta(beta: float) -> None:
    if not beta > 0:
        raise ParameterError(f"regularization parameter must be positive, got {beta}")


def apply_regop(grid: Grid, v: np.ndarray, beta: float) -> np.ndarray:
    """beta * A v, A the vector Laplacian (-Delta per component, 1 on the mean)."""
    _check_beta(beta)
    grid.check(v)
    sym = beta * laplacian_symbol(grid.shape)
    return np.stack([apply_symbol(c, sym) for c in v])


def apply_inv_regop(grid: Grid, w: np.ndarray, beta: float) -> np.ndarray:
    _check_beta(beta)
    grid.check(w)
    sym = 1.0 / (beta * laplacian_symbol(grid.shape))
    return np.stack([apply_symbol(c, sym) for c in w])


def reg_seminorm(grid: Grid, v: np.ndarray) -> float:
    """sum_i <grad v_i, grad v_i>, evaluated spectrally (constants cost nothing)."""
    ksq = laplacian_symbol(grid.shape, zero_mode=0.0)
    total = 0.0
    for c in v:
        F = fft_forward(c)
        total += _half_space_sum(ksq * np.abs(F) ** 2, grid.n3)
    return total * grid.cell_volume / grid.size


def _half_space_sum(a: np.ndarray, n3: int) -> float:
    """Sum over the full spectrum of a Hermitian-symmetric quantity stored in half space."""
    w = np.full(a.shape[-1], 2.0)
    w[0] = 1.0
    if n3 % 2 == 0:
        w[-1] = 1.0
    return float(np.sum(a * w))


def spectral_inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    """Parseval counterpart of :meth:`Grid.inner` for scalar fields."""
    F, G = fft_forward(f), fft_forward(g)
    return _half_space_sum((F * G.conj()).real, grid.n3) * grid.cell_volume / grid.size


def leray_project(grid: Grid, v: np.ndarray) -> np.ndarray:
    """v - grad Laplace^{-1} div v; the mean (k = 0) is left untouched."""
    grid.check(v)
    k, inv = leray_symbols(grid.shape)
    V = [fft_forward(c) for c in v]
    kdotv = k[0] * V[0] + k[1] * V[1] + k[2] * V[2]
    return np.stack([fft_inverse(V[i] - k[i] * kdotv * inv, grid.shape) for i in range(3)])


def spectral_divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    k = derivative_wavenumbers(grid.shape)
    D = sum(1j * k[i] * fft_forward(v[i]) for i in range(3))
    return fft_inverse(D, grid.shape)


# restriction / prolongation ------------------------------------------------


def _check_halvable(shape) -> None:
    for n in shape:
        if n % 2:
            raise DimensionError(f"grid {shape} has an odd size; cannot restrict")


def _band(n_fine: int, n_coarse: int, half: bool):
    """Index pairs (fine, coarse) of the modes kept by restriction along one axis.

    Modes with |k| < n_coarse / 2 survive. The coarse Nyquist mode is dropped so
    that restriction and prolongation stay exact adjoints and their composition
    an orthogonal projector.
    """
    m = n_coarse // 2
    lo = np.arange(0, m)
    if half:
        return lo, lo
    hi = np.arange(-m + 1, 0)
    return np.concatenate([lo, n_fine + hi]), np.concatenate([lo, n_coarse + hi])


def _band_maps(fine_shape, coarse_shape):
    maps = [_band(nf, nc, half=(ax == 2)) for ax, (nf, nc) in enumerate(zip(fine_shape, coarse_shape))]
    fine_ix = np.ix_(*[m[0] for m in maps])
    coarse_ix = np.ix_(*[m[1] for m in maps])
    return fine_ix, coarse_ix


def restrict_spectrum(F: np.ndarray, fine_shape, coarse_shape) -> np.ndarray:
    fine_ix, coarse_ix = _band_maps(fine_shape, coarse_shape)
    out = np.zeros(spectral_shape(coarse_shape), dtype=complex)
    out[coarse_ix] = F[fine_ix] * (np.prod(coarse_shape) / np.prod(fine_shape))
    return out


def prolong_spectrum(C: np.ndarray, coarse_shape, fine_shape) -> np.ndarray:
    fine_ix, coarse_ix = _band_maps(fine_shape, coarse_shape)
    out = np.zeros(spectral_shape(fine_shape), dtype=complex)
    out[fine_ix] = C[coarse_ix] * (np.prod(fine_shape) / np.prod(coarse_shape))
    return out


def high_pass_spectrum(F: np.ndarray, fine_shape) -> np.ndarray:
    coarse_shape = tuple(n // 2 for n in fine_shape)
    fine_ix, _ = _band_maps(fine_shape, coarse_shape)
    out = F.copy()
    out[fine_ix] = 0.0
    return out


def restrict(f: np.ndarray) -> np.ndarray:
    """Spectral truncation to half resolution; low modes keep their amplitude."""
    fine = f.shape[-3:]
    _check_halvable(fine)
    coarse = tuple(n // 2 for n in fine)
    return fft_inverse(restrict_spectrum(fft_forward(f), fine, coarse), coarse)


def prolong(f: np.ndarray) -> np.ndarray:
    """Zero-padding to double resolution."""
    coarse = f.shape[-3:]
    fine = tuple(2 * n for n in coarse)
    return fft_inverse(prolong_spectrum(fft_forward(f), coarse, fine), fine)


def high_pass(f: np.ndarray) -> np.ndarray:
    """Complement of prolong(restrict(f)): keeps exactly the modes restriction drops."""
    fine = f.shape[-3:]
    _check_halvable(fine)
    return fft_inverse(high_pass_spectrum(fft_forward(f), fine), fine)
