import numpy as np
import pytest

from diffreg import precond, spectral
from diffreg.errors import ParameterError
from diffreg.grid import Grid
from diffreg.kernels import Kernels
from diffreg.krylov import pcg
from diffreg.studies import convergence_study


def band_limited(grid, rng, kmax):
    k1, k2, k3 = spectral.wavenumbers(grid.shape)
    mask = (np.abs(k1) <= kmax) & (np.abs(k2) <= kmax) & (k3 <= kmax)
    out = []
    for _ in range(3):
        F = np.zeros(spectral.spectral_shape(grid.shape), complex)
        F[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
        out.append(spectral.fft_inverse(F, grid.shape))
    return np.stack(out)


def test_beta_floor():
    assert precond.beta_pc(1e-3) == 5e-2
    assert precond.beta_pc(0.3) == 0.3


def test_inva_roundtrip_and_constants(grid16, rng):
    k = Kernels()
    s = rng.standard_normal(grid16.vshape)
    pc = precond.InvA(k, grid16, 0.2)
    assert np.abs(pc(k.regop(grid16, s, 0.2)) - s).max() < 1e-10
    c = np.ones(grid16.vshape)
    assert np.allclose(pc(c), c / 0.2, atol=1e-12)


def test_h0_reduces_to_regop_without_reference_gradient(grid16, rng):
    k = Kernels()
    s = rng.standard_normal(grid16.vshape)
    out = precond.h0_matvec(k, grid16, s, grid16.vzeros(), 0.1)
    assert np.array_equal(out, k.regop(grid16, s, 0.1))
    assert precond.h0_zero_mode(grid16, grid16.vzeros()) == 1.0


def test_h0_dense_oracle(rng):
    g = Grid.cube(8)
    beta = 0.3
    grad_ref = rng.standard_normal(g.vshape)
    # A assembled from complex DFTs (numpy), independent of the rfft path
    n = g.size
    ksq = spectral.laplacian_symbol(g.shape)
    k1, k2, k3 = np.meshgrid(*(np.fft.fftfreq(8, 1 / 8),) * 3, indexing="ij")
    full = k1**2 + k2**2 + k3**2
    full[0, 0, 0] = 1.0
    assert np.allclose(full[:, :, :5], ksq)
    A = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        A[:, j] = np.fft.ifftn(np.fft.fftn(e.reshape(g.shape)) * full).real.ravel()
    G = grad_ref.reshape(3, n)
    H = np.kron(np.eye(3), beta * A)
    for i in range(3):
        for j in range(3):
            H[i * n:(i + 1) * n, j * n:(j + 1) * n] += np.diag(G[i] * G[j])
    s = rng.standard_normal(g.vshape)
    mine = precond.h0_matvec(Kernels(), g, s, grad_ref, beta)
    assert np.abs(mine.ravel() - H @ s.ravel()).max() <= 1e-10
    q = rng.standard_normal(g.vshape)
    data = grad_ref * np.einsum("i...,i...->...", grad_ref, s)[None]
    assert g.inner(data, s) == pytest.approx(g.norm(np.einsum("i...,i...->...", grad_ref, s)) ** 2, rel=1e-12)
    dq = grad_ref * np.einsum("i...,i...->...", grad_ref, q)[None]
    assert g.inner(data, q) == pytest.approx(g.inner(s, dq), rel=1e-12)


@pytest.mark.parametrize("cls", [precond.InvH0, precond.TwoLevelInvH0])
def test_constant_reference_reduces_to_inva(grid32, rng, cls):
    k = Kernels()
    r = rng.standard_normal(grid32.vshape)
    pc = cls(k, grid32, grid32.vzeros(), 0.2, eps_k=0.5)
    want = k.inv_regop(grid32, r, 0.2)
    out = pc(r)
    assert grid32.norm(out - want) <= 1e-3 * grid32.norm(want)
    assert max(pc.stats.inner_iterations) <= 1


def test_two_level_on_coarse_modes(grid32, rng):
    k = Kernels()
    r = band_limited(grid32, rng, 5)
    pc = precond.TwoLevelInvH0(k, grid32, grid32.vzeros(), 0.1, eps_k=0.5)
    want = k.inv_regop(grid32, r, 0.1)
    assert grid32.norm(pc(r) - want) <= 1e-3 * grid32.norm(want)


def test_inner_solve_uses_floor(grid16, syn16):
    k = Kernels()
    grad_ref = k.gradient(syn16[1], grid16)
    pc = precond.InvH0(k, grid16, grad_ref, 1e-3, eps_k=0.1, eps_h0=1e-3)
    assert pc.beta_pc == 5e-2
    assert pc.tol == pytest.approx(1e-4)


@pytest.mark.parametrize("cls", [precond.InvH0, precond.TwoLevelInvH0])
def test_approximate_symmetry(grid32, syn32, rng, cls):
    k = Kernels()
    grad_ref = k.gradient(syn32[1], grid32)
    eps_k, eps_h0 = 0.5, 1e-3
    pc = cls(k, grid32, grad_ref, 0.1, eps_k=eps_k, eps_h0=eps_h0)
    r, q = rng.standard_normal((2,) + grid32.vshape)
    gap = abs(grid32.inner(pc(r), q) - grid32.inner(r, pc(q)))
    assert gap <= 5 * eps_h0 * eps_k * grid32.norm(r) * grid32.norm(q)


def test_unknown_name_and_bad_tolerance(grid16):
    with pytest.raises(ParameterError):
        precond.make_preconditioner("Jacobi", Kernels(), grid16, 0.1, grid16.vzeros())
    with pytest.raises(ParameterError):
        precond.make_preconditioner("InvH0", Kernels(), grid16, 0.1, None)
    with pytest.raises(ParameterError):
        precond.InvH0(Kernels(), grid16, grid16.vzeros(), 0.1, 0.5, eps_h0=1.5)


def test_ordering_on_small_grid():
    runs = convergence_study(16, [0.1])
    it = {r.preconditioner: r.iterations for r in runs}
    assert it["InvH0"] < it["InvA"]
    assert it["2LInvH0"] <= 1.25 * it["InvH0"]
    work = {r.preconditioner: r.inner_work_per_application for r in runs}
    assert work["2LInvH0"] < work["InvH0"]


@pytest.mark.xfail(strict=True, reason="inner PCG averages on SYN stay below the 8-20 range quoted for brain data; "
                                       "see the decisions ledger")
def test_inner_average_in_published_range():
    runs = convergence_study(32, [5e-2], ["2LInvH0"])
    assert 8 <= runs[0].inner_average <= 20
