import numpy as np
import pytest

from diffreg import spectral
from diffreg.errors import DimensionError, ParameterError
from diffreg.grid import Grid


def test_constant_is_dc_only(grid16):
    F = spectral.fft_forward(np.ones(grid16.shape))
    assert F[0, 0, 0] == pytest.approx(grid16.size)
    F[0, 0, 0] = 0
    assert np.abs(F).max() < 1e-9


def test_cosine_is_single_mode(grid16):
    F = spectral.fft_forward(grid16.sample(lambda x1, x2, x3: np.cos(x1)))
    big = np.argwhere(np.abs(F) > 1e-9)
    assert sorted(map(tuple, big)) == [(1, 0, 0), (15, 0, 0)]


def test_roundtrip(grid32, rng):
    f = rng.standard_normal(grid32.shape)
    back = spectral.fft_inverse(spectral.fft_forward(f), grid32.shape)
    assert np.abs(back - f).max() <= 1e-12 * np.abs(f).max()


def test_parseval(grid16, rng):
    f, g = rng.standard_normal((2,) + grid16.shape)
    a, b = grid16.inner(f, g), spectral.spectral_inner(grid16, f, g)
    assert abs(a - b) <= 1e-12 * abs(a)


def test_regop_on_eigenmode(grid16):
    v = grid16.vzeros()
    v[0] = grid16.sample(lambda x1, x2, x3: np.sin(x1))
    v[1] = grid16.sample(lambda x1, x2, x3: np.cos(2 * x3))
    out = spectral.apply_regop(grid16, v, 0.3)
    assert np.allclose(out[0], 0.3 * v[0], atol=1e-12)
    assert np.allclose(out[1], 0.3 * 4 * v[1], atol=1e-12)
    assert np.allclose(out[2], 0.0, atol=1e-12)


def test_regop_zero_mode_convention(grid16):
    v = np.ones(grid16.vshape) * np.array([1.0, -2.0, 0.5])[:, None, None, None]
    assert np.allclose(spectral.apply_regop(grid16, v, 0.7), 0.7 * v, atol=1e-12)
    assert np.allclose(spectral.apply_inv_regop(grid16, v, 0.7), v / 0.7, atol=1e-12)


def test_regop_inverse_roundtrip_and_symmetry(grid16, rng):
    v, w = rng.standard_normal((2,) + grid16.vshape)
    back = spectral.apply_inv_regop(grid16, spectral.apply_regop(grid16, v, 1e-2), 1e-2)
    assert np.abs(back - v).max() < 1e-10
    Av, Aw = spectral.apply_regop(grid16, v, 1.0), spectral.apply_regop(grid16, w, 1.0)
    assert grid16.inner(Av, w) == pytest.approx(grid16.inner(v, Aw), rel=1e-12)
    assert grid16.inner(Av, v) > 0


def test_reg_seminorm_matches_gradient_energy(grid16):
    # sum_i ||grad v_i||^2 for v = (sin x1, sin 2 x2, 0) = 4 pi^3 (1 + 4)
    v = grid16.vzeros()
    v[0] = grid16.sample(lambda x1, x2, x3: np.sin(x1))
    v[1] = grid16.sample(lambda x1, x2, x3: np.sin(2 * x2))
    assert spectral.reg_seminorm(grid16, v) == pytest.approx(5 * 4 * np.pi**3, rel=1e-12)
    assert spectral.reg_seminorm(grid16, np.ones(grid16.vshape)) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("beta", [0.0, -1.0, np.nan])
def test_rejects_bad_beta(grid16, beta):
    with pytest.raises(ParameterError):
        spectral.apply_regop(grid16, grid16.vzeros(), beta)


def test_leray_divergence_free_unchanged(grid16):
    v = grid16.vzeros()
    v[0] = grid16.sample(lambda x1, x2, x3: np.sin(x2))
    assert np.abs(spectral.leray_project(grid16, v) - v).max() < 1e-12


def test_leray_kills_gradients(grid16):
    phi_grad = np.stack([grid16.sample(lambda x1, x2, x3: np.cos(x1) * np.sin(x2)),
                         grid16.sample(lambda x1, x2, x3: np.sin(x1) * np.cos(x2)),
                         grid16.zeros()])
    const = np.ones(grid16.vshape) * 0.25
    out = spectral.leray_project(grid16, phi_grad + const)
    assert np.abs(out - const).max() < 1e-12


def test_leray_is_orthogonal_projector(grid16, rng):
    v, w = rng.standard_normal((2,) + grid16.vshape)
    Pv, Pw = spectral.leray_project(grid16, v), spectral.leray_project(grid16, w)
    assert np.abs(spectral.leray_project(grid16, Pv) - Pv).max() < 1e-10
    assert grid16.inner(Pv, w) == pytest.approx(grid16.inner(v, Pw), rel=1e-10)
    assert np.abs(spectral.spectral_divergence(grid16, Pv)).max() < 1e-10


def test_restrict_keeps_low_mode():
    fine, coarse = Grid.cube(32), Grid.cube(16)
    f = fine.sample(lambda x1, x2, x3: np.sin(x1) * np.cos(3 * x3))
    want = coarse.sample(lambda x1, x2, x3: np.sin(x1) * np.cos(3 * x3))
    assert np.abs(spectral.restrict(f) - want).max() < 1e-12


def test_band_edges():
    g = Grid.cube(32)
    above = g.sample(lambda x1, x2, x3: np.sin(15 * x1))
    assert np.abs(spectral.restrict(above)).max() < 1e-12
    assert np.abs(spectral.high_pass(above) - above).max() < 1e-12
    # the coarse Nyquist line (k = 8 on 16^3) is dropped as well
    nyq = g.sample(lambda x1, x2, x3: np.cos(8 * x2))
    assert np.abs(spectral.restrict(nyq)).max() < 1e-12
    last = g.sample(lambda x1, x2, x3: np.cos(7 * x2))
    assert np.abs(spectral.prolong(spectral.restrict(last)) - last).max() < 1e-12


def test_completeness_and_adjointness(grid32, rng):
    f = rng.standard_normal(grid32.shape)
    g = rng.standard_normal((16, 16, 16))
    recon = spectral.prolong(spectral.restrict(f)) + spectral.high_pass(f)
    assert np.abs(recon - f).max() < 1e-12
    coarse = grid32.coarse()
    lhs = coarse.inner(spectral.restrict(f), g)
    rhs = grid32.inner(f, spectral.prolong(g))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_restrict_rejects_odd():
    with pytest.raises(DimensionError):
        spectral.restrict(np.zeros((9, 8, 8)))
