import numpy as np
import pytest

from diffreg import spectral
from diffreg.grid import Grid
from diffreg.synthetic import syn_problem

ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    """Log an acceptance verdict; printed again in the terminal summary."""
    ACCEPTANCE.append((criterion, bool(ok), detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE, key=lambda t: t[0]):
        terminalreporter.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def smooth_random(grid: Grid, rng, kmax: int = 4, components: int = 3) -> np.ndarray:
    """Random band-limited field with unit max amplitude per component."""
    k1, k2, k3 = spectral.wavenumbers(grid.shape)
    mask = (np.abs(k1) <= kmax) & (np.abs(k2) <= kmax) & (k3 <= kmax)
    out = []
    for _ in range(components):
        F = np.zeros(spectral.spectral_shape(grid.shape), complex)
        F[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
        f = spectral.fft_inverse(F, grid.shape)
        out.append(f / np.abs(f).max())
    return np.stack(out) if components > 1 else out[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid16():
    return Grid.cube(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid.cube(32)


@pytest.fixture(scope="session")
def syn16(grid16):
    return syn_problem(grid16)


@pytest.fixture(scope="session")
def syn32(grid32):
    return syn_problem(grid32)
