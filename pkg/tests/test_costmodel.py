import pytest

from diffreg.costmodel import estimate_cost, estimate_memory, measured_cost, pc_fft_count
from diffreg.grid import Grid
from diffreg.kernels import Kernels
from diffreg.solver import RegistrationConfig, gauss_newton_solve


def test_memory_table_value():
    est = estimate_memory((256, 256, 256), nt=4, p=1, mu0=4)
    assert est == pytest.approx(5.258e9, rel=1e-3)
    assert abs(est - 5.09e9) <= 0.1 * 5.09e9


def test_memory_scaling_in_p():
    n = 64**3
    one, two = estimate_memory(Grid.cube(64), 4, 1), estimate_memory(Grid.cube(64), 4, 2)
    field_term = 78 * n * 4
    assert one - two == pytest.approx(field_term / 2)


def test_pc_fft_counts():
    assert pc_fft_count("InvA", 0) == 6
    assert pc_fft_count("InvH0", 3) == 6 + 6 + 36
    assert pc_fft_count("2LInvH0", 3) == 6 + 12 + 6 + 36 + 9


@pytest.mark.parametrize("pc", ["InvA", "InvH0", "2LInvH0"])
@pytest.mark.parametrize("scheme,cache,gamma,leray", [
    ("discrete", False, 0.0, False), ("discrete", True, 0.0, False),
    ("continuous", False, 0.0, False), ("continuous", True, 0.1, False), ("discrete", False, 0.0, True),
])
def test_counters_match_expansion(grid16, syn16, pc, scheme, cache, gamma, leray):
    m0, m1, _ = syn16
    cfg = RegistrationConfig(beta_target=1e-2, continuation=False, fixed_gn=2, fixed_pcg=3, preconditioner=pc,
                             adjoint_scheme=scheme, cache_gradient=cache, gamma_div=gamma, leray=leray)
    _, rep = gauss_newton_solve(m0, m1, cfg, grid16, kernels=Kernels())
    assert estimate_cost(rep) == measured_cost(rep)


def test_continuation_counters_match(grid16, syn16):
    from diffreg.solver import beta_continuation

    m0, m1, _ = syn16
    _, rep = beta_continuation(m0, m1, RegistrationConfig(beta_target=1e-2), grid16)
    assert estimate_cost(rep) == measured_cost(rep)
