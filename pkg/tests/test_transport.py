import numpy as np
import pytest

from diffreg.errors import ParameterError
from diffreg.grid import Grid
from diffreg.kernels import Kernels
from diffreg.synthetic import syn_problem, syn_template, syn_velocity
from diffreg.transport import Transport, compute_characteristics

from conftest import smooth_random


def constant_velocity(grid, c):
    v = grid.vzeros()
    v[0] = c
    return v


def test_zero_velocity_departure_is_node(grid16):
    ch = compute_characteristics(grid16, grid16.vzeros(), Kernels())
    assert np.array_equal(ch.points, grid16.mesh())
    assert ch.u_max == 0.0


def test_constant_velocity_departure_is_exact(grid16):
    ch = compute_characteristics(grid16, constant_velocity(grid16, 0.7), Kernels())
    want = grid16.mesh()
    want[0] -= grid16.dt * 0.7
    assert np.allclose(ch.points, want, atol=1e-13)


def euler_departure(grid, steps=1000):
    from diffreg.synthetic import syn_velocity_fn

    y = grid.mesh().reshape(3, -1).copy()
    tau = grid.dt / steps
    for _ in range(steps):
        y -= tau * np.array(syn_velocity_fn(*y))
    return y


def test_syn_departure_matches_fine_euler():
    # one Heun step has an O(dt^3) local error: 1e-3 at nt = 4, below 1e-4 from nt = 8 on
    errs = []
    for nt in (4, 8):
        g = Grid.cube(32, nt)
        ch = compute_characteristics(g, syn_velocity(g), Kernels())
        errs.append(np.abs(ch.points.reshape(3, -1) - euler_departure(g)).max())
    assert errs[0] <= 2e-3
    assert errs[1] <= 2e-4
    assert 6.0 <= errs[0] / errs[1] <= 10.0


def test_zero_velocity_solvers_are_constant(grid16, rng):
    m0 = rng.standard_normal(grid16.shape)
    tr = Transport(grid16, grid16.vzeros(), Kernels())
    assert all(np.array_equal(s, m0) for s in tr.solve_state(m0))
    assert all(np.array_equal(s, m0) for s in tr.solve_adjoint(m0))


def test_full_revolution_returns_template():
    g = Grid(16, 16, 16, nt=16)
    m0 = syn_template(g)
    m = Transport(g, constant_velocity(g, 2 * np.pi), Kernels()).solve_state(m0)
    assert np.array_equal(m[-1], m0)


def test_state_second_order_in_time():
    # 1D flow dx/dt = a(x1); exact departure from a tight ODE solve, fine space grid isolates dt
    from scipy.integrate import solve_ivp

    def a(x):
        return 0.6 + 0.3 * np.sin(x)

    n = 256
    xs = np.arange(n) * 2 * np.pi / n
    feet = solve_ivp(lambda t, y: -a(y), (0.0, 1.0), xs, rtol=1e-12, atol=1e-12).y[:, -1]
    errs = []
    for nt in (4, 8, 16):
        g = Grid(n, 8, 8, nt=nt)
        v = g.vzeros()
        v[0] = g.sample(lambda x1, x2, x3: a(x1))
        m = Transport(g, v, Kernels()).solve_state(g.sample(lambda x1, x2, x3: np.cos(x1)))
        errs.append(np.abs(m[-1][:, 0, 0] - np.cos(feet)).max())
    assert all(3.5 <= errs[i] / errs[i + 1] <= 4.5 for i in range(2))


def test_adjoint_mass_conserved_for_divergence_free(grid32):
    g = grid32.with_nt(8)
    v = g.vzeros()
    v[0] = g.sample(lambda x1, x2, x3: np.sin(x2))
    lam1 = syn_template(g)
    lam = Transport(g, v, Kernels()).solve_adjoint(lam1)
    mass = np.array([s.sum() for s in lam]) * g.cell_volume
    assert np.abs(mass - mass[-1]).max() <= 1e-3 * abs(mass[-1])


@pytest.mark.parametrize("scheme", ["discrete", "continuous"])
def test_inc_state_zero_direction(grid16, syn16, scheme):
    m0, _, v = syn16
    tr = Transport(grid16, 0.5 * v, Kernels(), scheme=scheme)
    m = tr.solve_state(m0)
    assert not np.any(tr.solve_inc_state(grid16.vzeros(), m))


@pytest.mark.parametrize("scheme", ["discrete", "continuous"])
def test_inc_state_at_zero_velocity(grid32, rng, scheme):
    m0 = syn_template(grid32)
    vt = smooth_random(grid32, rng, kmax=2)
    tr = Transport(grid32, grid32.vzeros(), Kernels(), scheme=scheme)
    mt = tr.solve_inc_state(vt, tr.solve_state(m0))
    grad = Kernels().gradient(m0, grid32)
    want = -np.einsum("i...,i...->...", vt, grad)
    assert np.abs(mt[-1] - want).max() <= 2e-3 * np.abs(want).max()


def test_inc_state_is_directional_derivative(grid32, syn32, rng):
    m0, _, v_true = syn32
    v = 0.5 * v_true
    vt = smooth_random(grid32, rng)
    k = Kernels()
    tr = Transport(grid32, v, k)
    mt = tr.solve_inc_state(vt, tr.solve_state(m0))[-1]
    eps = 1e-4
    plus = Transport(grid32, v + eps * vt, k).solve_state(m0)[-1]
    minus = Transport(grid32, v - eps * vt, k).solve_state(m0)[-1]
    fdq = (plus - minus) / (2 * eps)
    assert grid32.norm(mt - fdq) <= 1e-3 * grid32.norm(fdq)


def test_discrete_adjoint_is_transpose_of_state_step(grid16, syn16, rng):
    m0, _, v = syn16
    tr = Transport(grid16, v, Kernels())
    a, b = rng.standard_normal((2,) + grid16.shape)
    fa = tr.solve_state(a)[-1]
    bb = tr.solve_adjoint(b)[0]
    assert np.vdot(fa, b) == pytest.approx(np.vdot(a, bb), rel=1e-12)


def test_departure_variation_adjoint(grid16, syn16, rng):
    _, _, v = syn16
    tr = Transport(grid16, v, Kernels())
    x, y = rng.standard_normal((2,) + grid16.vshape)
    lhs = np.vdot(tr.departure_variation(x), y)
    rhs = np.vdot(x, tr.departure_variation_adjoint(y))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_deterministic(grid32, syn32):
    m0, _, v = syn32
    a = Transport(grid32, v, Kernels()).solve_state(m0)
    b = Transport(grid32, v, Kernels()).solve_state(m0)
    assert np.array_equal(a, b)
    _, m1_again, _ = syn_problem(grid32)
    assert np.array_equal(m1_again, syn32[1])


def test_refined_time_step_changes_m1_at_second_order(grid32, syn32):
    _, m1, _ = syn32
    _, m1_fine, _ = syn_problem(grid32.with_nt(8))
    _, m1_finer, _ = syn_problem(grid32.with_nt(16))
    d1, d2 = np.abs(m1 - m1_fine).max(), np.abs(m1_fine - m1_finer).max()
    assert d1 < 1e-2
    assert 2.5 <= d1 / d2 <= 5.5


def test_unknown_scheme(grid16):
    with pytest.raises(ParameterError):
        Transport(grid16, grid16.vzeros(), Kernels(), scheme="upwind")
