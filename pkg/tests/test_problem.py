import numpy as np
import pytest

from diffreg import spectral
from diffreg.grid import Grid
from diffreg.problem import RegistrationProblem

from conftest import smooth_random


def test_value_zero_for_identical_images(grid16, syn16):
    m0 = syn16[0]
    prob = RegistrationProblem(grid16, m0, m0, 1e-2)
    ev = prob.evaluate(grid16.vzeros())
    assert ev.value == 0.0
    assert not np.any(prob.gradient(ev))


def test_value_without_transport(grid16, syn16):
    m0, m1, _ = syn16
    prob = RegistrationProblem(grid16, m0, m1, 1e-2)
    assert prob.evaluate(grid16.vzeros()).value == pytest.approx(0.5 * grid16.inner(m0 - m1, m0 - m1), rel=1e-14)


def test_true_velocity_value_is_regularization(grid32, syn32):
    m0, m1, v = syn32
    prob = RegistrationProblem(grid32, m0, m1, 1e-3)
    ev = prob.evaluate(v)
    assert ev.mismatch == 0.0  # m1 was produced by this very forward solver
    assert ev.value == pytest.approx(0.5e-3 * spectral.reg_seminorm(grid32, v), rel=1e-12)


def test_gradient_regularization_dominated(grid16, syn16):
    m0, m1, v = syn16
    prob = RegistrationProblem(grid16, m0, m1, 10.0)
    g = prob.gradient(prob.evaluate(0.3 * v))
    reg = prob.kernels.regop(grid16, 0.3 * v, 10.0, zero_mode=0.0)
    assert grid16.norm(g - reg) <= 0.1 * grid16.norm(reg)


def test_hessian_zero_direction_and_positivity(grid16, syn16, rng):
    m0, m1, v = syn16
    beta = 1e-2
    prob = RegistrationProblem(grid16, m0, m1, beta)
    ev = prob.evaluate(0.5 * v)
    assert not np.any(prob.hessian_matvec(grid16.vzeros(), ev))
    for _ in range(3):
        u = rng.standard_normal(grid16.vshape)
        Au = prob.kernels.regop(grid16, u, beta, zero_mode=0.0)
        assert grid16.inner(prob.hessian_matvec(u, ev), u) >= grid16.inner(Au, u) * (1 - 1e-12)


@pytest.mark.parametrize("gamma,leray", [(0.5, False), (0.0, True)])
def test_gradient_with_divergence_control(grid16, syn16, rng, gamma, leray):
    m0, m1, v = syn16
    prob = RegistrationProblem(grid16, m0, m1, 1e-2, gamma=gamma, leray=leray)
    v0 = 0.5 * (spectral.leray_project(grid16, v) if leray else v)
    ev = prob.evaluate(v0)
    g = prob.gradient(ev)
    d = smooth_random(grid16, rng, kmax=2)
    if leray:
        d = spectral.leray_project(grid16, d)
    eps = 1e-4
    fdq = (prob.evaluate(v0 + eps * d).value - prob.evaluate(v0 - eps * d).value) / (2 * eps)
    assert abs(fdq - grid16.inner(g, d)) <= 1e-5 * abs(fdq)


def test_continuous_scheme_gradient_is_approximate(grid16, syn16, rng):
    m0, m1, v = syn16
    prob = RegistrationProblem(grid16, m0, m1, 1e-2, scheme="continuous")
    ev = prob.evaluate(0.5 * v)
    g = prob.gradient(ev)
    d = smooth_random(grid16, rng, kmax=2)
    eps = 1e-4
    fdq = (prob.evaluate(0.5 * v + eps * d).value - prob.evaluate(0.5 * v - eps * d).value) / (2 * eps)
    err = abs(fdq - grid16.inner(g, d)) / abs(fdq)
    assert 1e-8 < err < 0.1  # consistent but not the exact discrete derivative


def test_relative_mismatch(grid16, syn16):
    m0, m1, _ = syn16
    prob = RegistrationProblem(grid16, m0, m1, 1.0)
    assert prob.relative_mismatch(prob.evaluate(grid16.vzeros())) == pytest.approx(1.0)
