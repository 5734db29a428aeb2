"""Objective, reduced gradient and Gauss-Newton Hessian matvec of the registration problem."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .kernels import Kernels
from .transport import Transport


@dataclass
class Evaluation:
    """Objective value at ``v`` together with the state it required."""

    v: np.ndarray
    transport: Transport
    m: np.ndarray
    value: float
    mismatch: float
    reg: float
    div_penalty: float = 0.0


class RegistrationProblem:
    """min_v 1/2 ||m(1) - m1||^2 + beta/2 reg(v) + gamma/2 ||div v||^2 subject to transport of m0.

    The regularization term uses the true H1-seminorm symbol (zero on
    constants), so gradient and Hessian carry ``beta * A0`` with the same
    convention; the preconditioners use the invertible variant with symbol 1 at
    k = 0.
    """

    def __init__(self, grid: Grid, m0: np.ndarray, m1: np.ndarray, beta: float, *,
                 gamma: float = 0.0, degree: int = 3, kernels: Kernels | None = None,
                 cache_gradient: bool = False, leray: bool = False, scheme: str = "discrete"):
        grid.check(m0, m1)
        self.grid = grid
        self.m0 = np.asarray(m0, dtype=float)
        self.m1 = np.asarray(m1, dtype=float)
        self.beta = beta
        self.gamma = gamma
        self.degree = degree
        self.kernels = kernels if kernels is not None else Kernels()
        self.cache_gradient = cache_gradient
        self.leray = leray
        self.scheme = scheme

    def transport(self, v: np.ndarray) -> Transport:
        return Transport(self.grid, v, self.kernels, self.degree, self.cache_gradient, self.scheme)

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.kernels.leray(self.grid, v) if self.leray else v

    def evaluate(self, v: np.ndarray) -> Evaluation:
        g = self.grid
        tr = self.transport(v)
        m = tr.solve_state(self.m0)
        mismatch = 0.5 * g.inner(m[-1] - self.m1, m[-1] - self.m1)
        reg = self.kernels.reg_seminorm(g, v)
        value = mismatch + 0.5 * self.beta * reg
        div_pen = 0.0
        if self.gamma:
            d = self.kernels.divergence(v, g)
            div_pen = 0.5 * self.gamma * g.inner(d, d)
            value += div_pen
        self.kernels.counters["objective"] += 1
        return Evaluation(v, tr, m, value, mismatch, reg, div_pen)

    def objective(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        ev = self.evaluate(v)
        return ev.value, ev.m

    def _reg_terms(self, v: np.ndarray) -> np.ndarray:
        out = self.kernels.regop(self.grid, v, self.beta, zero_mode=0.0)
        if self.gamma:
            d = self.kernels.divergence(v, self.grid)
            out -= self.gamma * self.kernels.gradient(d, self.grid)
        return out

    def gradient(self, ev: Evaluation) -> np.ndarray:
        """beta A v + int_0^1 lambda grad m dt with lambda(1) = m1 - m(1)."""
        tr = ev.transport
        lam = tr.solve_adjoint(self.m1 - ev.m[-1])
        g = self._reg_terms(ev.v) + tr.time_integral(lam, ev.m)
        self.kernels.counters["gradient"] += 1
        return self.project(g)

    def hessian_matvec(self, vt: np.ndarray, ev: Evaluation) -> np.ndarray:
        """Gauss-Newton Hessian applied to ``vt`` at the linearization point ``ev``."""
        tr = ev.transport
        mt = tr.solve_inc_state(vt, ev.m)
        lt = tr.solve_inc_adjoint(-mt[-1])
        out = self._reg_terms(vt) + tr.time_integral(lt, ev.m)
        self.kernels.counters["matvec"] += 1
        return self.project(out)

    def relative_mismatch(self, ev: Evaluation) -> float:
        """||m(1) - m1|| / ||m0 - m1||."""
        g = self.grid
        ref = g.norm(self.m0 - self.m1)
        return g.norm(ev.m[-1] - self.m1) / ref if ref > 0 else 0.0
