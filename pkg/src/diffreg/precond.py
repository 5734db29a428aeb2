"""Preconditioners for the reduced-space Gauss-Newton Hessian.

``InvA``
    (beta A)^-1, two transforms per component.
``InvH0``
    Approximate inverse of the zero-velocity Hessian
    H0 = beta_pc A + grad m_ref (x) grad m_ref by an inner PCG (see
    :func:`h0_zero_mode` for the k = 0 symbol).
``TwoLevelInvH0``
    Same inner solve on the half-resolution grid; the modes the coarse grid
    cannot represent keep (beta A)^-1 r.

beta_pc = max(beta, floor) with floor 5e-2. The inner solves run to a fixed
relative tolerance eps_H0 * eps_K for the whole outer solve so the
preconditioner stays (nearly) a fixed linear map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .grid import Grid
from .kernels import Kernels
from .krylov import pcg

BETA_FLOOR = 5e-2
INNER_MAX_IT = 100
NAMES = ("InvA", "InvH0", "2LInvH0")


def beta_pc(beta: float, floor: float = BETA_FLOOR) -> float:
    return max(beta, floor)


def h0_zero_mode(grid: Grid, grad_ref: np.ndarray, rtol: float = 1e-10) -> float:
    """Symbol of A at k = 0 used inside H0.

    The Hessian regularizes with symbol 0 on constants, so H0 copies that
    whenever its data term is definite on constants, i.e. when the Gram matrix
    <d_i m, d_j m> is nonsingular. Otherwise (e.g. grad_ref = 0) H0 would be
    singular and the invertible symbol 1 is used, which makes H0 = beta A.
    """
    gram = np.array([[grid.inner(grad_ref[i], grad_ref[j]) for j in range(3)] for i in range(3)])
    ev = np.linalg.eigvalsh(gram)
    return 0.0 if ev[-1] > 0 and ev[0] > rtol * ev[-1] else 1.0


def h0_matvec(kernels: Kernels, grid: Grid, s: np.ndarray, grad_ref: np.ndarray, beta: float,
              zero_mode: float = 1.0) -> np.ndarray:
    """beta A s + grad_ref (grad_ref . s); ``zero_mode`` is the k = 0 symbol of A."""
    out = kernels.regop(grid, s, beta, zero_mode)
    out += grad_ref * np.einsum("i...,i...->...", grad_ref, s)[None]
    return out


@dataclass
class PCStats:
    applications: int = 0
    inner_iterations: list[int] = field(default_factory=list)
    inner_work: int = 0  # sum over inner iterations of grid points, coarse or fine
    capped: int = 0

    @property
    def inner_average(self) -> float:
        return float(np.mean(self.inner_iterations)) if self.inner_iterations else 0.0


class InvA:
    name = "InvA"

    def __init__(self, kernels: Kernels, grid: Grid, beta: float):
        if beta <= 0:
            raise ParameterError("beta must be positive")
        self.kernels, self.grid, self.beta = kernels, grid, beta
        self.stats = PCStats()

    def __call__(self, r: np.ndarray) -> np.ndarray:
        self.stats.applications += 1
        self.kernels.counters["pc_inva"] += 1
        return self.kernels.inv_regop(self.grid, r, self.beta)


class InvH0:
    """Inner PCG on H0 with (beta_pc A)^-1 as its preconditioner, started from (beta_pc A)^-1 r."""

    name = "InvH0"

    def __init__(self, kernels: Kernels, grid: Grid, grad_ref: np.ndarray, beta: float, eps_k: float,
                 eps_h0: float = 1e-3, max_it: int = INNER_MAX_IT, floor: float = BETA_FLOOR):
        if not 0.0 < eps_h0 < 1.0:
            raise ParameterError(f"eps_H0 must lie in (0, 1), got {eps_h0}")
        if beta <= 0:
            raise ParameterError("beta must be positive")
        grid.check(grad_ref[0])
        self.kernels, self.grid = kernels, grid
        self.beta = beta
        self.beta_pc = beta_pc(beta, floor)
        self.tol = eps_h0 * eps_k
        self.max_it = max_it
        self.grad_ref = grad_ref
        self.zero_mode = h0_zero_mode(grid, grad_ref)
        self.stats = PCStats()

    def _solve(self, grid: Grid, r: np.ndarray, grad_ref: np.ndarray, zm: float, x0: np.ndarray) -> np.ndarray:
        k = self.kernels
        res = pcg(lambda s: h0_matvec(k, grid, s, grad_ref, self.beta_pc, zm), r,
                  lambda s: k.inv_regop(grid, s, self.beta_pc), self.tol, self.max_it, x0=x0, inner=grid.inner)
        self.stats.inner_iterations.append(res.iterations)
        self.stats.inner_work += res.iterations * grid.size
        if not res.converged:
            self.stats.capped += 1
        return res.x

    def __call__(self, r: np.ndarray) -> np.ndarray:
        self.stats.applications += 1
        self.kernels.counters["pc_invh0"] += 1
        x0 = self.kernels.inv_regop(self.grid, r, self.beta_pc)
        return self._solve(self.grid, r, self.grad_ref, self.zero_mode, x0)


class TwoLevelInvH0(InvH0):
    """H0 inverted on the half grid; prolong(s_c) + high_pass(s_f)."""

    name = "2LInvH0"

    def __init__(self, kernels: Kernels, grid: Grid, grad_ref: np.ndarray, beta: float, eps_k: float,
                 eps_h0: float = 1e-3, max_it: int = INNER_MAX_IT, floor: float = BETA_FLOOR):
        super().__init__(kernels, grid, grad_ref, beta, eps_k, eps_h0, max_it, floor)
        self.coarse = grid.coarse()
        self.grad_coarse = np.stack([kernels.restrict(c) for c in grad_ref])
        self.zero_mode_coarse = h0_zero_mode(self.coarse, self.grad_coarse)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        self.stats.applications += 1
        k = self.kernels
        k.counters["pc_2linvh0"] += 1
        s_f = k.inv_regop(self.grid, r, self.beta_pc)
        r_c = np.stack([k.restrict(c) for c in r])
        x0 = np.stack([k.restrict(c) for c in s_f])
        s_c = self._solve(self.coarse, r_c, self.grad_coarse, self.zero_mode_coarse, x0)
        return np.stack([k.prolong_plus_high_pass(s_c[i], s_f[i]) for i in range(3)])


def make_preconditioner(name: str, kernels: Kernels, grid: Grid, beta: float, grad_ref: np.ndarray | None = None,
                        eps_k: float = 0.5, eps_h0: float = 1e-3, max_it: int = INNER_MAX_IT,
                        floor: float = BETA_FLOOR):
    if name == "InvA":
        return InvA(kernels, grid, beta)
    if grad_ref is None:
        raise ParameterError(f"{name} needs a reference gradient")
    if name == "InvH0":
        return InvH0(kernels, grid, grad_ref, beta, eps_k, eps_h0, max_it, floor)
    if name == "2LInvH0":
        return TwoLevelInvH0(kernels, grid, grad_ref, beta, eps_k, eps_h0, max_it, floor)
    raise ParameterError(f"unknown preconditioner {name!r}; choose from {NAMES}")
