"""Drivers for the preconditioner convergence study and fixed-work benchmarks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import precond as pcmod
from .costmodel import estimate_memory
from .grid import Grid
from .kernels import Kernels
from .krylov import pcg
from .problem import RegistrationProblem
from .solver import RegistrationConfig, beta_continuation
from .synthetic import syn_problem

RHS_KINDS = ("white", "gradient")


@dataclass
class ConvergenceRun:
    n: int
    beta: float
    preconditioner: str
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)
    precond_residuals: list[float] = field(default_factory=list)
    inner_average: float = 0.0
    inner_work_per_application: float = 0.0


def convergence_study(n: int, betas, preconditioners=pcmod.NAMES, *, seed: int = 0, rhs: str = "white",
                      tol: float = 1e-6, eps_k: float = 0.5, max_it: int = 500, nt: int = 4,
                      kernels: Kernels | None = None) -> list[ConvergenceRun]:
    """PCG on the Gauss-Newton system linearized at the SYN true velocity.

    ``rhs="white"`` uses seeded white noise (every mode excited), ``"gradient"``
    the negative reduced gradient at v_true. ``inner_work_per_application``
    is inner PCG iterations times grid points, per preconditioner call, so
    the coarse solves of 2LInvH0 count at their own (1/8) size.
    """
    if rhs not in RHS_KINDS:
        raise ValueError(f"rhs must be one of {RHS_KINDS}")
    grid = Grid.cube(n, nt)
    k = kernels if kernels is not None else Kernels()
    m0, m1, v_true = syn_problem(grid, 3, k)
    out = []
    for beta in betas:
        prob = RegistrationProblem(grid, m0, m1, beta, kernels=k)
        ev = prob.evaluate(v_true)
        if rhs == "white":
            b = np.random.default_rng(seed).standard_normal(grid.vshape)
        else:
            b = -prob.gradient(ev)
        grad_ref = k.gradient(ev.m[-1], grid)
        for name in preconditioners:
            pc = pcmod.make_preconditioner(name, k, grid, beta, grad_ref, eps_k=eps_k)
            res = pcg(lambda x: prob.hessian_matvec(x, ev), b, pc, tol, max_it, inner=grid.inner)
            st = pc.stats
            out.append(ConvergenceRun(
                n, beta, name, res.iterations, res.converged, list(res.residuals), list(res.precond_residuals),
                st.inner_average, st.inner_work / st.applications if st.applications else 0.0))
    return out


def benchmark(n: int, p: int, *, gn: int = 5, pcg_its: int = 10, beta: float = 1e-2,
              preconditioner: str = "2LInvH0", nt: int = 4):
    """Fixed-work run (``gn`` Gauss-Newton steps of ``pcg_its`` PCG iterations) on SYN."""
    from .parallel import SlabKernels

    grid = Grid.cube(n, nt)
    m0, m1, _ = syn_problem(grid)
    cfg = RegistrationConfig(beta_target=beta, continuation=False, preconditioner=preconditioner,
                             fixed_gn=gn, fixed_pcg=pcg_its, nt=nt)
    k = Kernels() if p == 1 else SlabKernels(p)
    try:
        _, report = beta_continuation(m0, m1, cfg, grid, None, k)
    finally:
        if p > 1:
            k.close()
    report.memory_bytes = estimate_memory(grid, nt, p, 4)
    return report
