"""Kernel-count cost model and per-worker memory model.

The total cost of a solve is

    n_GN * (n_CG * (2 c_PDE + c_H + c_PC) + 2 c_PDE)

with the two outer PDE solves being the objective (state equation) and the
gradient (adjoint equation), and the inner ones the incremental state and
adjoint solves of each Hessian matvec. :func:`estimate_cost` expands this
into kernel-call counts for this implementation, using the iteration counts
actually recorded in a :class:`~diffreg.solver.SolverReport` (line-search
objective evaluations, per-application inner PCG iterations). The
per-operation constants below follow the code paths in ``problem``,
``transport`` and ``precond`` one for one.
"""
from __future__ import annotations

from collections import Counter

from .grid import Grid

KERNEL_KEYS = ("fft", "fd", "ip", "ip_grad", "ip_adj",
               "pde_state", "pde_adjoint", "pde_inc_state", "pde_inc_adjoint")


def _op_costs(nt: int, scheme: str, cache: bool, gamma: bool, leray: bool) -> dict[str, Counter]:
    """Kernel calls of one objective, gradient or matvec evaluation.

    With gradient caching the per-slice state gradients are computed once per
    velocity, by the gradient evaluation, and reused by every matvec.
    """
    obj = Counter(fft=3, ip=3 + nt, pde_state=1)
    grad = Counter(fft=6, pde_adjoint=1)
    mv = Counter(fft=6, pde_inc_state=1, pde_inc_adjoint=1)
    if scheme == "discrete":
        grad.update(ip_adj=nt + 3, ip_grad=nt + 3)
        mv.update(ip=nt + 3, ip_adj=nt + 3, ip_grad=0 if cache else 2 * nt)
    else:
        # backward characteristics (3), div v (1 FD) and its value at the feet (1), nt adjoint steps
        grad.update(ip=3 + 1 + nt, fd=1 + (nt + 1))
        mv.update(ip=2 * nt, fd=0 if cache else 2 * (nt + 1))
    if gamma:
        obj.update(fd=1)
        grad.update(fd=2)
        mv.update(fd=2)
    if leray:
        grad.update(fft=6)
        mv.update(fft=6)
    return {"objective": obj, "gradient": grad, "matvec": mv}


def pc_fft_count(name: str, inner_iterations: int) -> int:
    """FFTs of one preconditioner application with ``inner_iterations`` inner PCG steps.

    Inner PCG: initial residual (6) and preconditioned residual (6), then per
    step one H0 matvec (6) and, except after the last step, one inner
    preconditioner (6); InvH0 adds its start guess (6). The two-level variant
    adds the fine (beta A)^-1 r (6), restriction of r and of s_f (12) and
    prolongation plus high-pass (9), and starts from the restricted s_f
    instead of computing its own guess.
    """
    if name == "InvA":
        return 6
    inner = 6 + 12 * inner_iterations
    if name == "InvH0":
        return 6 + inner
    return 6 + 12 + inner + 9


def estimate_cost(report) -> dict[str, int]:
    """Predicted kernel counters for the run described by ``report``."""
    cfg = report.config
    ops = _op_costs(report.grid[3], cfg["adjoint_scheme"], cfg["cache_gradient"],
                    cfg["gamma_div"] > 0, cfg["leray"])
    total: Counter = Counter()
    for lv in report.levels:
        if cfg["leray"]:
            total["fft"] += 6  # projection of the level's starting velocity
        for _ in range(lv.objective_evals):
            total.update(ops["objective"])
        for _ in range(lv.gradient_evals):
            total.update(ops["gradient"])
        for _ in range(lv.total_pcg):
            total.update(ops["matvec"])
        if lv.preconditioner == "InvA":
            total["fft"] += 6 * lv.pc_applications
        else:
            total["fft"] += sum(pc_fft_count(lv.preconditioner, k) for k in lv.inner_iterations)
            # reference refresh: FD gradient of the deformed template (+ restriction to the coarse grid)
            total["fd"] += lv.ref_refreshes
            if lv.preconditioner == "2LInvH0":
                total["fft"] += 6 * lv.ref_refreshes
    return {k: int(total.get(k, 0)) for k in KERNEL_KEYS}


def measured_cost(report) -> dict[str, int]:
    return {k: int(report.counters.get(k, 0)) for k in KERNEL_KEYS}


def estimate_memory(grid: Grid | tuple, nt: int, p: int = 1, mu0: int = 4, degree: int = 3) -> float:
    """Bytes per worker: (74 + nt) N mu0 / p + 30 d N2 N3 mu0 (runtime-API overhead excluded)."""
    if isinstance(grid, Grid):
        n1, n2, n3 = grid.shape
    else:
        n1, n2, n3 = grid[:3]
    n = n1 * n2 * n3
    return (74 + nt) * n * mu0 / p + 30 * degree * n2 * n3 * mu0
