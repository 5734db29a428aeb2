"""Preconditioned conjugate gradients for operators on vector fields."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NegativeCurvatureError

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)  # ||r_k|| / ||r_0||, k = 0..iterations
    precond_residuals: list[float] = field(default_factory=list)  # sqrt(<r_k, M r_k>) / same at k = 0


def _euclid(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b))


def pcg(matvec: Operator, rhs: np.ndarray, precond: Operator | None = None, tol: float = 1e-6,
        max_it: int = 500, x0: np.ndarray | None = None,
        inner: Callable[[np.ndarray, np.ndarray], float] = _euclid,
        callback: Callable[[int, np.ndarray], None] | None = None) -> PCGResult:
    """Left-preconditioned CG for ``matvec(x) = rhs``.

    Stops when ``||r_k|| / ||r_0|| <= tol`` or after ``max_it`` iterations.
    Each iteration costs one matvec; the preconditioner is applied once for the
    initial residual and once per iteration that does not terminate, so a run
    of ``k`` iterations applies it ``k`` times. ``callback(k, x_k)`` sees every
    iterate. A non-positive curvature ``<p, A p>`` raises
    :class:`NegativeCurvatureError`.
    """
    precond = precond if precond is not None else (lambda r: r)
    if x0 is None:
        x = np.zeros_like(rhs)
        r = rhs.copy()
    else:
        x = x0.copy()
        r = rhs - matvec(x)
    r0 = np.sqrt(max(inner(r, r), 0.0))
    res = PCGResult(x, 0, False, [1.0], [1.0])
    if r0 == 0.0:
        res.converged = True
        return res
    z = precond(r)
    rz = inner(r, z)
    rz0 = rz
    p = z.copy()
    for k in range(1, max_it + 1):
        q = matvec(p)
        curv = inner(p, q)
        if not curv > 0.0:
            raise NegativeCurvatureError(f"non-positive curvature {curv:.3e} at PCG iteration {k}",
                                         iterate=x, iteration=k, history=res.residuals)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * q
        rel = np.sqrt(max(inner(r, r), 0.0)) / r0
        res.residuals.append(float(rel))
        res.iterations = k
        if callback is not None:
            callback(k, x)
        if rel <= tol:
            res.converged = True
            break
        if k == max_it:
            break
        z = precond(r)
        rz_new = inner(r, z)
        res.precond_residuals.append(float(np.sqrt(max(rz_new, 0.0) / rz0)) if rz0 > 0 else 0.0)
        p = z + (rz_new / rz) * p
        rz = rz_new
    res.x = x
    return res
