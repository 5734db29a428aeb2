"""The SYN test problem: smooth template and a reference generated by transport."""
from __future__ import annotations

import numpy as np

from .grid import Grid
from .kernels import Kernels
from .transport import Transport

# (i, k) per velocity component: v_j = sin(x_i) cos(x_k) sin(x_k)
SYN_INDEX_PAIRS = ((3, 2), (1, 3), (2, 1))


def syn_template(grid: Grid) -> np.ndarray:
    """m0(x) = sum_i sin^2(x_i) / 3, values in [0, 1]."""
    return grid.sample(lambda x1, x2, x3: (np.sin(x1) ** 2 + np.sin(x2) ** 2 + np.sin(x3) ** 2) / 3.0)


def syn_velocity_fn(x1, x2, x3):
    x = (x1, x2, x3)
    return [np.sin(x[i - 1]) * np.cos(x[k - 1]) * np.sin(x[k - 1]) for i, k in SYN_INDEX_PAIRS]


def syn_velocity(grid: Grid) -> np.ndarray:
    c = grid.coords()
    return np.stack([np.broadcast_to(comp, grid.shape) for comp in syn_velocity_fn(*c)]).astype(float)


def syn_problem(grid: Grid, degree: int = 3, kernels: Kernels | None = None):
    """Return ``(m0, m1, v_true)``; m1 is the transported template at t = 1."""
    m0 = syn_template(grid)
    v = syn_velocity(grid)
    m = Transport(grid, v, kernels if kernels is not None else Kernels(), degree).solve_state(m0)
    return m0, m[-1].copy(), v
