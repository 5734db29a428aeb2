"""Semi-Lagrangian solvers for the state, adjoint and incremental transport equations.

All four equations share characteristics computed once per stationary
velocity. Departure points are stored in fractional grid-index units; the
``points`` property converts them to radians.

Time series are arrays of shape ``(nt + 1, n1, n2, n3)``; slice ``n`` lives at
``t = n * dt``. There is no special path for v = 0: on-node interpolation and
its transpose are exact identities, so every solver returns a constant-in-time
series there while the kernel counters stay independent of the data.

Two schemes are available for the adjoint side:

``"discrete"`` (default)
    Exact linearization of the discrete state map. The incremental state
    differentiates the interpolant and the Heun departure points, the adjoint
    is the transposed interpolation, so the reduced gradient is the exact
    derivative of the discrete objective and the Gauss-Newton Hessian is
    exactly symmetric.
``"continuous"``
    Discretization of the continuous adjoint and incremental equations: an
    advective semi-Lagrangian adjoint with a Heun step for ``lambda div v``,
    FD gradients of the state and trapezoidal time integration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grid import Grid
from .kernels import Kernels

SCHEMES = ("discrete", "continuous")


@dataclass
class Characteristics:
    grid: Grid
    departure: np.ndarray  # (3, N) fractional indices
    u_max: float  # largest x1-displacement, index units
    star: np.ndarray | None = None  # Heun predictor points, (3, N)
    u_max_star: float = 0.0

    @property
    def points(self) -> np.ndarray:
        """Departure points in radians, shape (3, n1, n2, n3)."""
        h = self.grid.spacing
        return np.stack([self.departure[i] * h[i] for i in range(3)]).reshape(self.grid.vshape)


def _node_indices(grid: Grid) -> np.ndarray:
    i1, i2, i3 = np.meshgrid(*(np.arange(n, dtype=float) for n in grid.shape), indexing="ij")
    return np.stack([i1.ravel(), i2.ravel(), i3.ravel()])


def compute_characteristics(grid: Grid, v: np.ndarray, kernels: Kernels, degree: int = 3,
                            direction: int = -1) -> Characteristics:
    """Feet of the trajectories ending at the grid nodes after one time step.

    ``direction=-1`` traces dy/dt = v backward (state equations); ``+1`` traces
    dy/dt = -v backward, i.e. the characteristics of the adjoint equations in
    reversed time. Second-order Runge-Kutta (Heun).
    """
    dt = grid.dt
    nodes = _node_indices(grid)
    h = np.asarray(grid.spacing)[:, None]
    vi = v.reshape(3, -1) / h  # velocity in index units per unit time
    u_max0 = float(np.max(np.abs(vi[0]))) * dt if vi.size else 0.0
    star = nodes + direction * dt * vi
    vstar = np.stack([kernels.interpolate(v[i], star, degree, u_max0) for i in range(3)]) / h
    dep = nodes + direction * 0.5 * dt * (vi + vstar)
    u_max = float(np.max(np.abs(dep[0] - nodes[0]))) if dep.size else 0.0
    return Characteristics(grid, dep, u_max, star, u_max0)


class Transport:
    """Transport solvers for one stationary velocity ``v``."""

    def __init__(self, grid: Grid, v: np.ndarray, kernels: Kernels, degree: int = 3,
                 cache_gradient: bool = False, scheme: str = "discrete"):
        grid.check(v)
        if scheme not in SCHEMES:
            raise ParameterError(f"adjoint scheme must be one of {SCHEMES}, got {scheme!r}")
        self.grid = grid
        self.v = v
        self.kernels = kernels
        self.degree = degree
        self.cache_gradient = cache_gradient
        self.scheme = scheme
        self._fwd: Characteristics | None = None
        self._bwd: Characteristics | None = None
        self._div = None
        self._jac = None
        self._grad_cache: dict[int, np.ndarray] = {}

    # characteristics -------------------------------------------------------

    @property
    def forward(self) -> Characteristics:
        if self._fwd is None:
            self._fwd = compute_characteristics(self.grid, self.v, self.kernels, self.degree, -1)
        return self._fwd

    @property
    def backward(self) -> Characteristics:
        if self._bwd is None:
            self._bwd = compute_characteristics(self.grid, self.v, self.kernels, self.degree, +1)
        return self._bwd

    def _divergence_terms(self):
        """div v on the nodes and at the adjoint departure points."""
        if self._div is None:
            div = self.kernels.divergence(self.v, self.grid)
            c = self.backward
            div_dep = self.kernels.interpolate(div, c.departure, self.degree, c.u_max).reshape(self.grid.shape)
            self._div = (div, div_dep)
        return self._div

    def _advect(self, f: np.ndarray, c: Characteristics) -> np.ndarray:
        return self.kernels.interpolate(f, c.departure, self.degree, c.u_max).reshape(self.grid.shape)

    def _advect_transpose(self, f: np.ndarray, c: Characteristics) -> np.ndarray:
        return self.kernels.scatter(f, c.departure, self.grid.shape, self.degree, c.u_max)

    def _velocity_jacobian(self) -> np.ndarray:
        """J[i, j] = d(v_i / h_i)/d s_j of the interpolated velocity at the predictor points."""
        if self._jac is None:
            c = self.forward
            h = self.grid.spacing
            self._jac = np.stack([
                self.kernels.interpolate_gradient(self.v[i], c.star, self.degree, c.u_max_star) / h[i]
                for i in range(3)])
        return self._jac

    # solvers ---------------------------------------------------------------

    def solve_state(self, m0: np.ndarray) -> np.ndarray:
        """dm/dt + v.grad m = 0, m(0) = m0."""
        nt = self.grid.nt
        self.kernels.counters["pde_state"] += 1
        m = np.empty((nt + 1,) + self.grid.shape)
        m[0] = m0
        for n in range(nt):
            m[n + 1] = self._advect(m[n], self.forward)
        self._grad_cache.clear()
        return m

    def solve_adjoint(self, final: np.ndarray, counter: str = "pde_adjoint") -> np.ndarray:
        """-dl/dt - div(l v) = 0 backward from l(1) = ``final``.

        Discrete scheme: l^n = I^T l^{n+1}, the transpose of one state step,
        which conserves the total mass of l. Continuous scheme: advective form
        along reversed-time characteristics with the zeroth-order term
        l * div v integrated by Heun's rule.
        """
        nt, dt = self.grid.nt, self.grid.dt
        self.kernels.counters[counter] += 1
        lam = np.empty((nt + 1,) + self.grid.shape)
        lam[nt] = final
        if self.scheme == "discrete":
            for n in range(nt, 0, -1):
                lam[n - 1] = self._advect_transpose(lam[n], self.forward)
            return lam
        div, div_dep = self._divergence_terms()
        for n in range(nt, 0, -1):
            lt = self._advect(lam[n], self.backward)
            k1 = lt * div_dep
            k2 = (lt + dt * k1) * div
            lam[n - 1] = lt + 0.5 * dt * (k1 + k2)
        return lam

    def solve_inc_state(self, vt: np.ndarray, m: np.ndarray) -> np.ndarray:
        """dmt/dt + v.grad mt + vt.grad m = 0, mt(0) = 0."""
        nt = self.grid.nt
        self.kernels.counters["pde_inc_state"] += 1
        mt = np.zeros((nt + 1,) + self.grid.shape)
        if not np.any(vt):
            return mt
        if self.scheme == "discrete":
            dx = self.departure_variation(vt)
            for n in range(nt):
                mt[n + 1] = self._advect(mt[n], self.forward) + np.einsum("i...,i...->...", self.state_gradient(m, n), dx)
            return mt
        dt = self.grid.dt
        src_prev = -np.einsum("i...,i...->...", vt, self.state_gradient(m, 0))
        for n in range(nt):
            src_next = -np.einsum("i...,i...->...", vt, self.state_gradient(m, n + 1))
            carried = self._advect(mt[n] + 0.5 * dt * src_prev, self.forward)
            mt[n + 1] = carried + 0.5 * dt * src_next
            src_prev = src_next
        return mt

    def solve_inc_adjoint(self, final: np.ndarray) -> np.ndarray:
        """Same operator as the adjoint equation (Gauss-Newton), final condition -mt(1)."""
        return self.solve_adjoint(final, counter="pde_inc_adjoint")

    # helpers -------------------------------------------------------------

    def state_gradient(self, m: np.ndarray, n: int) -> np.ndarray:
        """Spatial gradient of state slice ``n``.

        Discrete scheme: gradient of the interpolant at the departure points,
        per index unit, which is what one state step differentiates to.
        Continuous scheme: FD gradient on the nodes. Stored for the lifetime of
        the state when caching is on.
        """
        if self.cache_gradient:
            g = self._grad_cache.get(n)
            if g is None:
                g = self._grad_cache[n] = self._state_gradient(m[n])
            return g
        return self._state_gradient(m[n])

    def _state_gradient(self, f: np.ndarray) -> np.ndarray:
        if self.scheme == "continuous":
            return self.kernels.gradient(f, self.grid)
        c = self.forward
        return self.kernels.interpolate_gradient(f, c.departure, self.degree, c.u_max).reshape(self.grid.vshape)

    def departure_variation(self, vt: np.ndarray) -> np.ndarray:
        """Derivative of the departure points (index units) in direction ``vt``, shape (3, n1, n2, n3)."""
        g, dt = self.grid, self.grid.dt
        h = np.asarray(g.spacing)[:, None]
        c = self.forward
        vti = vt.reshape(3, -1) / h
        at_star = np.stack([self.kernels.interpolate(vt[i], c.star, self.degree, c.u_max_star)
                            for i in range(3)]) / h
        jac = self._velocity_jacobian()
        chain = np.einsum("ijn,jn->in", jac, vti)
        return (-0.5 * dt * (vti + at_star - dt * chain)).reshape(g.vshape)

    def departure_variation_adjoint(self, a: np.ndarray) -> np.ndarray:
        """Euclidean transpose of :meth:`departure_variation`."""
        g, dt = self.grid, self.grid.dt
        h = np.asarray(g.spacing)[:, None]
        a = a.reshape(3, -1)
        c = self.forward
        scat = np.stack([self.kernels.scatter(a[i], c.star, g.shape, self.degree, c.u_max_star).ravel()
                         for i in range(3)])
        jac = self._velocity_jacobian()
        chain = np.einsum("ijn,in->jn", jac, a)
        return (-0.5 * dt * (a + scat - dt * chain) / h).reshape(g.vshape)

    def time_integral(self, lam: np.ndarray, m: np.ndarray) -> np.ndarray:
        """int_0^1 lam grad m dt.

        Discrete scheme: the exact transpose pairing, -dX^T sum_n lam^{n+1} G^n.
        Continuous scheme: trapezoidal rule with FD gradients.
        """
        nt, dt = self.grid.nt, self.grid.dt
        out = self.grid.vzeros()
        if self.scheme == "discrete":
            for n in range(nt):
                out += lam[n + 1] * self.state_gradient(m, n)
            return -self.departure_variation_adjoint(out)
        for n in range(nt + 1):
            w = 0.5 * dt if n in (0, nt) else dt
            out += (w * lam[n]) * self.state_gradient(m, n)
        return out
