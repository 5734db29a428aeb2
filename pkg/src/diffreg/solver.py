"""Gauss-Newton-Krylov solver with Armijo line search and beta-continuation."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import precond as pcmod
from .errors import NegativeCurvatureError, ParameterError
from .grid import Grid
from .kernels import Kernels
from .krylov import pcg
from .problem import RegistrationProblem
from .transport import SCHEMES


@dataclass
class RegistrationConfig:
    beta_target: float = 5e-4
    continuation: bool = True
    beta_start: float = 1.0
    beta_factor: float = 10.0
    gamma_div: float = 0.0
    leray: bool = False
    eps_n: float = 5e-2
    max_gn: int = 50
    max_pcg: int = 500
    eps_h0: float = 1e-3
    preconditioner: str = "2LInvH0"
    inner_max_pcg: int = pcmod.INNER_MAX_IT
    beta_floor: float = pcmod.BETA_FLOOR
    switch_beta: float = 5e-1
    degree: int = 3
    cache_gradient: bool = False
    nt: int = 4
    adjoint_scheme: str = "discrete"
    fixed_gn: int = 0  # > 0: run exactly this many GN steps ...
    fixed_pcg: int = 0  # ... each with exactly this many PCG iterations
    armijo_c: float = 1e-4
    armijo_factor: float = 0.5
    max_line_search: int = 10
    normalize: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(msg):
            raise ParameterError(msg)

        for name in ("beta_target", "beta_start", "beta_floor", "switch_beta"):
            if not getattr(self, name) > 0:
                bad(f"{name} must be positive")
        if not self.beta_factor > 1:
            bad("beta_factor must exceed 1")
        if self.gamma_div < 0:
            bad("gamma_div must be non-negative")
        for name in ("eps_n", "eps_h0", "armijo_c", "armijo_factor"):
            if not 0.0 < getattr(self, name) < 1.0:
                bad(f"{name} must lie in (0, 1)")
        for name in ("max_gn", "max_pcg", "inner_max_pcg", "nt", "max_line_search"):
            if int(getattr(self, name)) < 1:
                bad(f"{name} must be a positive integer")
        if self.fixed_gn < 0 or self.fixed_pcg < 0 or (self.fixed_gn > 0) != (self.fixed_pcg > 0):
            bad("fixed_gn and fixed_pcg must both be positive or both zero")
        if self.preconditioner not in pcmod.NAMES:
            bad(f"preconditioner must be one of {pcmod.NAMES}")
        if self.degree not in (1, 3):
            bad("degree must be 1 or 3")
        if self.adjoint_scheme not in SCHEMES:
            bad(f"adjoint_scheme must be one of {SCHEMES}")

    @property
    def fixed(self) -> bool:
        return self.fixed_gn > 0

    def levels(self) -> list[float]:
        """Continuation schedule: beta_start / factor^i while above the target, then the target."""
        if not self.continuation or self.beta_target >= self.beta_start:
            return [self.beta_target]
        out, i = [], 0
        while True:
            b = self.beta_start / self.beta_factor ** i
            if b <= self.beta_target * (1 + 1e-12):
                break
            out.append(b)
            i += 1
        return out + [self.beta_target]

    def preconditioner_for(self, beta: float) -> str:
        return "InvA" if beta > self.switch_beta else self.preconditioner

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class LevelReport:
    beta: float
    preconditioner: str
    beta_pc: float | None = None
    gn_iterations: int = 0
    objective_evals: int = 0
    gradient_evals: int = 0
    pcg_iterations: list[int] = field(default_factory=list)
    pcg_tolerances: list[float] = field(default_factory=list)
    pcg_histories: list[list[float]] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    mismatch: list[float] = field(default_factory=list)
    mismatch_rel: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    grad_rel: list[float] = field(default_factory=list)
    step_length: list[float] = field(default_factory=list)
    line_search_trials: list[int] = field(default_factory=list)
    pc_applications: int = 0
    inner_iterations: list[int] = field(default_factory=list)
    inner_work: int = 0
    inner_capped: int = 0
    ref_refreshes: int = 0
    converged: bool = False
    flags: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def total_pcg(self) -> int:
        return int(sum(self.pcg_iterations))

    @property
    def inner_average(self) -> float:
        return float(np.mean(self.inner_iterations)) if self.inner_iterations else 0.0


@dataclass
class SolverReport:
    grid: tuple[int, int, int, int]
    config: dict
    p: int = 1
    levels: list[LevelReport] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    timers: dict = field(default_factory=dict)
    comm: dict = field(default_factory=dict)
    memory_bytes: float = 0.0
    wall_time: float = 0.0
    initial_mismatch: float = 0.0
    final_mismatch: float = 0.0
    final_mismatch_rel: float = 0.0

    @property
    def flagged(self) -> bool:
        return any(lv.flags for lv in self.levels)

    @property
    def total_gn(self) -> int:
        return sum(lv.gn_iterations for lv in self.levels)

    @property
    def total_pcg(self) -> int:
        return sum(lv.total_pcg for lv in self.levels)

    def table(self) -> list[dict]:
        """One row per beta level, in the spirit of a results table."""
        rows = []
        for lv in self.levels:
            rows.append({
                "beta": lv.beta, "pc": lv.preconditioner, "beta_pc": lv.beta_pc,
                "gn_iterations": lv.gn_iterations, "pcg_total": lv.total_pcg,
                "pc_applications": lv.pc_applications, "inner_pcg_total": int(sum(lv.inner_iterations)),
                "inner_pcg_avg": lv.inner_average, "mismatch_rel": lv.mismatch_rel[-1] if lv.mismatch_rel else None,
                "grad_rel": lv.grad_rel[-1] if lv.grad_rel else None, "converged": lv.converged,
                "time_s": lv.wall_time,
            })
        return rows

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flagged"] = self.flagged
        d["total_gn"] = self.total_gn
        d["total_pcg"] = self.total_pcg
        d["table"] = self.table()
        return d


def normalize_intensities(m0: np.ndarray, m1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Common affine map of both images onto [0, 1]; identity if they already lie there."""
    lo = min(float(m0.min()), float(m1.min()))
    hi = max(float(m0.max()), float(m1.max()))
    if lo >= 0.0 and hi <= 1.0:
        return m0, m1
    if hi == lo:
        return np.zeros_like(m0), np.zeros_like(m1)
    return (m0 - lo) / (hi - lo), (m1 - lo) / (hi - lo)


class GaussNewtonSolver:
    """Reduced-space Gauss-Newton-Krylov solver for one image pair."""

    def __init__(self, grid: Grid, m0: np.ndarray, m1: np.ndarray, config: RegistrationConfig | None = None,
                 kernels: Kernels | None = None):
        self.config = config if config is not None else RegistrationConfig()
        self.config.validate()
        if grid.nt != self.config.nt:
            grid = grid.with_nt(self.config.nt)
        grid.check(m0, m1)
        if not (np.all(np.isfinite(m0)) and np.all(np.isfinite(m1))):
            raise ParameterError("images must be finite")
        if self.config.normalize:
            m0, m1 = normalize_intensities(m0, m1)
        self.grid = grid
        self.m0 = np.asarray(m0, dtype=float)
        self.m1 = np.asarray(m1, dtype=float)
        self.kernels = kernels if kernels is not None else Kernels()
        self.last_evaluation = None

    def problem(self, beta: float) -> RegistrationProblem:
        c = self.config
        return RegistrationProblem(self.grid, self.m0, self.m1, beta, gamma=c.gamma_div, degree=c.degree,
                                   kernels=self.kernels, cache_gradient=c.cache_gradient, leray=c.leray,
                                   scheme=c.adjoint_scheme)

    def _new_report(self) -> SolverReport:
        from .costmodel import estimate_memory

        g = self.grid
        return SolverReport(grid=(g.n1, g.n2, g.n3, g.nt), config=self.config.to_dict(), p=self.kernels.p,
                            memory_bytes=estimate_memory(g, g.nt, self.kernels.p, 8))

    def _finish(self, report: SolverReport, v: np.ndarray, t0: float) -> tuple[np.ndarray, SolverReport]:
        k = self.kernels
        report.counters = dict(k.counters)
        report.timers = dict(k.timers)
        report.comm = dict(k.comm)
        report.wall_time = time.perf_counter() - t0
        first = next((lv for lv in report.levels if lv.mismatch), None)
        last = next((lv for lv in reversed(report.levels) if lv.mismatch), None)
        if first is not None:
            report.initial_mismatch = first.mismatch[0]
            report.final_mismatch = last.mismatch[-1]
            report.final_mismatch_rel = last.mismatch_rel[-1]
        return v, report

    def solve(self, v0: np.ndarray | None = None) -> tuple[np.ndarray, SolverReport]:
        """Run every continuation level (a single level without continuation)."""
        t0 = time.perf_counter()
        report = self._new_report()
        v = self.grid.vzeros() if v0 is None else np.array(v0, dtype=float)
        self.grid.check(v)
        for beta in self.config.levels():
            v, level = self.solve_level(v, beta)
            report.levels.append(level)
        return self._finish(report, v, t0)

    def solve_level(self, v: np.ndarray, beta: float, pc_name: str | None = None) -> tuple[np.ndarray, LevelReport]:
        c, g, k = self.config, self.grid, self.kernels
        t0 = time.perf_counter()
        prob = self.problem(beta)
        pc_name = pc_name or c.preconditioner_for(beta)
        lv = LevelReport(beta=beta, preconditioner=pc_name)
        if pc_name != "InvA":
            lv.beta_pc = pcmod.beta_pc(beta, c.beta_floor)
        v = prob.project(v)
        ev = prob.evaluate(v)
        lv.objective_evals += 1
        g0 = None
        it = 0
        while True:
            self._record_iterate(lv, prob, ev)
            if c.fixed and it == c.fixed_gn:
                lv.converged = True
                break
            grad = prob.gradient(ev)
            lv.gradient_evals += 1
            gnorm = g.norm(grad)
            g0 = gnorm if g0 is None else g0
            grel = gnorm / g0 if g0 > 0 else 0.0
            lv.grad_norm.append(gnorm)
            lv.grad_rel.append(grel)
            if not c.fixed:
                if grel <= c.eps_n or gnorm == 0.0:
                    lv.converged = True
                    break
                if it == c.max_gn:
                    lv.flags.append("max_gn")
                    break
            eps_k = 0.0 if c.fixed else min(math.sqrt(grel), 0.5)
            max_it = c.fixed_pcg if c.fixed else c.max_pcg
            pc = self._preconditioner(pc_name, beta, ev, max(eps_k, 1e-16) if not c.fixed else 0.5, lv)
            try:
                res = pcg(lambda x: prob.hessian_matvec(x, ev), -grad, pc, eps_k, max_it, inner=g.inner)
                step = res.x
                lv.pcg_iterations.append(res.iterations)
                lv.pcg_histories.append(res.residuals)
                if not res.converged and not c.fixed:
                    lv.flags.append(f"pcg_cap@{it}")
            except NegativeCurvatureError as exc:
                lv.flags.append(f"negative_curvature@{it}")
                lv.pcg_iterations.append(exc.iteration)
                lv.pcg_histories.append(list(exc.history))
                step = exc.iterate if exc.iterate is not None and np.any(exc.iterate) else -grad
            lv.pcg_tolerances.append(eps_k)
            self._collect_pc(lv, pc)
            ev_new, alpha, trials = self._line_search(prob, ev, grad, step, lv)
            lv.line_search_trials.append(trials)
            if ev_new is None:
                lv.flags.append(f"line_search@{it}")
                break
            lv.step_length.append(alpha)
            ev = ev_new
            it += 1
            lv.gn_iterations = it
        lv.wall_time = time.perf_counter() - t0
        self.last_evaluation = ev
        return ev.v, lv

    def _record_iterate(self, lv: LevelReport, prob: RegistrationProblem, ev) -> None:
        lv.objective.append(ev.value)
        lv.mismatch.append(ev.mismatch)
        lv.mismatch_rel.append(prob.relative_mismatch(ev))

    def _preconditioner(self, name: str, beta: float, ev, eps_k: float, lv: LevelReport):
        c, k = self.config, self.kernels
        grad_ref = None
        if name != "InvA":
            # reference image: the deformed template at the current iterate
            grad_ref = k.gradient(ev.m[-1], self.grid)
            lv.ref_refreshes += 1
        return pcmod.make_preconditioner(name, k, self.grid, beta, grad_ref, eps_k, c.eps_h0,
                                         c.inner_max_pcg, c.beta_floor)

    @staticmethod
    def _collect_pc(lv: LevelReport, pc) -> None:
        st = pc.stats
        lv.pc_applications += st.applications
        lv.inner_iterations.extend(st.inner_iterations)
        lv.inner_work += st.inner_work
        lv.inner_capped += st.capped
        if st.capped:
            lv.flags.append("inner_pcg_cap")

    def _line_search(self, prob: RegistrationProblem, ev, grad: np.ndarray, step: np.ndarray, lv: LevelReport):
        """Armijo backtracking; returns (evaluation, alpha, trials) or (None, 0, trials)."""
        c = self.config
        slope = self.grid.inner(grad, step)
        if not slope < 0.0:
            lv.flags.append("not_descent")
            return None, 0.0, 0
        alpha = 1.0
        for trial in range(1, c.max_line_search + 1):
            trial_ev = prob.evaluate(ev.v + alpha * step)
            lv.objective_evals += 1
            if trial_ev.value <= ev.value + c.armijo_c * alpha * slope:
                return trial_ev, alpha, trial
            alpha *= c.armijo_factor
        return None, 0.0, c.max_line_search


def gauss_newton_solve(m0: np.ndarray, m1: np.ndarray, config: RegistrationConfig | None = None,
                       grid: Grid | None = None, v0: np.ndarray | None = None,
                       kernels: Kernels | None = None, beta: float | None = None):
    """One Gauss-Newton solve at fixed beta (``config.beta_target`` unless given)."""
    config = config if config is not None else RegistrationConfig()
    grid = grid if grid is not None else Grid(*m0.shape, config.nt)
    s = GaussNewtonSolver(grid, m0, m1, config, kernels)
    t0 = time.perf_counter()
    report = s._new_report()
    v = grid.vzeros() if v0 is None else np.array(v0, dtype=float)
    v, lv = s.solve_level(v, config.beta_target if beta is None else beta)
    report.levels.append(lv)
    return s._finish(report, v, t0)


def beta_continuation(m0: np.ndarray, m1: np.ndarray, config: RegistrationConfig | None = None,
                      grid: Grid | None = None, v0: np.ndarray | None = None, kernels: Kernels | None = None):
    """Warm-started sequence of solves down to ``config.beta_target``."""
    config = config if config is not None else RegistrationConfig()
    grid = grid if grid is not None else Grid(*m0.shape, config.nt)
    return GaussNewtonSolver(grid, m0, m1, config, kernels).solve(v0)
