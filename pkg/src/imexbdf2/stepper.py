"""Variable-step IMEX BDF2 time marching (BDF1 start).

Local terms (diffusion, convection, reaction) are implicit and give one
tridiagonal solve per step; the nonlocal integral is explicit, evaluated on
the linear extrapolant ``(1 + r_n) u^{n-1} - r_n u^{n-2}``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .kernels import bdf2_kernels
from .mesh import C_R, R_MAX, TimeMesh, check_ratio_condition
from .problems import PideProblem
from .spatial import (
    IntegralOperator,
    SpatialGrid,
    TridiagonalMatrix,
    assemble_tridiagonal,
    thomas_solve,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"solve failed at step {step}: {cause}")
        self.step = step


@dataclass
class SchemeDiagnostics:
    stability_bound: float
    tau_max: float
    bound_satisfied: bool
    C_J: float
    C_1: float
    delta: float
    per_step_residual: np.ndarray = field(repr=False)


@dataclass
class SolveResult:
    grid: SpatialGrid
    mesh: TimeMesh
    snapshots: dict[int, np.ndarray]
    diagnostics: SchemeDiagnostics
    wall_time: float

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[self.mesh.N]

    def at(self, n: int) -> np.ndarray:
        return self.snapshots[n]


def extrapolate(u_prev: np.ndarray, u_prev2: Optional[np.ndarray], r_n: float) -> np.ndarray:
    """``(1 + r_n) u_prev - r_n u_prev2``; with ``u_prev2=None`` (first step)
    the previous level is returned unchanged."""
    if u_prev2 is None:
        return np.array(u_prev, dtype=float, copy=True)
    return (1.0 + r_n) * u_prev - r_n * u_prev2


def stability_step_bound(c1: float, c2: float, c3: float, C_J: float,
                         delta: float) -> tuple[float, float]:
    """Sufficient maximum step for the L2 stability estimate, and ``C_1``."""
    C_1 = c2**2 / (c1 * C_R * delta) + 2.0 * abs(c3) + 2.0 * C_J * (1.0 + 2.0 * R_MAX)
    bound = min(
        1.0 / (2.0 * C_1),
        1.0 / (2.0 * (c2**2 / c1 + 4.0 * abs(c3) + 2.0 * C_J)),
        1.0 / (4.0 * (5.0 * C_J + 4.0 * abs(c3))),
    )
    return bound, C_1


class ImexBdf2:
    """Reusable per-run state: grid, integral operator and local stencil."""

    def __init__(self, problem: PideProblem, grid: SpatialGrid, mesh: TimeMesh,
                 fast_integral: bool = True):
        if abs(grid.x_l - problem.x_l) > 1e-12 or abs(grid.x_r - problem.x_r) > 1e-12:
            raise ValueError("grid does not cover the problem domain")
        if abs(mesh.T - problem.T) > 1e-12 * problem.T:
            raise ValueError(f"mesh ends at {mesh.T}, problem at {problem.T}")
        self.problem = problem
        self.grid = grid
        self.mesh = mesh
        self.fast_integral = fast_integral
        self.kern = bdf2_kernels(mesh)
        self._op_cache: Optional[IntegralOperator] = None
        h = grid.h
        pb = problem
        self._sub = -pb.c1 / h**2 - pb.c2 / (2.0 * h)
        self._sup = -pb.c1 / h**2 + pb.c2 / (2.0 * h)
        self._xb = np.array([grid.x_l, grid.x_r])

    def operator(self, t: float) -> IntegralOperator:
        pb = self.problem
        if self._op_cache is not None and not pb.rho_time_dependent:
            return self._op_cache
        op = IntegralOperator.stationary(self.grid, lambda y: pb.rho(y, t))
        self._op_cache = op
        return op

    def integral(self, u: np.ndarray, t: float) -> np.ndarray:
        return self.operator(t).apply(u, fast=self.fast_integral)

    def initial(self) -> np.ndarray:
        return np.asarray(self.problem.u0(self.grid.x), dtype=float).copy()

    def boundary(self, t: float) -> np.ndarray:
        return np.asarray(self.problem.boundary(self._xb, t), dtype=float)

    def matrix(self, b0_n: float) -> TridiagonalMatrix:
        pb = self.problem
        return assemble_tridiagonal(b0_n, pb.c1, pb.c2, pb.c3, self.grid)

    def _solve(self, n: int, b0_n: float, rhs: np.ndarray, ub: np.ndarray):
        rhs = rhs.copy()
        rhs[0] -= self._sub * ub[0]
        rhs[-1] -= self._sup * ub[1]
        A = self.matrix(b0_n)
        try:
            interior = thomas_solve(A, rhs)
        except ArithmeticError as exc:
            raise SolverError(n, exc) from exc
        resid = np.max(np.abs(A.matvec(interior) - rhs)) / max(np.max(np.abs(rhs)), 1e-300)
        u = np.empty(self.grid.M + 1)
        u[0], u[-1] = ub
        u[1:-1] = interior
        return u, float(resid)

    def bdf1_step(self, u0: np.ndarray):
        """First level: ``(u1 - u0)/tau1 + L u1 + J_h(u0) = f(t1)``."""
        t1 = self.mesh.t[1]
        b0 = self.kern.b0[1]
        f = np.asarray(self.problem.f(self.grid.interior, t1), dtype=float)
        rhs = f + b0 * u0[1:-1] - self.integral(u0, t1)
        return self._solve(1, b0, rhs, self.boundary(t1))

    def bdf2_step(self, n: int, u_prev: np.ndarray, u_prev2: np.ndarray):
        tn = self.mesh.t[n]
        b0, b1 = self.kern.b0[n], self.kern.b1[n]
        ext = extrapolate(u_prev, u_prev2, self.mesh.r[n])
        f = np.asarray(self.problem.f(self.grid.interior, tn), dtype=float)
        up, up2 = u_prev[1:-1], u_prev2[1:-1]
        rhs = f + b0 * up - b1 * (up - up2) - self.integral(ext, tn)
        return self._solve(n, b0, rhs, self.boundary(tn))

    def diagnostics(self, residuals: np.ndarray) -> SchemeDiagnostics:
        pb = self.problem
        report = check_ratio_condition(self.mesh)
        delta = report.delta_margin
        C_J = self.operator(0.0).operator_norm()
        bound, C_1 = stability_step_bound(pb.c1, pb.c2, pb.c3, C_J, delta)
        tmax = self.mesh.tau_max
        return SchemeDiagnostics(
            stability_bound=bound, tau_max=tmax, bound_satisfied=bool(tmax <= bound),
            C_J=C_J, C_1=C_1, delta=delta, per_step_residual=residuals,
        )

    def run(self, snapshot_steps: Iterable[int] = (), full_history: bool = False,
            diagnostics: bool = True,
            observer: Optional[Callable[[int, float, np.ndarray], None]] = None) -> SolveResult:
        N = self.mesh.N
        keep = {int(n) for n in snapshot_steps} | {N}
        if any(n < 0 or n > N for n in keep):
            raise ValueError(f"snapshot steps must lie in 0..{N}")
        start = time.perf_counter()
        snaps: dict[int, np.ndarray] = {}
        resid = np.zeros(N + 1)

        t = self.mesh.t

        def record(n, u):
            if full_history or n in keep:
                snaps[n] = u.copy()
            if observer is not None:
                observer(n, t[n], u)

        u_old = self.initial()
        record(0, u_old)
        u, resid[1] = self.bdf1_step(u_old)
        record(1, u)
        for n in range(2, N + 1):
            u_new, resid[n] = self.bdf2_step(n, u, u_old)
            u_old, u = u, u_new
            record(n, u)

        diag = self.diagnostics(resid) if diagnostics else None
        wall = time.perf_counter() - start
        log.debug("run %s M=%d N=%d in %.3fs", self.problem.name, self.grid.M, N, wall)
        return SolveResult(self.grid, self.mesh, snaps, diag, wall)


def bdf1_step(problem: PideProblem, grid: SpatialGrid, mesh: TimeMesh,
              u0: np.ndarray, fast_integral: bool = True) -> np.ndarray:
    return ImexBdf2(problem, grid, mesh, fast_integral).bdf1_step(np.asarray(u0, dtype=float))[0]


def bdf2_step(problem: PideProblem, grid: SpatialGrid, mesh: TimeMesh, n: int,
              u_prev: np.ndarray, u_prev2: np.ndarray, fast_integral: bool = True) -> np.ndarray:
    if n < 2:
        raise ValueError("BDF2 steps start at n = 2")
    solver = ImexBdf2(problem, grid, mesh, fast_integral)
    return solver.bdf2_step(n, np.asarray(u_prev, dtype=float), np.asarray(u_prev2, dtype=float))[0]


def run(problem: PideProblem, grid: SpatialGrid, mesh: TimeMesh,
        snapshot_steps: Iterable[int] = (), *, fast_integral: bool = True,
        full_history: bool = False, diagnostics: bool = True,
        observer: Optional[Callable[[int, float, np.ndarray], None]] = None) -> SolveResult:
    """March the scheme over ``mesh`` and keep the requested time levels
    (the final level is always kept).

    ``observer(n, t_n, u_n)``, if given, sees every level as it is computed;
    the array is reused by the solver, so copy it to keep it.
    """
    solver = ImexBdf2(problem, grid, mesh, fast_integral)
    return solver.run(snapshot_steps, full_history=full_history,
                      diagnostics=diagnostics, observer=observer)
