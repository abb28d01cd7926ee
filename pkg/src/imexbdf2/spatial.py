"""Uniform 1-D grid, central differences, discrete norms and the
trapezoidal nonlocal operator.

Grid functions are plain ``ndarray``s of length ``M + 1`` aligned with
``grid.x``; boundary entries sit at indices 0 and M. Difference operators
return interior values only (length ``M - 1``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from numba import njit


class SingularPivotError(ArithmeticError):
    """Raised when Thomas elimination meets a (numerically) zero pivot."""

    def __init__(self, row: int):
        super().__init__(f"zero pivot at row {row} in tridiagonal solve")
        self.row = row


@dataclass(frozen=True)
class SpatialGrid:
    x_l: float
    x_r: float
    M: int

    def __post_init__(self):
        if not self.x_r > self.x_l:
            raise ValueError("need x_l < x_r")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")

    @property
    def h(self) -> float:
        return (self.x_r - self.x_l) / self.M

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_l + self.h * np.arange(self.M + 1)
        x[-1] = self.x_r
        x.setflags(write=False)
        return x

    @property
    def interior(self) -> np.ndarray:
        return self.x[1:-1]

    @property
    def length(self) -> float:
        return self.x_r - self.x_l


def laplacian(grid: SpatialGrid, u: np.ndarray) -> np.ndarray:
    return (u[2:] - 2.0 * u[1:-1] + u[:-2]) / grid.h**2


def gradient(grid: SpatialGrid, u: np.ndarray) -> np.ndarray:
    return (u[2:] - u[:-2]) / (2.0 * grid.h)


def _interior(grid: SpatialGrid, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.size == grid.M + 1:
        return u[1:-1]
    if u.size == grid.M - 1:
        return u
    raise ValueError(f"grid function of length {u.size} does not fit M = {grid.M}")


def inner(grid: SpatialGrid, u: np.ndarray, v: np.ndarray) -> float:
    """Discrete L2 inner product ``h sum_{i=1..M-1} u_i v_i``.

    Accepts full grid functions or interior-only arrays.
    """
    return float(grid.h * np.dot(_interior(grid, u), _interior(grid, v)))


def l2_norm(grid: SpatialGrid, u: np.ndarray) -> float:
    return float(np.sqrt(inner(grid, u, u)))


def _with_zero_boundary(grid: SpatialGrid, u: np.ndarray) -> np.ndarray:
    full = np.zeros(grid.M + 1)
    full[1:-1] = _interior(grid, u)
    return full


def h1_seminorm(grid: SpatialGrid, u: np.ndarray) -> float:
    """``sqrt(<-Lap_h u, u>)`` for ``u`` in the zero-boundary space.

    Boundary entries of ``u`` are ignored (treated as zero).
    """
    full = _with_zero_boundary(grid, u)
    q = inner(grid, -laplacian(grid, full), full[1:-1])
    if q < 0:
        scale = np.dot(full, full) / grid.h
        if q < -1e-14 * max(scale, 1.0):
            raise ArithmeticError(f"negative H1 quadratic form {q}")
        q = 0.0
    return float(np.sqrt(q))


def seminorm_decomposition(grid: SpatialGrid, u: np.ndarray) -> tuple[float, float, float]:
    """The three pieces of ``|u|_1**2``: gradient, scaled Laplacian, boundary.

    ``|u|_1**2 = ||grad u||**2 + h**2/4 ||Lap u||**2 + (u_1**2 + u_{M-1}**2)/(2h)``.
    """
    full = _with_zero_boundary(grid, u)
    h = grid.h
    g = l2_norm(grid, gradient(grid, full)) ** 2
    lap = h**2 / 4.0 * l2_norm(grid, laplacian(grid, full)) ** 2
    edge = (full[1] ** 2 + full[-2] ** 2) / (2.0 * h)
    return g, lap, edge


# ---------------------------------------------------------------- integral

Kernel = Callable[[np.ndarray], np.ndarray]


class IntegralOperator:
    """Composite-trapezoid discretisation of ``int u(z) rho(z - x) dz``.

    Row ``i`` (interior node) of the operator maps a full grid function to
    ``h/2 (u_0 rho_{i,0} + 2 sum_j u_j rho_{i,j} + u_M rho_{i,M})`` with
    ``rho_{i,j} = rho(x_j - x_i)``.

    Build with :meth:`stationary` for a kernel of the difference ``x_j - x_i``
    (supports the FFT path) or :meth:`from_matrix` for arbitrary samples
    ``rho[i, j]`` on the grid (direct path only).
    """

    def __init__(self, grid: SpatialGrid, rho_diff: np.ndarray | None = None,
                 rho_matrix: np.ndarray | None = None):
        if (rho_diff is None) == (rho_matrix is None):
            raise ValueError("give exactly one of rho_diff / rho_matrix")
        self.grid = grid
        M = grid.M
        if rho_diff is not None:
            rho_diff = np.asarray(rho_diff, dtype=float)
            if rho_diff.shape != (2 * M + 1,):
                raise ValueError("rho_diff must sample offsets -M..M")
        if rho_matrix is not None:
            rho_matrix = np.asarray(rho_matrix, dtype=float)
            if rho_matrix.shape != (M - 1, M + 1):
                raise ValueError("rho_matrix must have shape (M-1, M+1)")
        self._rho_diff = rho_diff
        self._rho_matrix = rho_matrix

    @classmethod
    def stationary(cls, grid: SpatialGrid, rho: Kernel) -> "IntegralOperator":
        offsets = grid.h * np.arange(-grid.M, grid.M + 1)
        samples = np.broadcast_to(np.asarray(rho(offsets), dtype=float), offsets.shape)
        return cls(grid, rho_diff=samples.copy())

    @classmethod
    def from_matrix(cls, grid: SpatialGrid, rho_matrix: np.ndarray) -> "IntegralOperator":
        return cls(grid, rho_matrix=rho_matrix)

    @property
    def is_stationary(self) -> bool:
        return self._rho_diff is not None

    @property
    def quadrature_weights(self) -> np.ndarray:
        w = np.full(self.grid.M + 1, self.grid.h)
        w[0] = w[-1] = 0.5 * self.grid.h
        return w

    @cached_property
    def rho_samples(self) -> np.ndarray:
        """``rho(x_j - x_i)`` for interior ``i`` (rows) and all ``j``."""
        if self._rho_matrix is not None:
            return self._rho_matrix
        M = self.grid.M
        i = np.arange(1, M)[:, None]
        j = np.arange(M + 1)[None, :]
        return self._rho_diff[(j - i) + M]

    @cached_property
    def weights(self) -> np.ndarray:
        """Dense ``(M-1, M+1)`` matrix of trapezoid-weighted kernel samples."""
        return self.rho_samples * self.quadrature_weights[None, :]

    @property
    def sup_norm(self) -> float:
        src = self._rho_diff if self._rho_diff is not None else self._rho_matrix
        return float(np.max(np.abs(src)))

    @cached_property
    def _fft_plan(self) -> tuple[int, np.ndarray, np.ndarray]:
        M = self.grid.M
        L = 1 << int(np.ceil(np.log2(2 * (M + 1))))
        # out_i = sum_j rho[(j - i) + M] v_j = (c * v)_i with c[m] = rho[M - m]
        m = np.arange(-M, M + 1)
        c = np.zeros(L)
        c[m % L] = self._rho_diff[M - m]
        ct = np.zeros(L)
        ct[m % L] = self._rho_diff[M + m]
        return L, np.fft.rfft(c), np.fft.rfft(ct)

    def _convolve(self, v: np.ndarray, transpose: bool = False) -> np.ndarray:
        L, c_hat, ct_hat = self._fft_plan
        k_hat = ct_hat if transpose else c_hat
        return np.fft.irfft(np.fft.rfft(v, L) * k_hat, L)

    def apply_direct(self, u: np.ndarray) -> np.ndarray:
        return self.weights @ np.asarray(u, dtype=float)

    def apply_fast(self, u: np.ndarray) -> np.ndarray:
        if not self.is_stationary:
            raise ValueError("FFT path needs a kernel of x_j - x_i only")
        v = self.quadrature_weights * np.asarray(u, dtype=float)
        return self._convolve(v)[1 : self.grid.M]

    def apply(self, u: np.ndarray, fast: bool = True) -> np.ndarray:
        if fast and self.is_stationary:
            return self.apply_fast(u)
        return self.apply_direct(u)

    def _interior_matvec(self, v: np.ndarray, transpose: bool) -> np.ndarray:
        M = self.grid.M
        if not self.is_stationary:
            W = self.weights[:, 1:M]
            return (W.T if transpose else W) @ v
        full = np.zeros(M + 1)
        full[1:M] = v
        return self.grid.h * self._convolve(full, transpose)[1:M]

    def operator_norm(self, tol: float = 1e-13, maxiter: int = 1000) -> float:
        """Estimate ``C_J = sup ||J_h u|| / ||u||`` over zero-boundary ``u``.

        Power iteration on ``W^T W`` from a fixed start vector, so repeated
        calls return identical values.
        """
        M = self.grid.M
        v = np.ones(M - 1) + 0.5 * np.sin(np.arange(1, M))
        v /= np.linalg.norm(v)
        sigma = 0.0
        for _ in range(maxiter):
            w = self._interior_matvec(self._interior_matvec(v, False), True)
            nrm = np.linalg.norm(w)
            if nrm == 0.0:
                return 0.0
            new = np.sqrt(nrm)
            v = w / nrm
            if abs(new - sigma) <= tol * new:
                return float(new)
            sigma = new
        return float(sigma)


def apply_integral_direct(op: IntegralOperator, u: np.ndarray) -> np.ndarray:
    return op.apply_direct(u)


def apply_integral_fast(op: IntegralOperator, u: np.ndarray) -> np.ndarray:
    return op.apply_fast(u)


# ------------------------------------------------------------- tridiagonal

@dataclass(frozen=True, eq=False)
class TridiagonalMatrix:
    """Rows ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]``.

    ``lower[0]`` and ``upper[-1]`` fall outside the matrix and are ignored.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def size(self) -> int:
        return self.diag.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.lower[1:] * x[:-1]
        y[:-1] += self.upper[:-1] * x[1:]
        return y

    def todense(self) -> np.ndarray:
        n = self.size
        A = np.diag(self.diag)
        if n > 1:
            A += np.diag(self.lower[1:], -1) + np.diag(self.upper[:-1], 1)
        return A


def assemble_tridiagonal(b0_n: float, c1: float, c2: float, c3: float,
                         grid: SpatialGrid) -> TridiagonalMatrix:
    """Implicit operator ``b0_n + c3 - c1 Lap_h + c2 grad_h`` on interior nodes."""
    if not c1 > 0:
        raise ValueError("diffusion coefficient c1 must be positive")
    h = grid.h
    n = grid.M - 1
    diff = c1 / h**2
    conv = c2 / (2.0 * h)
    return TridiagonalMatrix(
        lower=np.full(n, -diff - conv),
        diag=np.full(n, b0_n + c3 + 2.0 * diff),
        upper=np.full(n, -diff + conv),
    )


PIVOT_FLOOR = 1e-300


@njit(cache=True)
def _thomas(a, b, c, d):
    n = d.size
    cp = np.empty(n)
    dp = np.empty(n)
    piv = b[0]
    if abs(piv) < PIVOT_FLOOR:
        return dp, 0
    cp[0] = c[0] / piv
    dp[0] = d[0] / piv
    for i in range(1, n):
        piv = b[i] - a[i] * cp[i - 1]
        if abs(piv) < PIVOT_FLOOR:
            return dp, i
        cp[i] = c[i] / piv
        dp[i] = (d[i] - a[i] * dp[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        dp[i] -= cp[i] * dp[i + 1]
    return dp, -1


def thomas_solve(A: TridiagonalMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve ``A x = rhs`` by Thomas elimination (no pivoting)."""
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if rhs.shape != (A.size,):
        raise ValueError("right-hand side does not match matrix size")
    x, bad = _thomas(
        np.ascontiguousarray(A.lower, dtype=float),
        np.ascontiguousarray(A.diag, dtype=float),
        np.ascontiguousarray(A.upper, dtype=float),
        rhs,
    )
    if bad >= 0:
        raise SingularPivotError(int(bad))
    return x
