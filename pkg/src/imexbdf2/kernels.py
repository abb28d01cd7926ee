"""Variable-step BDF2 kernels and their orthogonal/complementary companions.

All triangular tables are stored in absolute-index form: ``table[n, j]`` is
the kernel that multiplies level ``j`` in the row for level ``n`` (the usual
notation writes these with the lag ``n - j`` as subscript). Rows and columns run over
``0..N`` and only ``1 <= j <= n`` is populated; everything else is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import C_R, C_R_DCC, R_MAX, TimeMesh, check_ratio_condition


@dataclass(frozen=True, eq=False)
class Bdf2Kernels:
    """Leading (``b0``) and lag-one (``b1``) BDF2 kernels on a mesh.

    ``b0[n]`` for ``n = 1..N`` with the BDF1 start ``b0[1] = 1/tau[1]``;
    ``b1[n]`` for ``n = 2..N``. Entries outside those ranges are zero.
    Higher lags vanish identically.
    """

    mesh: TimeMesh
    b0: np.ndarray
    b1: np.ndarray

    @property
    def N(self) -> int:
        return self.mesh.N

    def matrix(self) -> np.ndarray:
        """Dense lower-bidiagonal matrix ``B[n, k] = b^{(n)}_{n-k}``."""
        N = self.N
        B = np.zeros((N + 1, N + 1))
        idx = np.arange(1, N + 1)
        B[idx, idx] = self.b0[1:]
        B[idx[1:], idx[:-1]] = self.b1[2:]
        return B

    def apply(self, u: np.ndarray) -> np.ndarray:
        """BDF2 difference quotients ``(D2 u)[n]``, ``n = 1..N`` (index 0 is 0)."""
        u = np.asarray(u, dtype=float)
        du = np.zeros(self.N + 1)
        du[1:] = np.diff(u[: self.N + 1])
        out = self.b0 * du
        out[2:] += self.b1[2:] * du[1:-1]
        out[0] = 0.0
        return out


def bdf2_kernels(mesh: TimeMesh) -> Bdf2Kernels:
    tau, r = mesh.tau, mesh.r
    b0 = np.zeros(mesh.N + 1)
    b1 = np.zeros(mesh.N + 1)
    b0[1] = 1.0 / tau[1]
    rn, tn = r[2:], tau[2:]
    b0[2:] = (1.0 + 2.0 * rn) / (tn * (1.0 + rn))
    b1[2:] = -(rn**2) / (tn * (1.0 + rn))
    return Bdf2Kernels(mesh, b0, b1)


@dataclass(frozen=True, eq=False)
class DocTable:
    """Discrete orthogonal convolution kernels ``theta[n, j]``."""

    mesh: TimeMesh
    theta: np.ndarray

    @property
    def N(self) -> int:
        return self.mesh.N


@dataclass(frozen=True, eq=False)
class DccTable:
    """Discrete complementary convolution kernels ``p[n, j]``."""

    mesh: TimeMesh
    p: np.ndarray

    @property
    def N(self) -> int:
        return self.mesh.N


def doc_kernels(kern: Bdf2Kernels) -> DocTable:
    """DOC kernels by the two-diagonal recurrence.

    Since only ``b0`` and ``b1`` are nonzero, orthogonality for ``k < n``
    collapses to ``theta[n, k] b0[k] + theta[n, k+1] b1[k+1] = 0``, so each
    row is ``1/b0[n]`` times a running product of ``-b1[k+1]/b0[k]``.
    """
    N = kern.N
    b0, b1 = kern.b0, kern.b1
    q = np.zeros(N + 1)
    q[2:] = -b1[2:] / b0[1:-1]  # theta[n, k] = q[k+1] * theta[n, k+1]
    theta = np.zeros((N + 1, N + 1))
    for n in range(1, N + 1):
        theta[n, n] = 1.0 / b0[n]
        if n > 1:
            # k = n-1, ..., 1 uses q[n], ..., q[2]
            theta[n, n - 1 : 0 : -1] = theta[n, n] * np.cumprod(q[n:1:-1])
    return DocTable(kern.mesh, theta)


def dcc_from_doc(doc: DocTable) -> DccTable:
    """``p[n, j] = sum_{k=j..n} theta[k, j]``: column-wise cumulative sums."""
    return DccTable(doc.mesh, np.cumsum(doc.theta, axis=0))


def dcc_explicit(mesh: TimeMesh) -> DccTable:
    """DCC kernels from the closed-form product formula.

    ``p[n, j] = sum_{k=j..n} tau_k (1 + r_j)/(1 + 2 r_j) prod_{i=j+1..k} r_i/(1 + 2 r_i)``.
    Shares no code with the DOC route.
    """
    N = mesh.N
    tau, r = mesh.tau, mesh.r
    s = r / (1.0 + 2.0 * r)
    p = np.zeros((N + 1, N + 1))
    for j in range(1, N + 1):
        prods = np.ones(N - j + 1)
        prods[1:] = np.cumprod(s[j + 1 :])
        lead = (1.0 + r[j]) / (1.0 + 2.0 * r[j])
        p[j:, j] = lead * np.cumsum(tau[j:] * prods)
    return DccTable(mesh, p)


def dense_doc_oracle(kern: Bdf2Kernels) -> np.ndarray:
    """DOC kernels by inverting the dense lower-triangular BDF2 matrix.

    Orthogonality says ``Theta @ B = I`` on indices ``1..N``, so ``Theta`` is
    simply ``inv(B)``. Meant for small ``N`` cross-checks only.
    """
    B = kern.matrix()[1:, 1:]
    out = np.zeros((kern.N + 1, kern.N + 1))
    out[1:, 1:] = np.linalg.solve(B.T, np.eye(kern.N)).T
    return out


def _scaled_residual(value: np.ndarray, scale: np.ndarray) -> float:
    mask = scale > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(value[mask]) / scale[mask]))


def orthogonality_residual(doc: DocTable, kern: Bdf2Kernels) -> float:
    """Worst scaled residual of ``sum_j theta[n, j] b[j, k] = delta_{nk}``."""
    Th = doc.theta[1:, 1:]
    B = kern.matrix()[1:, 1:]
    R = Th @ B - np.eye(kern.N)
    scale = np.abs(Th) @ np.abs(B)
    return _scaled_residual(np.tril(R), np.tril(scale))


def completeness_residual(dcc: DccTable, kern: Bdf2Kernels) -> float:
    """Worst scaled residual of ``sum_j p[n, j] b[j, k] = 1`` for ``k <= n``."""
    P = dcc.p[1:, 1:]
    B = kern.matrix()[1:, 1:]
    R = P @ B - np.tril(np.ones((kern.N, kern.N)))
    scale = np.abs(P) @ np.abs(B)
    return _scaled_residual(np.tril(R), np.tril(scale))


def relation_residual(doc: DocTable, dcc: DccTable) -> float:
    """Worst relative residual of ``theta[n, n] = p[n, n]`` and
    ``theta[n, k] = p[n, k] - p[n-1, k]`` for ``1 <= k <= n-1``."""
    th, p = doc.theta, dcc.p
    N = doc.N
    diff = np.zeros_like(p)
    diff[1:, :] = p[1:, :] - p[:-1, :]
    idx = np.arange(1, N + 1)
    diff[idx, idx] = p[idx, idx]
    scale = np.maximum(np.abs(th), np.abs(p))
    return _scaled_residual(np.tril(diff - th), np.tril(scale))


def row_sum_residuals(doc: DocTable, dcc: DccTable) -> tuple[float, float]:
    """Relative errors of ``sum_j theta[n, j] = tau_n`` and ``sum_j p[n, j] = t_n``."""
    tau, t = doc.mesh.tau[1:], dcc.mesh.t[1:]
    e_theta = np.abs(doc.theta[1:].sum(axis=1) - tau) / tau
    e_p = np.abs(dcc.p[1:].sum(axis=1) - t) / t
    return float(e_theta.max()), float(e_p.max())


def telescoping_residuals(
    kern: Bdf2Kernels, doc: DocTable, dcc: DccTable, u: np.ndarray
) -> tuple[float, float]:
    """Residuals of the two telescoping identities for a sequence ``u[0..N]``.

    Returns the worst scaled errors of ``sum_j p[n, j] (D2 u)[j] = u[n] - u[0]``
    and ``sum_j theta[k, j] (D2 u)[j] = u[k] - u[k-1]``.
    """
    u = np.asarray(u, dtype=float)
    d2 = kern.apply(u)[1:]
    P, Th = dcc.p[1:, 1:], doc.theta[1:, 1:]

    lhs_p = P @ d2
    scale_p = np.abs(P) @ np.abs(d2) + np.abs(u[1:]) + abs(u[0])
    lhs_th = Th @ d2
    scale_th = np.abs(Th) @ np.abs(d2) + np.abs(u[1:]) + np.abs(u[:-1])
    res_p = _scaled_residual(lhs_p - (u[1:] - u[0]), scale_p)
    res_th = _scaled_residual(lhs_th - np.diff(u), scale_th)
    return res_p, res_th


def _omega_weights(omega: np.ndarray) -> np.ndarray:
    # omega holds w_2..w_n; pad to absolute indices 0..n
    w = np.zeros(omega.size + 2)
    w[2:] = omega
    return w


def quadratic_form_b(kern: Bdf2Kernels, omega: np.ndarray) -> float:
    """``2 sum_{k=2..n} w_k sum_{j=2..k} b[k, j] w_j`` for ``omega = (w_2..w_n)``."""
    omega = np.asarray(omega, dtype=float)
    n = omega.size + 1
    w = _omega_weights(omega)
    inner = kern.b0[2 : n + 1] * w[2:]
    inner[1:] += kern.b1[3 : n + 1] * w[2:-1]
    return float(2.0 * np.dot(w[2:], inner))


def quadratic_form_theta(doc: DocTable, omega: np.ndarray) -> float:
    """Same quadratic form with DOC kernels in place of the BDF2 kernels."""
    omega = np.asarray(omega, dtype=float)
    n = omega.size + 1
    inner = doc.theta[2 : n + 1, 2 : n + 1] @ omega
    return float(2.0 * np.dot(omega, inner))


def quadratic_form_b_lower_bound(kern: Bdf2Kernels, omega: np.ndarray, delta: float) -> float:
    """``C_R delta sum_k w_k**2 / tau_k``."""
    omega = np.asarray(omega, dtype=float)
    n = omega.size + 1
    return float(C_R * delta * np.sum(omega**2 / kern.mesh.tau[2 : n + 1]))


def quadratic_form_theta_lower_bound(doc: DocTable, omega: np.ndarray, delta: float) -> float:
    """``C_R delta sum_k (sum_{j=2..k} theta[k, j] w_j)**2 / tau_k``."""
    omega = np.asarray(omega, dtype=float)
    n = omega.size + 1
    v = doc.theta[2 : n + 1, 2 : n + 1] @ omega
    return float(C_R * delta * np.sum(v**2 / doc.mesh.tau[2 : n + 1]))


@dataclass(frozen=True)
class DccBoundReport:
    delta: float
    min_slack: float
    min_relative_slack: float
    worst_n: int
    worst_j: int
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def dcc_bound_check(mesh: TimeMesh, dcc: DccTable, delta: float | None = None) -> DccBoundReport:
    """Check the sharp upper bounds on the DCC kernels at every ``(n, j)``.

    ``p[n, j] <= c delta**-1 sqrt(tau_j tau)`` for ``j >= 2`` and
    ``p[n, 1] <= tau_1 + c delta**-1 sqrt(tau_2 tau)``, with ``c = R_MAX**2.5``
    and ``tau`` the largest step. ``delta`` defaults to the observed ratio
    margin of the mesh.
    """
    if delta is None:
        delta = check_ratio_condition(mesh).delta_margin
    if not delta > 0:
        raise ValueError("ratio condition fails; the DCC bound needs delta > 0")
    N = mesh.N
    tau = mesh.tau
    tmax = mesh.tau_max
    coef = C_R_DCC / delta * np.sqrt(tmax)

    bound = np.zeros((N + 1, N + 1))
    cols = np.arange(2, N + 1)
    bound[:, cols] = coef * np.sqrt(tau[cols])
    tau2 = tau[2] if N >= 2 else 0.0
    bound[:, 1] = tau[1] + coef * np.sqrt(tau2)

    rows, js = np.tril_indices(N + 1)
    keep = js >= 1
    rows, js = rows[keep], js[keep]
    slack = bound[rows, js] - dcc.p[rows, js]
    rel = slack / bound[rows, js]
    worst = int(np.argmin(rel))
    return DccBoundReport(
        delta=float(delta),
        min_slack=float(slack.min()),
        min_relative_slack=float(rel[worst]),
        worst_n=int(rows[worst]),
        worst_j=int(js[worst]),
        violations=int(np.count_nonzero(slack < 0)),
    )


__all__ = [
    "Bdf2Kernels",
    "C_R",
    "DccBoundReport",
    "DccTable",
    "DocTable",
    "R_MAX",
    "bdf2_kernels",
    "completeness_residual",
    "dcc_bound_check",
    "dcc_explicit",
    "dcc_from_doc",
    "dense_doc_oracle",
    "doc_kernels",
    "orthogonality_residual",
    "quadratic_form_b",
    "quadratic_form_b_lower_bound",
    "quadratic_form_theta",
    "quadratic_form_theta_lower_bound",
    "relation_residual",
    "row_sum_residuals",
    "telescoping_residuals",
]
