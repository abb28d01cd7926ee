"""Temporal meshes and adjacent step-ratio diagnostics.

Arrays on :class:`TimeMesh` use the natural 1-based step index: ``tau[k]`` is
the k-th step ``t[k] - t[k-1]`` and ``r[k]`` the ratio ``tau[k] / tau[k-1]``.
Index 0 of ``tau`` and ``r`` is padding and holds 0.0, so both arrays have the
same length ``N + 1`` as ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _ratio_root() -> float:
    # real root of x**3 = (2x + 1)**2, Cardano form
    s = 12.0 * np.sqrt(177.0)
    return (np.cbrt(1196.0 - s) + np.cbrt(1196.0 + s)) / 6.0 + 4.0 / 3.0


R_MAX: float = float(_ratio_root())
"""Upper limit for the adjacent step ratios r_k, k >= 3 (about 4.8645)."""

C_R: float = float(np.sqrt(R_MAX) / (1.0 + R_MAX) ** 2)
"""Positive-definiteness constant sqrt(R_MAX) / (1 + R_MAX)**2."""

C_R_DCC: float = float(R_MAX**2.5)
"""Constant in the sharp bound on complementary kernels, R_MAX**(5/2)."""


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """A strictly increasing time grid ``0 = t[0] < ... < t[N] = T``."""

    t: np.ndarray
    gamma: float = float("nan")

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time mesh needs at least two points")
        if t[0] != 0.0:
            raise ValueError("time mesh must start at t = 0")
        if not np.all(np.diff(t) > 0):
            raise ValueError("time points must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

        tau = np.zeros_like(t)
        tau[1:] = np.diff(t)
        r = np.zeros_like(t)
        r[2:] = tau[2:] / tau[1:-1]
        tau.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "r", r)

    @property
    def N(self) -> int:
        return self.t.size - 1

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def tau_max(self) -> float:
        return float(self.tau[1:].max())

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeMesh":
        return build_graded_mesh(T, N, 1.0)

    def __repr__(self) -> str:
        return f"TimeMesh(T={self.T}, N={self.N}, gamma={self.gamma})"


def build_graded_mesh(T: float, N: int, gamma: float) -> TimeMesh:
    """Graded mesh ``t_k = T (k/N)**gamma``; ``gamma = 1`` is uniform.

    Points come straight from the closed form (no step accumulation), so
    ``t[N] == T`` holds exactly.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    if not gamma >= 1:
        raise ValueError(f"grading exponent must be >= 1, got {gamma}")
    N = int(N)
    t = T * (np.arange(N + 1) / N) ** gamma
    t[-1] = T
    return TimeMesh(t, gamma=float(gamma))


@dataclass(frozen=True)
class RatioReport:
    r2: float
    r_max_observed: float
    delta_margin: float
    satisfies_A1: bool


def check_ratio_condition(mesh: TimeMesh) -> RatioReport:
    """Compare the step ratios of ``mesh`` against the admissible limit.

    The first ratio only has to be positive; the ratios ``r[k]``, ``k >= 3``,
    must stay strictly below :data:`R_MAX`. The returned margin is the largest
    admissible ``delta``; picking a tolerance on it is left to the caller.
    Meshes with ``N < 3`` have no constrained ratio and report 0.
    """
    r2 = float(mesh.r[2]) if mesh.N >= 2 else 0.0
    r_obs = float(mesh.r[3:].max()) if mesh.N >= 3 else 0.0
    margin = R_MAX - r_obs
    return RatioReport(
        r2=r2,
        r_max_observed=r_obs,
        delta_margin=margin,
        satisfies_A1=bool(r2 > 0 and r_obs < R_MAX) if mesh.N >= 2 else True,
    )
