"""Concrete PIDE instances: a manufactured-solution benchmark and the Merton
jump-diffusion European call."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr


@dataclass(frozen=True)
class PideProblem:
    """``u_t - c1 u_xx + c2 u_x + c3 u + J(u) = f`` on ``(x_l, x_r) x (0, T]``.

    ``J(u)(x) = int u(z, t) rho(z - x, t) dz`` over the domain. Callables are
    vectorised: ``rho(y, t)``, ``f(x, t)``, ``u0(x)``, ``boundary(x, t)`` and
    the optional ``exact(x, t)`` all accept ndarrays for ``x``/``y``.
    ``alpha`` records the time-regularity exponent of the solution.
    """

    c1: float
    c2: float
    c3: float
    rho: Callable[[np.ndarray, float], np.ndarray]
    f: Callable[[np.ndarray, float], np.ndarray]
    u0: Callable[[np.ndarray], np.ndarray]
    boundary: Callable[[np.ndarray, float], np.ndarray]
    x_l: float
    x_r: float
    T: float
    alpha: float = 1.0
    exact: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    rho_time_dependent: bool = False
    name: str = "pide"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")
        if not self.x_r > self.x_l:
            raise ValueError("need x_l < x_r")
        if not self.T > 0:
            raise ValueError("T must be positive")


def manufactured_problem(alpha: float) -> PideProblem:
    """Exact solution ``(1 + t**alpha) sin x`` on ``(0, pi) x (0, 1]``.

    ``c1 = c2 = c3 = 1``, ``rho = 1`` and zero boundary data; the source is
    ``alpha t**(alpha-1) sin x + (1 + t**alpha)(2 sin x + cos x + 2)``, the
    trailing 2 coming from ``int_0^pi sin z dz``.
    """
    if not 0.5 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [1/2, 1], got {alpha}")

    def exact(x, t):
        return (1.0 + t**alpha) * np.sin(x)

    def f(x, t):
        x = np.asarray(x, dtype=float)
        g = 1.0 + t**alpha
        dt = alpha * t ** (alpha - 1.0) if t > 0 else np.inf
        return dt * np.sin(x) + g * (2.0 * np.sin(x) + np.cos(x) + 2.0)

    def rho(y, t):
        return np.ones_like(np.asarray(y, dtype=float))

    return PideProblem(
        c1=1.0, c2=1.0, c3=1.0,
        rho=rho, f=f,
        u0=np.sin,
        boundary=lambda x, t: np.zeros_like(np.asarray(x, dtype=float)),
        x_l=0.0, x_r=math.pi, T=1.0,
        alpha=alpha, exact=exact, name="manufactured",
    )


@dataclass(frozen=True)
class MertonParams:
    sigma: float = 0.15
    r_I: float = 0.05
    mu_M: float = -0.9
    sigma_M: float = 0.45
    lam: float = 0.1
    K: float = 100.0
    T: float = 0.25
    x_l: float = -1.5
    x_r: float = 1.5

    def __post_init__(self):
        for name in ("sigma", "sigma_M", "lam", "K", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.x_l < 0 < self.x_r:
            raise ValueError("need x_l < 0 < x_r")

    @property
    def kappa(self) -> float:
        """Mean relative jump size ``E[e^Y] - 1``."""
        return math.expm1(self.mu_M + 0.5 * self.sigma_M**2)


REFERENCE_SPOTS = (90.0, 100.0, 110.0)


def jump_density(p: MertonParams, y: np.ndarray) -> np.ndarray:
    """Normal density of the log-jump size."""
    y = np.asarray(y, dtype=float)
    return np.exp(-((y - p.mu_M) ** 2) / (2.0 * p.sigma_M**2)) / (p.sigma_M * math.sqrt(2.0 * math.pi))


def merton_problem(p: MertonParams) -> PideProblem:
    """Merton call in log-moneyness ``x = ln(S/K)`` and time to maturity ``t``.

    The jump gain term enters through a negative kernel ``rho = -lam * phi``;
    the loss ``lam u`` sits in ``c3``.
    """
    kappa = p.kappa
    c1 = 0.5 * p.sigma**2
    c2 = -(p.r_I - 0.5 * p.sigma**2 - p.lam * kappa)
    c3 = p.r_I + p.lam
    K, xr, r = p.K, p.x_r, p.r_I

    def rho(y, t):
        return -p.lam * jump_density(p, y)

    def f(x, t):
        return np.zeros_like(np.asarray(x, dtype=float))

    def u0(x):
        return np.maximum(K * np.expm1(np.asarray(x, dtype=float)), 0.0)

    def boundary(x, t):
        x = np.asarray(x, dtype=float)
        return np.where(x >= xr, K * math.exp(xr) - K * math.exp(-r * t), 0.0)

    return PideProblem(
        c1=c1, c2=c2, c3=c3,
        rho=rho, f=f, u0=u0, boundary=boundary,
        x_l=p.x_l, x_r=p.x_r, T=p.T,
        alpha=0.5, name="merton", meta={"params": p},
    )


def _bs_call(S, K, T, r, sigma):
    sd = sigma * math.sqrt(T)
    d1 = (math.log(S / K) + (r + 0.5 * sigma**2) * T) / sd
    d2 = d1 - sd
    return S * ndtr(d1) - K * math.exp(-r * T) * ndtr(d2)


def merton_reference_price(p: MertonParams, S: float, n_terms: int = 6) -> float:
    """Merton's series: Poisson-weighted Black-Scholes prices, ``n_terms`` terms."""
    if n_terms < 6:
        raise ValueError("use at least six series terms")
    lam_p = p.lam * (1.0 + p.kappa)
    log_jump = p.mu_M + 0.5 * p.sigma_M**2  # ln(1 + kappa)
    total = 0.0
    for n in range(n_terms):
        weight = math.exp(-lam_p * p.T) * (lam_p * p.T) ** n / math.factorial(n)
        r_n = p.r_I - p.lam * p.kappa + n * log_jump / p.T
        sig_n = math.sqrt(p.sigma**2 + n * p.sigma_M**2 / p.T)
        total += weight * _bs_call(S, p.K, p.T, r_n, sig_n)
    return float(total)


def lagrange_cubic(x_nodes: np.ndarray, values: np.ndarray, x: float) -> float:
    """Cubic Lagrange interpolation through the four nodes nearest ``x``.

    Returns the nodal value when ``x`` coincides with a node.
    """
    h = x_nodes[1] - x_nodes[0]
    s = (x - x_nodes[0]) / h
    k = int(round(s))
    if abs(s - k) < 1e-12 and 0 <= k < x_nodes.size:
        return float(values[k])
    i0 = int(np.floor(s)) - 1
    i0 = min(max(i0, 0), x_nodes.size - 4)
    xs = x_nodes[i0 : i0 + 4]
    ys = values[i0 : i0 + 4]
    out = 0.0
    for a in range(4):
        w = 1.0
        for b in range(4):
            if b != a:
                w *= (x - xs[b]) / (xs[a] - xs[b])
        out += w * ys[a]
    return float(out)


def price_at(result, p: MertonParams, S: float) -> float:
    """Option value at spot ``S`` from the final snapshot of a solver run."""
    x = math.log(S / p.K)
    if not p.x_l < x < p.x_r:
        raise ValueError(f"spot {S} lies outside the truncated log-price domain")
    return lagrange_cubic(result.grid.x, result.final, x)
