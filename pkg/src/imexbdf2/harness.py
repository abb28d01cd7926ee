"""Experiment orchestration: convergence studies, Merton pricing runs,
kernel diagnostics, CSV emission and flat config files."""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels as K
from .mesh import TimeMesh, build_graded_mesh, check_ratio_condition
from .problems import (
    REFERENCE_SPOTS,
    MertonParams,
    manufactured_problem,
    merton_problem,
    merton_reference_price,
    price_at,
)
from .spatial import SpatialGrid, l2_norm
from .stepper import run

MAX_M = 8192
MAX_N = 2**13

ERROR_MEASURES = ("max", "final")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


# ------------------------------------------------------------------ reports

@dataclass(frozen=True)
class ConvergenceRow:
    alpha: float
    gamma: float
    N: int
    M: int
    error: float
    order: Optional[float] = None


@dataclass(frozen=True)
class MertonRow:
    M: int
    N: int
    spot: float
    error: float
    order: Optional[float] = None


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)

    def orders(self, **match) -> list[float]:
        """Orders of the rows whose fields equal ``match``, first row excluded."""
        out = []
        for row in self.rows:
            if all(getattr(row, k) == v for k, v in match.items()) and row.order is not None:
                out.append(row.order)
        return out

    def errors(self, **match) -> list[float]:
        return [r.error for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]


def observed_orders(errors: Sequence[float]) -> list[Optional[float]]:
    """``log2(e(N)/e(2N))`` attached to the finer run; ``None`` for the first."""
    out: list[Optional[float]] = [None]
    for coarse, fine in zip(errors[:-1], errors[1:]):
        out.append(math.log2(coarse / fine) if coarse > 0 and fine > 0 else float("nan"))
    return out


_CONV_COLUMNS = ("alpha", "gamma", "N", "M", "error", "order")
_MERTON_COLUMNS = ("M", "N", "spot", "error", "order")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def emit_csv(report: ConvergenceReport) -> str:
    if report.rows and isinstance(report.rows[0], MertonRow):
        cols = _MERTON_COLUMNS
    else:
        cols = _CONV_COLUMNS
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in report.rows:
        w.writerow([_fmt(getattr(row, c)) for c in cols])
    return buf.getvalue()


def parse_csv(text: str) -> ConvergenceReport:
    reader = csv.DictReader(io.StringIO(text))
    cols = tuple(reader.fieldnames or ())
    if cols == _CONV_COLUMNS:
        def make(d):
            return ConvergenceRow(float(d["alpha"]), float(d["gamma"]), int(d["N"]), int(d["M"]),
                                  float(d["error"]), float(d["order"]) if d["order"] else None)
    elif cols == _MERTON_COLUMNS:
        def make(d):
            return MertonRow(int(d["M"]), int(d["N"]), float(d["spot"]), float(d["error"]),
                             float(d["order"]) if d["order"] else None)
    else:
        raise ConfigError(f"unknown CSV header {cols}")
    return ConvergenceReport([make(d) for d in reader])


# ------------------------------------------------------------------ studies

def _check_doubling(values: Sequence[int], what: str) -> None:
    if not values:
        raise ConfigError(f"empty {what} list")
    for a, b in zip(values[:-1], values[1:]):
        if b != 2 * a:
            raise ConfigError(f"{what} list must double at each entry, got {list(values)}")


def _check_caps(M: int, N: int, allow_large: bool) -> None:
    if allow_large:
        return
    if M > MAX_M or N > MAX_N:
        raise ConfigError(f"M={M}, N={N} exceed desk-scale caps (M<={MAX_M}, N<={MAX_N}); "
                          "pass allow_large to override")


def manufactured_error(alpha: float, gamma: float, N: int, M: int,
                       measure: str = "max", fast_integral: bool = True) -> float:
    """Discrete L2 error of one manufactured-problem run.

    ``measure="max"`` takes the largest error over the time levels ``1..N``;
    ``"final"`` only looks at ``t = T``.
    """
    if measure not in ERROR_MEASURES:
        raise ConfigError(f"unknown error measure {measure!r}")
    pb = manufactured_problem(alpha)
    grid = SpatialGrid(pb.x_l, pb.x_r, M)
    mesh = build_graded_mesh(pb.T, N, gamma)
    worst = [0.0]

    def watch(n, t, u):
        if n > 0:
            worst[0] = max(worst[0], l2_norm(grid, u - pb.exact(grid.x, t)))

    res = run(pb, grid, mesh, fast_integral=fast_integral, diagnostics=False,
              observer=watch if measure == "max" else None)
    if measure == "final":
        return l2_norm(grid, res.final - pb.exact(grid.x, pb.T))
    return worst[0]


def _error_point(args):
    return manufactured_error(*args)


def convergence_study(problem_id: str, alpha: float, gamma_list: Iterable[float],
                      N_list: Sequence[int], M: int, *, measure: str = "max",
                      fast_integral: bool = True, jobs: int = 1,
                      allow_large: bool = False) -> ConvergenceReport:
    """Temporal convergence table for the manufactured problem."""
    if problem_id != "manufactured":
        raise ConfigError("convergence studies need an exact solution; use 'manufactured' "
                          "(Merton runs go through merton_study)")
    N_list = [int(n) for n in N_list]
    gamma_list = [float(g) for g in gamma_list]
    _check_doubling(N_list, "N")
    for N in N_list:
        _check_caps(M, N, allow_large)
    if not 0.5 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [1/2, 1], got {alpha}")
    tasks = [(alpha, g, N, M, measure, fast_integral) for g in gamma_list for N in N_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            errs = list(pool.map(_error_point, tasks))
    else:
        errs = [_error_point(t) for t in tasks]

    rows = []
    for gi, g in enumerate(gamma_list):
        chunk = errs[gi * len(N_list) : (gi + 1) * len(N_list)]
        for N, e, o in zip(N_list, chunk, observed_orders(chunk)):
            rows.append(ConvergenceRow(alpha, g, N, M, e, o))
    return ConvergenceReport(rows)


def merton_prices(params: MertonParams, M: int, N: int, gamma: float = 4.0,
                  spots: Sequence[float] = REFERENCE_SPOTS,
                  fast_integral: bool = True) -> list[float]:
    if M % 2:
        raise ConfigError("M must be even so the strike is a grid node")
    pb = merton_problem(params)
    grid = SpatialGrid(params.x_l, params.x_r, M)
    res = run(pb, grid, build_graded_mesh(params.T, N, gamma),
              fast_integral=fast_integral, diagnostics=False)
    return [price_at(res, params, S) for S in spots]


def merton_study(params: MertonParams, MN_list: Sequence[tuple[int, int]], *,
                 gamma: float = 4.0, spots: Sequence[float] = REFERENCE_SPOTS,
                 fast_integral: bool = True, allow_large: bool = False) -> ConvergenceReport:
    """Absolute price errors against the series reference at each spot."""
    MN_list = [(int(m), int(n)) for m, n in MN_list]
    _check_doubling([m for m, _ in MN_list], "M")
    _check_doubling([n for _, n in MN_list], "N")
    for m, n in MN_list:
        _check_caps(m, n, allow_large)
    ref = [merton_reference_price(params, S) for S in spots]
    errs = []
    for M, N in MN_list:
        prices = merton_prices(params, M, N, gamma, spots, fast_integral)
        errs.append([abs(p - r) for p, r in zip(prices, ref)])
    errs = np.array(errs)
    rows = []
    for si, S in enumerate(spots):
        for (M, N), e, o in zip(MN_list, errs[:, si], observed_orders(list(errs[:, si]))):
            rows.append(MertonRow(M, N, float(S), float(e), o))
    rows.sort(key=lambda r: (r.M, r.N, r.spot))
    return ConvergenceReport(rows)


# ------------------------------------------------------------ kernel report

def _mesh_from_spec(T: float, N: int, gamma: float) -> TimeMesh:
    if N == 1:
        return TimeMesh(np.array([0.0, T]), gamma=gamma)
    return build_graded_mesh(T, N, gamma)


def kernel_report(T: float = 1.0, N: int = 64, gamma: float = 1.0, *,
                  draws: int = 1000, n_sequences: int = 20, seed: int = 0,
                  tol: float = 1e-12) -> dict:
    """Run every kernel identity, bound and quadratic-form check on one mesh."""
    mesh = _mesh_from_spec(T, N, gamma)
    rng = np.random.default_rng(seed)
    kern = K.bdf2_kernels(mesh)
    doc = K.doc_kernels(kern)
    dcc = K.dcc_from_doc(doc)
    dcc_x = K.dcc_explicit(mesh)
    ratio = check_ratio_condition(mesh)

    lower = np.tril(np.ones((N + 1, N + 1), dtype=bool))
    lower[0, :] = False
    lower[:, 0] = False
    cross = np.abs(dcc.p - dcc_x.p)[lower] / np.abs(dcc_x.p)[lower]

    tele_p, tele_th = 0.0, 0.0
    for _ in range(n_sequences):
        a, b = K.telescoping_residuals(kern, doc, dcc, rng.standard_normal(N + 1))
        tele_p, tele_th = max(tele_p, a), max(tele_th, b)
    sum_theta, sum_p = K.row_sum_residuals(doc, dcc)

    out = {
        "mesh": {"T": T, "N": N, "gamma": gamma},
        "ratio": asdict(ratio),
        "orthogonality": K.orthogonality_residual(doc, kern),
        "completeness": K.completeness_residual(dcc, kern),
        "relation": K.relation_residual(doc, dcc),
        "sum_theta": sum_theta,
        "sum_p": sum_p,
        "telescoping_p": tele_p,
        "telescoping_theta": tele_th,
        "dcc_cross": float(cross.max()),
        "doc_min": float(doc.theta[lower].min()),
    }
    if N <= 64:
        oracle = K.dense_doc_oracle(kern)
        out["doc_oracle"] = float(np.max(np.abs(oracle - doc.theta)[lower] / np.abs(oracle)[lower]))

    identity_keys = ["orthogonality", "completeness", "relation", "sum_theta", "sum_p",
                     "telescoping_p", "telescoping_theta", "dcc_cross"]
    if "doc_oracle" in out:
        identity_keys.append("doc_oracle")
    checks = {k: out[k] <= tol for k in identity_keys}
    checks["doc_positive"] = out["doc_min"] > 0

    if ratio.satisfies_A1 and ratio.delta_margin > 0:
        bound = K.dcc_bound_check(mesh, dcc)
        out["dcc_bound"] = asdict(bound)
        checks["dcc_bound"] = bound.ok
    if N >= 2 and ratio.satisfies_A1:
        qb, qt = quadratic_form_violations(kern, doc, ratio.delta_margin, draws, rng)
        out["quadratic_b_violations"] = qb
        out["quadratic_theta_violations"] = qt
        checks["quadratic_forms"] = qb == 0 and qt == 0
    out["checks"] = checks
    out["pass"] = all(checks.values())
    return out


def quadratic_form_violations(kern: K.Bdf2Kernels, doc: K.DocTable, delta: float,
                              draws: int, rng: np.random.Generator) -> tuple[int, int]:
    """Count random ``omega`` for which either quadratic-form lower bound fails.

    Draws alternate between plain Gaussian vectors, vectors scaled by
    ``sqrt(tau_k)`` and vectors concentrated on the first few entries.
    """
    n = kern.N
    tau = kern.mesh.tau[2:]
    bad_b = bad_t = 0
    for d in range(draws):
        w = rng.standard_normal(n - 1)
        if d % 3 == 1:
            w *= np.sqrt(tau)
        elif d % 3 == 2:
            w[min(3, n - 1):] *= 1e-3
        if K.quadratic_form_b(kern, w) < K.quadratic_form_b_lower_bound(kern, w, delta):
            bad_b += 1
        if K.quadratic_form_theta(doc, w) < K.quadratic_form_theta_lower_bound(doc, w, delta):
            bad_t += 1
    return bad_b, bad_t


def kernel_table_csv(T: float, N: int, gamma: float) -> str:
    """Kernel tables in long form: ``n, j, b0, b1, theta, p``.

    ``b0``/``b1`` repeat the row-``n`` BDF2 kernels on every line of that row.
    """
    mesh = _mesh_from_spec(T, N, gamma)
    kern = K.bdf2_kernels(mesh)
    doc = K.doc_kernels(kern)
    dcc = K.dcc_from_doc(doc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "j", "b0", "b1", "theta", "p"])
    for n in range(1, N + 1):
        for j in range(1, n + 1):
            w.writerow([n, j] + [_fmt(v) for v in (kern.b0[n], kern.b1[n],
                                                    doc.theta[n, j], dcc.p[n, j])])
    return buf.getvalue()


def write_json(obj: dict, path: Optional[Path]) -> str:
    text = json.dumps(obj, indent=2, default=_json_default)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


# ------------------------------------------------------------------- config

def read_config(path: Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` comments allowed; keys as CLI flags."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + Path(path).read_text())
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {k.strip().lstrip("-").replace("-", "_"): v.strip() for k, v in parser["run"].items()}
