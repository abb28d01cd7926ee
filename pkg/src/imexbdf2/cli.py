"""Command line entry point: ``imexbdf2 {solve,convergence,merton,kernels}``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

from . import harness
from .harness import ConfigError
from .mesh import build_graded_mesh
from .problems import (
    REFERENCE_SPOTS,
    MertonParams,
    manufactured_problem,
    merton_problem,
    merton_reference_price,
    price_at,
)
from .spatial import SpatialGrid, l2_norm
from .stepper import SolverError, run

EXIT_CONFIG = 2
EXIT_SOLVER = 3

log = logging.getLogger("imexbdf2")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _on_off(text: str) -> bool:
    v = str(text).lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _common(p: argparse.ArgumentParser, *, N_list=False, gamma_list=False):
    p.add_argument("--config", type=Path, help="flat key = value file; flags override it")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=_float_list if gamma_list else float)
    p.add_argument("--N", type=_int_list if N_list else int)
    p.add_argument("--M", type=_int_list if N_list else int)
    p.add_argument("--T", type=float)
    p.add_argument("--out", type=Path)
    p.add_argument("--fast-integral", type=_on_off, dest="fast_integral")
    p.add_argument("--allow-large", action="store_true", default=None, dest="allow_large",
                   help="lift the desk-scale caps on M and N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imexbdf2", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single run; writes the final grid function")
    _common(p)
    p.add_argument("--problem", choices=("manufactured", "merton"))

    p = sub.add_parser("convergence", help="manufactured-problem temporal convergence table")
    _common(p, N_list=True, gamma_list=True)
    p.add_argument("--error-measure", choices=harness.ERROR_MEASURES, dest="error_measure")
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("merton", help="Merton call price errors at the reference spots")
    _common(p, N_list=True)

    p = sub.add_parser("kernels", help="kernel identity / bound diagnostics")
    _common(p)
    p.add_argument("--tables", type=Path, help="also dump kernel tables as CSV here")
    return parser


DEFAULTS = {
    "solve": dict(problem="manufactured", alpha=0.5, gamma=4.0, N=256, M=1024, T=None,
                  fast_integral=True, allow_large=False),
    "convergence": dict(alpha=0.5, gamma=[1.0, 2.0, 3.0, 4.0], N=[128, 256, 512, 1024],
                        M=[2048], fast_integral=True, error_measure="max", jobs=1,
                        allow_large=False),
    "merton": dict(gamma=4.0, N=[256, 512, 1024, 2048], M=None, T=None,
                   fast_integral=True, allow_large=False),
    "kernels": dict(T=1.0, N=64, gamma=1.0),
}

_CONVERTERS = {
    "alpha": float, "T": float, "jobs": int, "fast_integral": _on_off,
    "allow_large": _on_off, "problem": str, "error_measure": str,
}


def _settings(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    if getattr(args, "config", None) is not None:
        list_keys = {"convergence": {"N", "M", "gamma"}, "merton": {"N", "M"}}.get(cmd, set())
        for key, raw in harness.read_config(args.config).items():
            if key not in opts and key != "out":
                raise ConfigError(f"unknown config key {key!r} for {cmd}")
            try:
                if key == "out":
                    opts[key] = Path(raw)
                elif key in list_keys:
                    opts[key] = _float_list(raw) if key == "gamma" else _int_list(raw)
                elif key in ("N", "M"):
                    opts[key] = int(raw)
                elif key == "gamma":
                    opts[key] = float(raw)
                else:
                    opts[key] = _CONVERTERS[key](raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose") or value is None:
            continue
        opts[key] = value
    return opts


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
        log.info("wrote %s", out)


def cmd_solve(o: dict) -> int:
    harness._check_caps(o["M"], o["N"], o["allow_large"])
    if o["problem"] == "manufactured":
        pb = manufactured_problem(o["alpha"])
        params = None
    else:
        params = MertonParams(T=o["T"]) if o["T"] else MertonParams()
        pb = merton_problem(params)
        if o["M"] % 2:
            raise ConfigError("Merton runs need an even M")
    if o["T"] and o["problem"] == "manufactured" and o["T"] != pb.T:
        raise ConfigError("the manufactured problem is posed on T = 1")
    grid = SpatialGrid(pb.x_l, pb.x_r, o["M"])
    mesh = build_graded_mesh(pb.T, o["N"], o["gamma"])
    res = run(pb, grid, mesh, fast_integral=o["fast_integral"])

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["x", "u"] + (["exact"] if pb.exact else [])
    w.writerow(cols)
    exact = pb.exact(grid.x, pb.T) if pb.exact else None
    for i, x in enumerate(grid.x):
        row = [repr(float(x)), repr(float(res.final[i]))]
        if exact is not None:
            row.append(repr(float(exact[i])))
        w.writerow(row)
    _write(buf.getvalue(), o.get("out"))

    d = res.diagnostics
    summary = (f"M={o['M']} N={o['N']} gamma={o['gamma']} wall={res.wall_time:.2f}s "
               f"tau_max={d.tau_max:.3e} stability_bound={d.stability_bound:.3e} "
               f"C_J={d.C_J:.4f}")
    if exact is not None:
        summary += f" final_L2_error={l2_norm(grid, res.final - exact):.4e}"
    if params is not None:
        for S in REFERENCE_SPOTS:
            summary += f" V({S:g})={price_at(res, params, S):.8f}"
    print(summary, file=sys.stderr)
    return 0


def cmd_convergence(o: dict) -> int:
    Ms = o["M"] if isinstance(o["M"], list) else [o["M"]]
    if len(Ms) != 1:
        raise ConfigError("convergence studies use a single M")
    gammas = o["gamma"] if isinstance(o["gamma"], list) else [o["gamma"]]
    Ns = o["N"] if isinstance(o["N"], list) else [o["N"]]
    report = harness.convergence_study(
        "manufactured", o["alpha"], gammas, Ns, Ms[0],
        measure=o["error_measure"], fast_integral=o["fast_integral"],
        jobs=o["jobs"], allow_large=o["allow_large"],
    )
    _write(harness.emit_csv(report), o.get("out"))
    return 0


def cmd_merton(o: dict) -> int:
    Ns = o["N"] if isinstance(o["N"], list) else [o["N"]]
    Ms = o["M"] if o["M"] is not None else Ns
    Ms = Ms if isinstance(Ms, list) else [Ms]
    if len(Ms) != len(Ns):
        raise ConfigError("--M and --N lists must have equal length")
    params = MertonParams(T=o["T"]) if o["T"] else MertonParams()
    report = harness.merton_study(params, list(zip(Ms, Ns)), gamma=o["gamma"],
                                  fast_integral=o["fast_integral"],
                                  allow_large=o["allow_large"])
    _write(harness.emit_csv(report), o.get("out"))
    for S in REFERENCE_SPOTS:
        log.info("reference V(%g) = %.8f", S, merton_reference_price(params, S))
    return 0


def cmd_kernels(o: dict) -> int:
    N = int(o["N"])
    if N < 1:
        raise ConfigError("N must be >= 1")
    if N > 4096:
        raise ConfigError("kernel tables are dense O(N^2); keep N <= 4096")
    rep = harness.kernel_report(o["T"], N, o["gamma"])
    _write(harness.write_json(rep, None) + "\n", o.get("out"))
    if o.get("tables"):
        Path(o["tables"]).write_text(harness.kernel_table_csv(o["T"], N, o["gamma"]))
    return 0 if rep["pass"] else 1


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence,
            "merton": cmd_merton, "kernels": cmd_kernels}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = _settings(args, parser)
        return COMMANDS[args.command](opts)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
