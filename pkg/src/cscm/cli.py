"""Command line interface: ``cscm <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (reported as JSON on
stderr) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .bench import compare_reference, load_config, run_mse_study
from .diagnostics import (
    LambdaDensity,
    asymptotic_msle,
    asymptotic_plugin,
    hellinger,
    kl,
    l1_distance,
    sup_error,
)
from .errors import CSCMError
from .histogram import DEFAULT_L, build_histogram, default_k, make_grid
from .model import model_from_name, read_sample_csv, write_sample_csv
from .msle import FitResult, fit_msle, lattice
from .plugin import grid_cdf_eval, kernel_plugin_cdf, plugin_grid_cdf
from .sampler import draw_sample


def fmt_float(x) -> str:
    """17 significant digits, always recognizable as a float."""
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    s = f"{x:.17g}"
    return s if any(c in s for c in ".en") else s + ".0"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, default=_json_default) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _existing(path):
    if not os.path.isfile(path):
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return path


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _support(sample, m1, m2):
    t_max, z_max = sample.support()
    return (m1 if m1 is not None else t_max), (m2 if m2 is not None else z_max)


# --- subcommands ------------------------------------------------------------

def cmd_simulate(args):
    sample = draw_sample(model_from_name(args.model), args.n, args.seed)
    if args.out == "-":
        sys.stdout.write("t,z\n")
        for o in sample:
            sys.stdout.write(f"{o.t:.17g},{o.z:.17g}\n")
    else:
        write_sample_csv(sample, args.out)
    return 0


def cmd_fit(args):
    sample = read_sample_csv(args.data)
    m1, m2 = _support(sample, args.m1, args.m2)
    k = args.k if args.k is not None else default_k(sample.n)
    hist = build_histogram(sample, make_grid(m1, m2, k, args.l))
    if args.dump_hist:
        hist.dump_json(args.dump_hist)
    fit = fit_msle(hist, tol=args.tol, max_iter=args.max_iter, allow_empty=args.allow_empty,
                   accelerate=not args.plain_em)
    _dump_json(fit.to_dict(), args.out)
    if args.out != "-":
        summary = {"converged": fit.converged, "iterations": fit.iterations,
                   "objective": fit.objective, "fenchel_gap": fit.fenchel_gap,
                   "kkt_residual": fit.kkt_residual, "degenerate_steps": fit.degenerate_steps}
        _dump_json(summary, "-")
    return 0


def cmd_eval(args):
    fit = FitResult.load_json(args.fit)
    if args.grid_out:
        T, Z, F = lattice(fit, args.size)
        with open(args.grid_out, "w") as fh:
            fh.write("t,z,F\n")
            for t, z, f in zip(T, Z, F):
                fh.write(f"{fmt_float(t)},{fmt_float(z)},{fmt_float(f)}\n")
    if args.t is not None:
        print(fmt_float(fit.cdf(args.t, args.z)))
    return 0


def cmd_plugin(args):
    sample = read_sample_csv(args.data)
    if args.method == "kernel":
        if args.bandwidth is None:
            raise _UsageError("--method kernel needs --bandwidth")
        value = kernel_plugin_cdf(sample, args.t, args.z, args.bandwidth)
    else:
        m1, m2 = _support(sample, args.m1, args.m2)
        gc = plugin_grid_cdf(sample, make_grid(m1, m2, args.k, args.l))
        value = grid_cdf_eval(gc, args.t, args.z)
    print(fmt_float(value))
    return 0


def diag_report(fit: FitResult, model, points):
    """Distances between fitted, histogram and true densities plus asymptotics."""
    truth = LambdaDensity.from_model(model)
    fitted = LambdaDensity.from_fit(fit, model)
    grid = fit.grid
    report = {"model": model.kind, "grid": grid.to_dict(), "converged": fit.converged}
    same_support = (grid.m1, grid.m2) == (model.m1, model.m2)
    dist = {}
    if same_support:
        dist["fit_vs_true"] = _distances(fitted, truth)
        if fit.histogram is not None:
            dist["histogram_vs_true"] = _distances(LambdaDensity.from_histogram(fit.histogram), truth)
    report["distances"] = dist
    report["sup_error_probe"] = sup_error(fit.cdf, model)

    n = fit.histogram.n if fit.histogram is not None else None
    c1 = grid.delta * n ** 0.2 if n else None
    preds = []
    for t0, z0 in points:
        entry = {"t0": t0, "z0": z0, "true_cdf": float(model.cdf(t0, z0)),
                 "fitted_cdf": float(fit.cdf(t0, z0))}
        if c1 is not None:
            b, s2 = asymptotic_msle(model, t0, z0, c1)
            b2, s22 = asymptotic_plugin(model, t0, z0, c1)
            scale = n ** -0.8
            entry.update({"c1": c1, "msle_bias": b, "msle_variance": s2,
                          "msle_predicted_mse": (b * b + s2) * scale,
                          "plugin_bias": b2, "plugin_variance": s22,
                          "plugin_predicted_mse": (b2 * b2 + s22) * scale})
        preds.append(entry)
    report["asymptotics"] = preds
    return report


def _distances(p, q):
    return {"hellinger": hellinger(p, q), "kl": kl(p, q), "l1": l1_distance(p, q)}


def cmd_diag(args):
    fit = FitResult.load_json(args.fit)
    model = model_from_name(args.model)
    points = [tuple(p) for p in args.point] if args.point else [(0.2, 0.6), (0.4, 0.6), (0.6, 0.6), (0.8, 0.6)]
    _dump_json(diag_report(fit, model, points), args.report)
    return 0


def cmd_bench(args):
    config = load_config(args.config)
    table = run_mse_study(config, workers=args.workers)
    table.to_csv(args.out)
    report = compare_reference(table)
    if args.compare:
        _dump_json(report.to_dict(), args.compare)
    c = report.compared
    print(f"compared {len(c)} cells with published values; {len(report.flagged)} outside the factor-2 band")
    return 0


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cscm", description="Maximum smoothed likelihood estimation "
                                "for current status data with a continuous mark.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", help="draw a sample from a built-in model")
    s.add_argument("--model", required=True, choices=["uniform", "polynomial"])
    s.add_argument("--n", required=True, type=_positive_int)
    s.add_argument("--seed", required=True, type=int)
    s.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit the MSLE to a t,z CSV file")
    s.add_argument("--data", required=True, type=_existing)
    s.add_argument("--k", type=_positive_int, help="time cells (default from the sample size)")
    s.add_argument("--l", type=_positive_int, default=DEFAULT_L, help="mark cells")
    s.add_argument("--tol", type=_positive_float, default=1e-10)
    s.add_argument("--max-iter", type=_positive_int, default=10**6)
    s.add_argument("--m1", type=_positive_float, help="time support bound (default: largest t)")
    s.add_argument("--m2", type=_positive_float, help="mark support bound (default: largest z)")
    s.add_argument("--allow-empty", action="store_true", help="fit even if some cells are empty")
    s.add_argument("--plain-em", action="store_true", help="disable extrapolation")
    s.add_argument("--dump-hist", metavar="FILE", help="also write the histogram as JSON")
    s.add_argument("--out", default="-", help="fit JSON path ('-' for stdout)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("eval", help="evaluate a fitted distribution function")
    s.add_argument("--fit", required=True, type=_existing)
    s.add_argument("--t", type=float)
    s.add_argument("--z", type=float)
    s.add_argument("--grid-out", metavar="FILE", help="write a t,z,F lattice for contour plots")
    s.add_argument("--size", type=_positive_int, default=51, help="lattice points per axis")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("plugin", help="plug-in estimate of F0 at one point")
    s.add_argument("--data", required=True, type=_existing)
    s.add_argument("--method", required=True, choices=["grid", "kernel"])
    s.add_argument("--k", type=_positive_int, default=10)
    s.add_argument("--l", type=_positive_int, default=5)
    s.add_argument("--m1", type=_positive_float)
    s.add_argument("--m2", type=_positive_float)
    s.add_argument("--bandwidth", type=_positive_float)
    s.add_argument("--t", required=True, type=float)
    s.add_argument("--z", required=True, type=float)
    s.set_defaults(func=cmd_plugin)

    s = sub.add_parser("diag", help="distances and asymptotic predictions for a fit")
    s.add_argument("--fit", required=True, type=_existing)
    s.add_argument("--model", required=True, choices=["uniform", "polynomial"])
    s.add_argument("--point", nargs=2, type=float, action="append", metavar=("T", "Z"))
    s.add_argument("--report", default="-", help="JSON path ('-' for stdout)")
    s.set_defaults(func=cmd_diag)

    s = sub.add_parser("bench", help="Monte Carlo MSE study")
    s.add_argument("--config", required=True, type=_existing)
    s.add_argument("--out", required=True, help="CSV path")
    s.add_argument("--compare", metavar="FILE", help="also write the reference comparison as JSON")
    s.add_argument("--workers", type=_positive_int, help="worker processes (capped by CSCM_THREADS)")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and args.grid_out is None and (args.t is None or args.z is None):
        parser.error("eval needs --t and --z, or --grid-out")
    if args.command == "eval" and (args.t is None) != (args.z is None):
        parser.error("give both --t and --z")
    try:
        return args.func(args)
    except _UsageError as e:
        parser.error(str(e))
    except CSCMError as e:
        sys.stderr.write(json.dumps(e.to_dict(), default=_json_default) + "\n")
        return 1
    except (ValueError, OSError) as e:
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
