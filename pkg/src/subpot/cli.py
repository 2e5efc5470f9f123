"""Command-line interface.

One process per run; outputs are written atomically (temp file + rename)
with fixed %.12e float formatting so identical configurations produce
byte-identical artifacts.  Exit codes: 0 success, 2 model/argument
validation, 3 numerical-accuracy failure (the achieved error is printed),
4 precondition failure (wrong regime, budget, infinite mean).  Errors are
emitted as a single JSON object on stderr.

SUBPOT_THREADS caps worker parallelism; the current implementation
evaluates serially with fixed-order reductions, so the cap never changes
results (it exists so deployments can pin an upper bound).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from .asymptotics import check_du_infinity, check_du_zero, check_linear_zero, check_zero_series
from .convolve import ConvolutionEngine, atom_sums
from .density import laplace_crosscheck, series_radius, u_series, u_volterra
from .errors import (
    AccuracyFailureError,
    ModelValidationError,
    PreconditionError,
    SubpotError,
)
from .inversion import invert_density, invert_derivative
from .model import Side, load_model
from .smoothness import classify_point, one_sided_fd

_FMT = "%.12e"


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return _FMT % value


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".subpot-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _parse_range(spec: str, spacing: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) == 1:
        return np.array([float(x) for x in spec.split(",")])
    if len(parts) != 3:
        raise ModelValidationError([("--x", "expected min:max:steps or a comma list")])
    lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    if steps < 2:
        raise ModelValidationError([("--x", "steps must be >= 2")])
    if spacing == "geometric":
        if lo <= 0:
            raise ModelValidationError([("--x", "geometric spacing needs x_min > 0")])
        return np.geomspace(lo, hi, steps)
    return np.linspace(lo, hi, steps)


def _threads_cap() -> int:
    raw = os.environ.get("SUBPOT_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ModelValidationError([("SUBPOT_THREADS", f"not an integer: {raw!r}")])
    if cap < 1:
        raise ModelValidationError([("SUBPOT_THREADS", "must be >= 1")])
    return cap


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_validate(args) -> int:
    model = load_model(args.model)
    doc = {
        "valid": True,
        "hash": model.model_hash(),
        "drift": model.drift,
        "q": model.q,
        "atoms": len(model.atomic.locations),
        "ac": model.ac.kind,
        "bg_index": model.bg_index(),
        "mean": None if math.isinf(model.mean()) else model.mean(),
    }
    _emit(args, json.dumps(doc) + "\n")
    return 0


def _eval_rows(model, xs, args):
    x_max = float(np.max(xs))
    engine = ConvolutionEngine(model, x_max + 1.0)
    grid = None
    radius = series_radius(model, x_max, engine)
    route = args.route
    if route in ("auto", "volterra"):
        grid = u_volterra(model, x_max + 0.5, tol=args.tol, engine=None)
    rows = []
    for x in xs:
        x = float(x)
        if route == "inversion":
            u, err = invert_density(model, x, N=args.order, lam=args.contour_lambda,
                                    tol=args.tol, theta_cut=args.theta_cut)
            method = "inversion"
        elif route == "series" or (route == "auto" and x <= radius):
            # a forced series route outside the radius raises (exit 4)
            u, err, _ = u_series(model, x, tol=args.tol, engine=engine)
            method = "series"
        else:
            u, err = float(grid(x)), float(grid.err_at(x))
            method = "volterra"
        du_l = du_r = None
        if not args.no_derivatives:
            if args.derivatives == "inversion":
                du_l, _ = invert_derivative(model, x, Side.LEFT, N=args.order,
                                            lam=args.contour_lambda, tol=args.tol)
                du_r, _ = invert_derivative(model, x, Side.RIGHT, N=args.order,
                                            lam=args.contour_lambda, tol=args.tol)
            else:
                fd_grid = grid if grid is not None else u_volterra(model, x_max + 0.5, tol=args.tol)
                grid = fd_grid
                try:
                    du_l, _ = one_sided_fd(fd_grid, x, 1, Side.LEFT)
                except SubpotError:
                    du_l = None
                try:
                    du_r, _ = one_sided_fd(fd_grid, x, 1, Side.RIGHT)
                except SubpotError:
                    du_r = None
        rows.append((x, u, du_l, du_r, err, method))
    return rows


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    xs = _parse_range(args.x, args.spacing)
    if np.any(xs < 0):
        raise ModelValidationError([("--x", "x must be >= 0")])
    xs = np.where(xs == 0.0, 1e-300, xs)
    rows = _eval_rows(model, xs, args)
    if args.format == "json":
        doc = [
            {"x": r[0], "u": r[1], "du_left": r[2], "du_right": r[3], "err_est": r[4], "method": r[5]}
            for r in rows
        ]
        _emit(args, json.dumps(doc) + "\n")
    else:
        lines = ["x,u,du_left,du_right,err_est,method"]
        for r in rows:
            lines.append(
                ",".join([_fmt(r[0]), _fmt(r[1]), _fmt(r[2]), _fmt(r[3]), _fmt(r[4]), r[5]])
            )
        _emit(args, "\n".join(lines) + "\n")
    return 0


def _cmd_gk(args) -> int:
    model = load_model(args.model)
    sums = atom_sums(model.atomic, args.k, args.xmax)
    if args.format == "json":
        doc = [
            {"value": e.value, "min_jumps": e.min_jumps, "representations": e.representations}
            for e in sums.entries
        ]
        _emit(args, json.dumps(doc) + "\n")
    else:
        lines = ["value,min_jumps,representations"]
        for e in sums.entries:
            lines.append(f"{_fmt(e.value)},{e.min_jumps},{e.representations}")
        _emit(args, "\n".join(lines) + "\n")
    return 0


def _cmd_conv(args) -> int:
    model = load_model(args.model)
    engine = ConvolutionEngine(model, args.xmax)
    kinks = [float(v) for v in engine.kinks(args.n) if v < args.xmax]
    xs = sorted(set(np.linspace(args.xmax / args.steps, args.xmax, args.steps).tolist() + kinks))
    lines = ["x,n,value_left,value_right"]
    for x in xs:
        left = engine.power(args.n, x, Side.LEFT)
        right = engine.power(args.n, x, Side.RIGHT)
        lines.append(",".join([_fmt(x), str(args.n), _fmt(left), _fmt(right)]))
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _cmd_smoothness(args) -> int:
    model = load_model(args.model)
    report = classify_point(model, args.x, k_max=args.kmax, measure=args.measure)
    _emit(args, report.to_json() + "\n")
    return 0


def _cmd_asymptotics(args) -> int:
    model = load_model(args.model)
    if args.law == "zero-series":
        check = check_zero_series(model, args.n)
    elif args.law == "linear-zero":
        check = check_linear_zero(model)
    elif args.law == "du-zero":
        check = check_du_zero(model)
    else:
        check = check_du_infinity(model)
    verdict = {
        "law": check.law,
        "passed": check.passed,
        "degenerate": check.degenerate,
        "fitted_slope": check.fitted_slope,
        "notes": check.notes,
    }
    if args.format == "json":
        verdict["rows"] = [
            {"x": float(x), "lhs": float(l), "rhs": float(r), "ratio": float(q)}
            for x, l, r, q in zip(check.xs, check.lhs, check.rhs, check.ratio)
        ]
        _emit(args, json.dumps(verdict) + "\n")
    else:
        lines = ["x,lhs,rhs,ratio"]
        for x, l, r, q in zip(check.xs, check.lhs, check.rhs, check.ratio):
            lines.append(",".join([_fmt(x), _fmt(l), _fmt(r), _fmt(q)]))
        _emit(args, "\n".join(lines) + "\n")
        sys.stdout.write(json.dumps(verdict) + "\n")
    return 0


def _cmd_simulate(args) -> int:
    from .simulate import creep_prob, creep_prob_killed

    model = load_model(args.model)
    xs = _parse_range(args.x, "linear") if ":" in args.x else np.array([float(v) for v in args.x.split(",")])
    lines = ["x,q,p_hat,ci95,n_paths,eps,seed"]
    for x in xs:
        if args.q > 0:
            est = creep_prob_killed(model, args.q, float(x), args.paths, seed=args.seed, eps=args.eps)
        else:
            est = creep_prob(model, float(x), args.paths, seed=args.seed, eps=args.eps)
        lines.append(
            ",".join(
                [_fmt(est.x), _fmt(est.q), _fmt(est.p_hat), _fmt(est.ci95),
                 str(est.n_paths), _fmt(est.truncation_eps), str(est.seed)]
            )
        )
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _cmd_crosscheck(args) -> int:
    model = load_model(args.model)
    lams = [float(v) for v in args.lam.split(",")]
    lines = ["lambda,lhs,rhs,abs_diff,tail_bound"]
    worst = 0.0
    for lam in lams:
        res = laplace_crosscheck(model, lam, tol=args.tol)
        worst = max(worst, res.abs_diff)
        lines.append(
            ",".join([_fmt(res.lam), _fmt(res.lhs), _fmt(res.rhs), _fmt(res.abs_diff), _fmt(res.tail_bound)])
        )
    _emit(args, "\n".join(lines) + "\n")
    if args.assert_tol is not None and worst > args.assert_tol:
        raise AccuracyFailureError("transform crosscheck disagreement", worst, args.assert_tol)
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subpot", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("validate", help="parse and validate a model file")
    common(p)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("eval", help="density (and derivative) on an x grid")
    common(p)
    p.add_argument("--x", required=True, help="min:max:steps or comma list")
    p.add_argument("--spacing", choices=("linear", "geometric"), default="linear")
    p.add_argument("--route", choices=("auto", "series", "volterra", "inversion"), default="auto")
    p.add_argument("--order", type=int, default=None, help="split order N for the inversion route")
    p.add_argument("--contour-lambda", type=float, default=None)
    p.add_argument("--theta-cut", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--derivatives", choices=("fd", "inversion"), default="fd")
    p.add_argument("--no-derivatives", action="store_true")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("invert", help="density via the Bromwich route only")
    common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--spacing", choices=("linear", "geometric"), default="linear")
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--contour-lambda", type=float, default=None)
    p.add_argument("--theta-cut", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--derivatives", choices=("fd", "inversion"), default="inversion")
    p.add_argument("--no-derivatives", action="store_true")
    p.set_defaults(fn=_cmd_eval, route="inversion")

    p = sub.add_parser("gk", help="atom-sum sets up to k jumps")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--xmax", type=float, required=True)
    p.set_defaults(fn=_cmd_gk)

    p = sub.add_parser("conv", help="dump an n-fold convolution grid (debugging)")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--xmax", type=float, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.set_defaults(fn=_cmd_conv)

    p = sub.add_parser("smoothness", help="differentiability report at a point")
    common(p)
    p.add_argument("--x", required=True, help="point (rational strings allowed)")
    p.add_argument("--kmax", type=int, default=4)
    p.add_argument("--measure", action="store_true", help="also measure derivative jumps")
    p.set_defaults(fn=_cmd_smoothness)

    p = sub.add_parser("asymptotics", help="limit-law checks")
    common(p)
    p.add_argument("--law", choices=("zero-series", "linear-zero", "du-zero", "du-infinity"),
                   required=True)
    p.add_argument("--n", type=int, default=0, help="series order for zero-series")
    p.set_defaults(fn=_cmd_asymptotics)

    p = sub.add_parser("simulate", help="Monte Carlo creeping probability")
    common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--q", type=float, default=0.0)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("crosscheck", help="transform identity check")
    common(p)
    p.add_argument("--lambda", dest="lam", required=True, help="comma list of abscissas")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--assert-tol", type=float, default=None,
                   help="exit 3 when the worst disagreement exceeds this")
    p.set_defaults(fn=_cmd_crosscheck)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _threads_cap()
        return args.fn(args)
    except ModelValidationError as exc:
        sys.stderr.write(json.dumps({
            "error": "validation", "message": str(exc),
            "violations": [{"pointer": p, "message": m} for p, m in exc.violations],
        }) + "\n")
        return 2
    except AccuracyFailureError as exc:
        sys.stderr.write(json.dumps({
            "error": "accuracy", "message": str(exc),
            "achieved": exc.achieved, "target": exc.target,
        }) + "\n")
        return 3
    except PreconditionError as exc:
        sys.stderr.write(json.dumps({"error": "precondition", "message": str(exc)}) + "\n")
        return 4
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(json.dumps({"error": "validation", "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
