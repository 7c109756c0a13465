"""Command-line interface.

Exit status: 0 on success, 1 for domain or configuration errors (including
non-integrable bivariate configurations), 2 for numerical failures such as
non-convergence.  Errors are reported as one line on standard error:
``error: <ErrorClass>: <message>``.

Numbers are written with 8 significant digits; CSV files are comma separated
with a header row and LF line endings.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .baseline import parse_baseline
from .bivariate import (
    conditional_moment_k,
    gibbs_sample,
    joint_log_density,
    joint_survival,
    marginal_density_x,
    mode_find,
    model_from_config,
)
from .characterize import lorenz_order_check, verify_suite
from .errors import ConfigurationError, DomainError, NonIntegrableError, NumericalError, RBGError
from .estimate import ThetaVector, fit_mle
from .numerics import DEFAULT_QUAD, QuadratureSpec
from .order_stats import SeriesTruncation, min_survival, min_survival_series
from .univariate import RBGDistribution, fit_univariate_a, shape_standard_error

__all__ = ["main", "main_entry", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def fmt(value) -> str:
    """8 significant digits, '.' decimal separator regardless of locale."""
    if value is None:
        return ""
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.8g}"


def _round(obj):
    # JSON numbers rounded to the same 8 significant digits as text output
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(fmt(v)) if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    return obj


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}") from None


def _quad(args) -> QuadratureSpec:
    nodes = args.quad_nodes
    if nodes is None and os.environ.get("RBG_QUAD_NODES"):
        try:
            nodes = int(os.environ["RBG_QUAD_NODES"])
        except ValueError:
            raise ConfigurationError("RBG_QUAD_NODES must be an integer") from None
    if nodes is None:
        return DEFAULT_QUAD
    try:
        return QuadratureSpec(nodes, DEFAULT_QUAD.abs_tol, DEFAULT_QUAD.rel_tol, DEFAULT_QUAD.max_refinements)
    except DomainError as exc:
        raise ConfigurationError(str(exc)) from None


def _write_csv(path, header, rows, stream):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    _emit(buf.getvalue(), path, stream)


def _write_json(obj, path, stream):
    _emit(json.dumps(_round(obj), indent=2, allow_nan=False) + "\n", path, stream)


def _emit(text, path, stream):
    if path in (None, "-"):
        stream.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _read_columns(path) -> np.ndarray:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    if len(rows) < 2:
        raise ConfigurationError(f"{path}: need a header row and at least one data row")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError:
        raise DomainError(f"{path}: non-numeric entry") from None
    return data


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc.msg})") from None


def _dist(args) -> RBGDistribution:
    return RBGDistribution(args.a, parse_baseline(args.baseline))


def _model(args):
    return model_from_config(_read_json(args.model), _quad(args))


def _curve_grid(d: RBGDistribution, points: int) -> np.ndarray:
    return np.asarray(d.quantile(np.linspace(0.005, 0.995, points)), dtype=float)


# --- subcommands -------------------------------------------------------------

_WHAT = {
    "pdf": "pdf", "logpdf": "logpdf", "cdf": "cdf", "survival": "survival",
    "hazard": "hazard", "quantile": "quantile",
}


def cmd_eval(args, out):
    d = _dist(args)
    xs = _floats(args.x)
    values = np.atleast_1d(getattr(d, _WHAT[args.what])(np.asarray(xs)))
    if len(xs) == 1 and args.output is None:
        out.write(fmt(values[0]) + "\n")
    else:
        _write_csv(args.output, ["p" if args.what == "quantile" else "x", args.what],
                   zip(xs, values), out)
    if args.emit_curve:
        grid = _curve_grid(d, args.curve_points)
        _write_csv(args.emit_curve, ["x", "pdf"], zip(grid, d.pdf(grid)), out)


def cmd_sample(args, out):
    draws = _dist(args).sample(args.n, seed=args.seed)
    _write_csv(args.output, ["x"], ((v,) for v in draws), out)


def cmd_fit(args, out):
    data = _read_columns(args.data)
    if args.baseline is not None:
        if args.baseline_x or args.baseline_y:
            raise ConfigurationError("give either --baseline or --baseline-x/--baseline-y")
        baseline = parse_baseline(args.baseline)
        a = fit_univariate_a(data[:, 0], baseline)
        n = data.shape[0]
        _write_json({"a": a, "standard_error": shape_standard_error(a, n), "n": n,
                     "baseline": baseline.describe()}, args.output, out)
        return
    if not (args.baseline_x and args.baseline_y):
        raise ConfigurationError("fit needs --baseline or both --baseline-x and --baseline-y")
    if data.ndim != 2 or data.shape[1] != 2:
        raise DomainError("bivariate fit expects a CSV with exactly two columns x,y")
    init = None
    if args.init:
        raw = _read_json(args.init)
        if isinstance(raw, dict):
            raw = raw.get("theta_hat", raw)
            if isinstance(raw, dict):
                try:
                    raw = [raw[f"theta{k}"] for k in range(1, 9)]
                except KeyError as exc:
                    raise ConfigurationError(f"init lacks {exc.args[0]}") from None
        init = ThetaVector(tuple(raw))
    free = tuple(int(v) for v in _floats(args.free)) if args.free else None
    result = fit_mle(data, (parse_baseline(args.baseline_x), parse_baseline(args.baseline_y)),
                     init=init, method=args.method, quad=_quad(args), free=free,
                     tol=args.tol, max_iter=args.max_iter)
    _write_json(result.to_dict(), args.output, out)


def cmd_verify(args, out):
    _write_json(verify_suite(_dist(args), args.grid_size), args.output, out)


def cmd_lorenz(args, out):
    base = parse_baseline(args.baseline)
    lo, hi = sorted((args.a1, args.a2))
    d1, d2 = RBGDistribution(lo, base), RBGDistribution(hi, base)
    p = np.linspace(1.0 / args.points, 1.0, args.points)
    report = lorenz_order_check(d1, d2, p)
    _write_json({"a1": lo, "a2": hi, "baseline": base.describe(), **report.details,
                 "sign_violation": report.max_abs_residual, "p": p, "gl1": report.lhs, "gl2": report.rhs},
                args.output, out)
    if args.emit_curve:
        _write_csv(args.emit_curve, ["p", "gl1", "gl2"], zip(p, report.lhs, report.rhs), out)


def cmd_orderstats(args, out):
    d = _dist(args)
    xs = _floats(args.x) if args.x else list(_curve_grid(d, args.points))
    trunc = SeriesTruncation(args.max_index, args.series_tol)
    rows = []
    for x in xs:
        series = min_survival_series(d, args.n, x, trunc)
        rows.append((x, float(min_survival(d, args.n, x)), series.value, series.bound))
    _write_csv(args.output, ["x", "direct", "series", "bound"], rows, out)


def cmd_biv_eval(args, out):
    model = _model(args)
    x, y = args.x, args.y
    if args.what == "density":
        value = math.exp(float(joint_log_density(x, y, model)))
    elif args.what == "log-density":
        value = float(joint_log_density(x, y, model))
    elif args.what == "marginal-x":
        value = float(np.atleast_1d(marginal_density_x(model, np.array([x])))[0])
    elif args.what == "joint-survival":
        value = float(joint_survival(model, x, y))
    else:
        rep = conditional_moment_k(model, y, args.k)
        _write_json({"y": y, "k": args.k, "value": rep.value, "finite": rep.finite}, args.output, out)
        return
    out.write(fmt(value) + "\n") if args.output is None else _emit(fmt(value) + "\n", args.output, out)


def cmd_biv_sample(args, out):
    model = _model(args)
    draws = gibbs_sample(model, args.n, burn=args.burn, seed=args.seed, thin=args.thin)
    _write_csv(args.output, ["x", "y"], draws, out)


def cmd_biv_mode(args, out):
    model = _model(args)
    start = _floats(args.start)
    if len(start) != 2:
        raise ConfigurationError("--start needs two numbers x,y")
    res = mode_find(model, start, scale=args.scale, tol=args.tol)
    point_x = list(res.point)
    if res.scale == "t":
        point_x = [float(model.baseline_x.quantile_t(res.point[0])),
                   float(model.baseline_y.quantile_t(res.point[1]))]
    _write_json({"point": list(res.point), "point_x": point_x, "gradient_norm": res.gradient_norm,
                 "negative_definite": res.negative_definite, "iterations": res.iterations,
                 "scale": res.scale}, args.output, out)


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rbg", description="RB-G distribution family: evaluation, sampling, "
                     "fitting, verification and the bivariate model.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(p, quad=False):
        p.add_argument("-o", "--output", help="output path (default: standard output)")
        if quad:
            p.add_argument("--quad-nodes", type=int,
                           help="quadrature node count (default: $RBG_QUAD_NODES or 15)")

    def univariate(p):
        p.add_argument("--baseline", default="uniform",
                       help="baseline spec 'name:param=value,...' (uniform, exponential:rate=1, "
                            "weibull:shape=1.5,scale=1); default uniform")
        p.add_argument("--a", type=float, default=1.0, help="shape a > 0 (default 1)")

    p = sub.add_parser("eval", help="evaluate pdf, cdf, survival, hazard or quantile")
    univariate(p)
    p.add_argument("--x", required=True, help="point(s), comma separated (probabilities for quantile)")
    p.add_argument("--what", choices=sorted(_WHAT), default="pdf", help="quantity (default pdf)")
    p.add_argument("--emit-curve", metavar="PATH", help="also write an (x, pdf) CSV for plotting")
    p.add_argument("--curve-points", type=int, default=200, help="points in the emitted curve")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw a sample (CSV column x)")
    univariate(p)
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", help="maximum-likelihood fit (univariate a, or bivariate theta)")
    p.add_argument("--data", required=True, help="CSV with header; columns x[,y]")
    p.add_argument("--baseline", help="univariate fit of the first column with this baseline")
    p.add_argument("--baseline-x", help="bivariate fit: baseline of x")
    p.add_argument("--baseline-y", help="bivariate fit: baseline of y")
    p.add_argument("--method", choices=("gradient", "cyclic"), default="gradient",
                   help="bivariate search method (default gradient)")
    p.add_argument("--init", help="JSON initial theta: 8 numbers or {theta1..theta8}")
    p.add_argument("--free", help="comma-separated 1-based indices of free parameters (default all)")
    p.add_argument("--tol", type=float, default=1e-6, help="residual tolerance (default 1e-6)")
    p.add_argument("--max-iter", type=int, default=200, help="iteration or sweep cap (default 200)")
    common(p, quad=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="run the characterization checks; JSON report")
    univariate(p)
    p.add_argument("--grid-size", type=int, default=10, help="points per check grid (default 10)")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("lorenz", help="compare generalized Lorenz curves of two shapes")
    p.add_argument("--baseline", default="uniform", help="baseline spec (default uniform)")
    p.add_argument("--a1", type=float, required=True, help="first shape")
    p.add_argument("--a2", type=float, required=True, help="second shape")
    p.add_argument("--points", type=int, default=20, help="grid size on (0, 1] (default 20)")
    p.add_argument("--emit-curve", metavar="PATH", help="also write a (p, gl1, gl2) CSV")
    common(p)
    p.set_defaults(func=cmd_lorenz)

    p = sub.add_parser("orderstats", help="minimum survival: direct vs series (CSV)")
    univariate(p)
    p.add_argument("--n", type=int, default=2, help="sample size of the minimum (default 2)")
    p.add_argument("--x", help="points, comma separated (default: quantile grid)")
    p.add_argument("--points", type=int, default=20, help="grid size when --x is absent")
    p.add_argument("--max-index", type=int, default=30, help="series truncation index (default 30)")
    p.add_argument("--series-tol", type=float, default=1e-8, help="bound tolerance (default 1e-8)")
    common(p)
    p.set_defaults(func=cmd_orderstats)

    p = sub.add_parser("biv-eval", help="evaluate the bivariate model")
    p.add_argument("--model", required=True, help="model JSON {baseline_x, baseline_y, M | strict, quadrature}")
    p.add_argument("--x", type=float, default=None, help="x coordinate")
    p.add_argument("--y", type=float, required=True, help="y coordinate")
    p.add_argument("--what", choices=("density", "log-density", "marginal-x", "joint-survival",
                                      "conditional-moment"), default="density", help="quantity")
    p.add_argument("--k", type=int, default=1, help="moment order for conditional-moment")
    common(p, quad=True)
    p.set_defaults(func=cmd_biv_eval)

    p = sub.add_parser("biv-sample", help="Gibbs sample from the bivariate model (CSV x,y)")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--n", type=int, required=True, help="number of draws")
    p.add_argument("--burn", type=int, default=500, help="burn-in sweeps (default 500)")
    p.add_argument("--thin", type=int, default=1, help="keep every k-th sweep (default 1)")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    common(p, quad=True)
    p.set_defaults(func=cmd_biv_sample)

    p = sub.add_parser("biv-mode", help="locate the joint mode (JSON)")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--start", required=True, help="starting point x,y")
    p.add_argument("--scale", choices=("x", "t"), default="x",
                   help="maximize the density in x or in t = -log G(x) (default x)")
    p.add_argument("--tol", type=float, default=1e-8, help="gradient tolerance")
    common(p, quad=True)
    p.set_defaults(func=cmd_biv_mode)
    return parser


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "command", None) == "biv-eval" and args.what != "conditional-moment" and args.x is None:
            raise ConfigurationError(f"biv-eval --what {args.what} needs --x")
        args.func(args, stdout)
    except (DomainError, ConfigurationError, NonIntegrableError) as exc:
        stderr.write(_one_line(exc))
        return EXIT_CONFIG
    except (NumericalError, RBGError, FloatingPointError) as exc:
        stderr.write(_one_line(exc))
        return EXIT_NUMERIC
    return EXIT_OK


def main_entry() -> None:
    """Console-script entry point."""
    sys.exit(main())


def _one_line(exc) -> str:
    msg = " ".join(str(exc).split())
    return f"error: {type(exc).__name__}: {msg}\n"


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
