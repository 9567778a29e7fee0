"""Command-line front end.

Every command prints CSV (with ``#`` metadata lines) or JSON carrying the
fully resolved configuration, so identical arguments and seed give
byte-identical output.  Exit codes: 0 ok, 2 usage, 3 precondition,
4 tolerance failure.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import GaussIsoError, PreconditionError, StepLimitExceeded, ToleranceError

EXIT_OK, EXIT_USAGE, EXIT_PRECONDITION, EXIT_TOLERANCE = 0, 2, 3, 4
SEED_ENV = "GAUSSISO_SEED"

# reference boundary areas of the measure-1/2 centered ball (interval in R^1)
TABLE_REFERENCE = {1: 0.6356, 2: 0.5887, 3: 0.5783}
TABLE_TOL = 5e-4
LIMIT_AREA = 1.0 / math.sqrt(math.pi)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)
    fmt: str = "csv"
    output: str = None

    def as_dict(self):
        return {"command": self.command, "version": __version__, "format": self.fmt,
                **{k: _plain(v) for k, v in sorted(self.options.items())}}

    def header(self):
        return [f"{k}={json.dumps(v, sort_keys=True)}" for k, v in self.as_dict().items()]


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _num(x):
    return f"{float(x):.15g}"


def _csv(config, columns, rows, extra=()):
    lines = [f"# {h}" for h in config.header()] + [f"# {h}" for h in extra]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_num(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _json(config, body):
    return json.dumps({"config": config.as_dict(), **body}, indent=2, sort_keys=True, default=_plain) + "\n"


def _emit(config, text, stream):
    if config.output:
        with open(config.output, "w") as fh:
            fh.write(text)
    else:
        stream.write(text)


def _floats(text, name):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got {text!r}") from None


def _volume(c):
    if not 0.0 < c < 1.0:
        raise UsageError(f"--c must lie in (0, 1), got {c}")
    return c


def _surface(text):
    from .geometry import make_surface, parse_spec
    try:
        return make_surface(parse_spec(text))
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None


def _lambda(arg, grid):
    from .geometry import auto_lambda
    if arg is None or arg == "auto":
        return float(auto_lambda(grid))
    try:
        return float(arg)
    except ValueError:
        raise UsageError(f"--lambda expects a number or 'auto', got {arg!r}") from None


def default_seed():
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# --------------------------------------------------------------------------
# commands

def cmd_table(args, config, out):
    from .measure import profile_table
    dims = [int(d) for d in _floats(args.dims, "dims")]
    c = _volume(args.c)
    rows = profile_table(dims, c)
    failures = []
    checks = []
    for row in rows:
        ref, tol = None, None
        if abs(c - 0.5) < 1e-15:
            if row.n in TABLE_REFERENCE:
                ref, tol = TABLE_REFERENCE[row.n], TABLE_TOL
            elif row.n >= 4:
                ref, tol = LIMIT_AREA, 1.5 / math.sqrt(row.n)
        ok = ref is None or abs(row.perimeter - ref) <= tol
        checks.append((ref, tol, ok))
        if not ok:
            failures.append(f"n={row.n}: perimeter {row.perimeter:.6f} vs {ref:.4f} (tol {tol:.2g})")
    config.options.update(dims=tuple(dims), c=c)
    if config.fmt == "json":
        body = {"rows": [{**r.as_dict(), "reference": ref, "tolerance": tol, "ok": ok}
                         for r, (ref, tol, ok) in zip(rows, checks)], "failures": failures}
        text = _json(config, body)
    else:
        text = _csv(config, ["n", "c", "r", "perimeter", "reference", "ok"],
                    [(r.n, r.c, r.r, r.perimeter, "" if ref is None else ref, int(ok))
                     for r, (ref, _, ok) in zip(rows, checks)])
    _emit(config, text, out)
    for f in failures:
        print(f"table check failed: {f}", file=sys.stderr)
    return EXIT_TOLERANCE if failures else EXIT_OK


def cmd_verify(args, config, out):
    from .geometry import quadrature_grid
    from .stability import IDENTITIES, check_identity
    surface = _surface(args.surface)
    grid = quadrature_grid(surface, args.resolution)
    ids = list(IDENTITIES) if args.all or not args.id else [i.upper() for i in args.id]
    for i in ids:
        if i not in IDENTITIES:
            raise UsageError(f"unknown identity {i!r}; choose from {', '.join(IDENTITIES)}")
    lam = _lambda(args.lam, grid)
    config.options.update(surface=args.surface, lam=lam, resolution=grid.size, tol=args.tol,
                          identities=tuple(ids))
    reports = [check_identity(surface, lam, i, grid) for i in ids]
    bad = [r.identity for r in reports if r.max_residual > args.tol]
    if config.fmt == "json":
        text = _json(config, {"residuals": [r.as_dict() for r in reports], "failures": bad})
    else:
        text = _csv(config, ["identity", "max_residual", "l2_residual", "grid"],
                    [(r.identity, r.max_residual, r.l2_residual, r.grid) for r in reports])
    _emit(config, text, out)
    if bad:
        print("residual above tolerance: " + ", ".join(bad), file=sys.stderr)
    return EXIT_TOLERANCE if bad else EXIT_OK


def cmd_scan(args, config, out):
    from .lambda_solver import cylinder_scan
    c = _volume(args.c)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    rows = cylinder_scan(args.n, c, reports=not args.no_reports, resolution=args.resolution)
    config.options.update(n=args.n, c=c, resolution=args.resolution, reports=not args.no_reports)
    if config.fmt == "json":
        text = _json(config, {"rows": [r.as_dict() for r in rows]})
    else:
        text = _csv(config, ["rank", "k", "complement", "kind", "r", "volume", "perimeter", "lambda", "verdict"],
                    [(i + 1, r.k, int(r.complement), r.kind, r.radius, r.volume, r.perimeter, r.lam,
                      "; ".join(r.report.verdicts) if r.report else "")
                     for i, r in enumerate(rows)])
    _emit(config, text, out)
    return EXIT_OK


def cmd_spectrum(args, config, out):
    from .geometry import RoundSurface
    from .stability import cylinder_spectrum, profile_spectrum, sphere_spectrum
    surface = _surface(args.surface)
    config.options.update(surface=args.surface, lmax=args.lmax, count=args.count,
                          resolution=args.resolution, discrete=args.discrete)
    rows = []
    if isinstance(surface, RoundSurface) and surface.kind == "sphere" and surface.compact:
        for e in sphere_spectrum(surface.dim, surface.radius, args.lmax):
            rows.append(("closed_form", e.degree, e.eigenvalue, e.multiplicity))
    elif isinstance(surface, RoundSurface) and not surface.compact:
        # index is "sphere degree:Hermite degree"
        for e in cylinder_spectrum(surface.k, surface.dim, surface.radius, args.lmax):
            rows.append(("closed_form", f"{e.degree}:{e.hermite_degree}", e.eigenvalue, e.multiplicity))
    if args.discrete or not rows:
        grid = None
        if args.resolution:
            grid = surface.grid(args.resolution)
        res = profile_spectrum(surface, grid, args.count)
        for i, (value, mult) in enumerate(res.multiplicities(rtol=args.group_tol)):
            rows.append(("discrete", i, value, mult))
    if config.fmt == "json":
        text = _json(config, {"eigenvalues": [dict(zip(("source", "index", "eigenvalue", "multiplicity"), r))
                                              for r in rows]})
    else:
        text = _csv(config, ["source", "index", "eigenvalue", "multiplicity"], rows)
    _emit(config, text, out)
    return EXIT_OK


def cmd_flow(args, config, out):
    from .geometry import read_curve_csv, write_curve_csv
    from .lambda_solver import (
        FlowOptions,
        format_trajectory,
        mcf_minimize,
        perturbed_circle,
    )
    c = _volume(args.c)
    if args.initial:
        try:
            pts = read_curve_csv(args.initial)
        except OSError as exc:
            raise UsageError(str(exc)) from None
        if np.linalg.norm(pts[-1] - pts[0]) == 0:
            pts = pts[:-1]
        source = args.initial
    else:
        pts = perturbed_circle(c, args.nodes, args.amplitude, args.mode)
        source = f"perturbed circle amplitude={args.amplitude} mode={args.mode} nodes={args.nodes}"
    opts = FlowOptions(tol=args.tol, max_steps=args.max_steps)
    config.options.update(c=c, initial=source, tol=args.tol, max_steps=args.max_steps)
    try:
        result = mcf_minimize(pts, c, opts)
        state, rows, status = result.state, result.trajectory, EXIT_OK
    except StepLimitExceeded as exc:
        state, rows, status = exc.state, exc.trajectory, EXIT_TOLERANCE
        print(str(exc), file=sys.stderr)
    header = config.header() + [f"converged={int(status == EXIT_OK)}", f"lambda_hat={_num(state.lam_hat)}",
                                f"defect={state.defect:.6e}"]
    if args.trajectory:
        with open(args.trajectory, "w") as fh:
            fh.write(format_trajectory(rows, config.header()))
    if config.fmt == "json":
        body = {"converged": status == EXIT_OK, "steps": int(state.iteration), "perimeter": state.perimeter,
                "volume": state.volume, "lambda_hat": state.lam_hat, "defect": state.defect,
                "points": state.points.tolist()}
        _emit(config, _json(config, body), out)
    elif config.output:
        write_curve_csv(config.output, state.points, header)
    else:
        write_curve_csv(out, state.points, header)
    return status


def cmd_shoot(args, config, out):
    from .geometry import write_curve_csv
    from .lambda_solver import find_closed_curve
    bracket = _floats(args.lambda_bracket, "lambda-bracket")
    if len(bracket) != 2:
        raise UsageError("--lambda-bracket expects two numbers lo,hi")
    config.options.update(lambda_bracket=tuple(bracket), m=args.m, samples=args.samples, seed=args.seed)
    search = find_closed_curve(tuple(bracket), args.m, samples=args.samples)
    best = search.best
    meta = [f"lambda={_num(best.lam)}", f"r0={_num(best.r0)}", f"closure={best.closure:.6e}",
            f"min_curvature={_num(best.min_curvature)}", f"length={_num(best.length)}",
            f"roots={len(search.roots)}", f"rejected_nonconvex={len(search.rejected)}"]
    meta += [f"root lambda={_num(r.lam)} r0={_num(r.r0)} closure={r.closure:.6e}" for r in search.roots]
    status = EXIT_OK if best.closure < args.closure_tol else EXIT_TOLERANCE
    if config.fmt == "json":
        body = {"lambda": best.lam, "r0": best.r0, "closure": best.closure, "min_curvature": best.min_curvature,
                "length": best.length, "points": best.points.tolist(),
                "roots": [{"lambda": r.lam, "r0": r.r0, "closure": r.closure} for r in search.roots]}
        _emit(config, _json(config, body), out)
    else:
        write_curve_csv(config.output or out, best.points, config.header() + meta)
    if status:
        print(f"closure residual {best.closure:.3g} above {args.closure_tol:g}", file=sys.stderr)
    return status


def cmd_random(args, config, out):
    from .geometry import quadrature_grid
    from .variation import random_bilinear
    surface = _surface(args.surface)
    grid = quadrature_grid(surface, args.resolution)
    lam = _lambda(args.lam, grid)
    config.options.update(surface=args.surface, lam=lam, trials=args.trials, seed=args.seed,
                          orthogonal=args.orthogonal, resolution=grid.size)
    res = random_bilinear(grid, lam, trials=args.trials, seed=args.seed, orthogonal=args.orthogonal)
    slack = 3.0 * res.stderr + 1e-9
    chain = {
        "max>=mean": res.max >= res.mean,
        "mean>=analytic": res.mean >= res.analytic - slack,
        "analytic>=bound": res.analytic >= res.bound - 1e-9 * max(1.0, abs(res.bound)),
    }
    summary = {"max": res.max, "mean": res.mean, "stderr": res.stderr, "analytic": res.analytic,
               "bound": res.bound, **{k: bool(v) for k, v in chain.items()}}
    if config.fmt == "json":
        _emit(config, _json(config, {"summary": summary, "values": res.values.tolist()}), out)
    else:
        extra = [f"{k}={_num(v) if isinstance(v, float) else int(v)}" for k, v in summary.items()]
        rows = [(i, v, *res.vs[i], *res.ws[i]) for i, v in enumerate(res.values)]
        d = grid.ambient
        cols = ["trial", "value"] + [f"v{j}" for j in range(d)] + [f"w{j}" for j in range(d)]
        _emit(config, _csv(config, cols, rows, extra), out)
    failed = [k for k, v in chain.items() if not v]
    if failed and args.check:
        print("ordering violated: " + ", ".join(failed), file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser():
    p = argparse.ArgumentParser(prog="gaussiso", description="Gaussian isoperimetric experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--output", "-o", default=None, help="write here instead of stdout")
        # every command records a seed, even those that draw no random numbers
        sp.add_argument("--seed", type=int, default=None, help=f"default from ${SEED_ENV} or 0")

    sp = sub.add_parser("table", help="boundary area of the measure-c ball per dimension")
    sp.add_argument("--dims", default="1,2,3")
    sp.add_argument("--c", type=float, default=0.5)
    common(sp)
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("verify", help="operator identity residuals on a surface")
    sp.add_argument("--surface", required=True)
    sp.add_argument("--lambda", dest="lam", default="auto")
    sp.add_argument("--id", action="append", default=[])
    sp.add_argument("--all", action="store_true")
    sp.add_argument("--resolution", type=int, default=None)
    sp.add_argument("--tol", type=float, default=1e-6)
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("scan", help="rank round-cylinder candidates at volume c")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--c", type=float, default=0.5)
    sp.add_argument("--resolution", type=int, default=512)
    sp.add_argument("--no-reports", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("spectrum", help="top eigenvalues of L")
    sp.add_argument("--surface", required=True)
    sp.add_argument("--lmax", type=int, default=4)
    sp.add_argument("--count", type=int, default=9)
    sp.add_argument("--resolution", type=int, default=None)
    sp.add_argument("--discrete", action="store_true", help="also discretize spheres")
    sp.add_argument("--group-tol", type=float, default=1e-6)
    common(sp)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("flow", help="volume-constrained flow of a symmetric planar curve")
    sp.add_argument("--c", type=float, default=0.5)
    sp.add_argument("--initial", default=None, help="curve CSV (default: perturbed circle)")
    sp.add_argument("--nodes", type=int, default=512)
    sp.add_argument("--amplitude", type=float, default=0.05)
    sp.add_argument("--mode", type=int, default=4)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-steps", type=int, default=4000)
    sp.add_argument("--trajectory", default=None, help="trajectory CSV path")
    common(sp)
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("shoot", help="closed m-fold symmetric lambda-curve")
    sp.add_argument("--lambda-bracket", default="-3,-0.1")
    sp.add_argument("--m", type=int, default=3)
    sp.add_argument("--samples", type=int, default=2048)
    sp.add_argument("--closure-tol", type=float, default=1e-8)
    common(sp)
    sp.set_defaults(func=cmd_shoot)

    sp = sub.add_parser("random", help="random bilinear trial functions")
    sp.add_argument("--surface", required=True)
    sp.add_argument("--lambda", dest="lam", default="auto")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--orthogonal", action="store_true")
    sp.add_argument("--resolution", type=int, default=None)
    sp.add_argument("--check", action="store_true", help="exit 4 if max >= mean >= analytic >= bound fails")
    common(sp)
    sp.set_defaults(func=cmd_random)
    return p


NUMERIC_FLAGS = ("--lambda-bracket", "--lambda", "--dims")


def _join_negative(argv):
    """Glue values like ``-3,-0.1`` to their flag so argparse does not read them as options."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in NUMERIC_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    argv = _join_negative(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        if args.seed is None:
            args.seed = default_seed()
        config = RunConfig(args.command, {"seed": args.seed}, args.format, args.output)
        return args.func(args, config, out)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ToleranceError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except GaussIsoError as exc:  # pragma: no cover
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
