"""Command line interface: ``fracmatern <command> [options]``.

Commands: ``coeffs``, ``covariance``, ``benchmark``, ``simulate``, ``fit``,
``predict``.  Exit status is 0 on success, 1 on runtime failures and 2 on
usage or schema errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .benchmark import benchmark_table
from .fem import observation_matrix
from .inference import ModelTemplate, fit_lme, predict_kriging
from .io import SpecError, load_spec, parse_spec, read_csv_columns, read_dataset, write_csv
from .markov import markov_cov
from .matern import folded_matern_cov, matern_cov, range_from_kappa
from .rational import METHODS, RationalApproxError, rational_approx

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _grid(text):
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like a:b:n, got {text!r}") from None
    if not (a < b and n >= 2):
        raise argparse.ArgumentTypeError(f"grid needs a < b and n >= 2, got {text!r}")
    return np.linspace(a, b, n)


def _out(path):
    """Context-free writer target: a path or stdout."""
    return sys.stdout if path in (None, "-") else path


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_coeffs(args):
    if (args.phi is None) == (args.alpha is None):
        raise UsageError("give exactly one of --phi and --alpha")
    if args.m < 1 or args.m > 8:
        raise UsageError(f"--m must lie in 1..8, got {args.m}")
    if args.phi is not None:
        phi = args.phi
    else:
        if not args.alpha > 0:
            raise UsageError("--alpha must be positive")
        if args.form == "operator":
            beta = args.alpha / 2.0
            phi = beta - max(math.floor(beta), 1)
        else:
            phi = args.alpha - math.floor(args.alpha)
        if abs(phi) < 1e-12:
            raise UsageError("integer exponent: no rational approximation is needed")
    lb = args.lb
    if lb is None and args.method != "chebfun":
        lb = 10.0 ** (-(args.m + 5) / 2.0)
    try:
        ra = rational_approx(phi, args.m, method=args.method, lb=lb, form=args.form)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write_json(ra.to_dict(), args.out)
    return EXIT_OK


def cmd_covariance(args):
    spec = load_spec(args.spec)
    model = spec.build()
    if spec.scheme == "generic":
        idx = int(args.anchor)
        if not 0 <= idx < model.n:
            raise UsageError(f"--anchor must be a node index in [0, {model.n})")
        e = np.zeros(model.n)
        e[idx] = 1.0
        approx = model.sigma_mult(e)
        nan = np.full(model.n, np.nan)
        write_csv(_out(args.out), ["location", "approx", "exact", "abs_error"],
                  [np.arange(model.n), approx, nan, nan])
        return EXIT_OK
    grid = args.grid if args.grid is not None else np.linspace(0.0, 1.0, 101)
    s0 = args.anchor
    if spec.scheme == "markov":
        approx = markov_cov(model, np.abs(grid - s0))
        exact = matern_cov(np.abs(grid - s0), spec.params)
    else:
        mesh = model.mesh
        A = observation_matrix(mesh, grid)
        approx = A @ model.cov_at(s0)
        if spec.nonstationary:
            exact = np.full(grid.size, np.nan)
        else:
            length = mesh.b - mesh.a
            exact = folded_matern_cov(np.full(grid.size, s0 - mesh.a), grid - mesh.a,
                                      spec.params, L=length)
    write_csv(_out(args.out), ["location", "approx", "exact", "abs_error"],
              [grid, approx, exact, np.abs(approx - exact)])
    return EXIT_OK


def cmd_benchmark(args):
    ms = tuple(range(1, args.max_m + 1))
    t0 = time.perf_counter()
    rows = benchmark_table(ms, include_direct=args.direct)
    elapsed = time.perf_counter() - t0
    header = ["scheme"] + [f"m={m}" for m in ms]
    if args.format == "csv":
        names = list(rows)
        write_csv(_out(args.out), header, [names] + [[rows[n][i] for n in names] for i in range(len(ms))])
    else:
        lines = ["  ".join(f"{h:>15}" for h in header)]
        for name, vals in rows.items():
            lines.append("  ".join([f"{name:>15}"] + [f"{v:15.6g}" for v in vals]))
        lines.append(f"({elapsed:.2f} s)")
        text = "\n".join(lines) + "\n"
        if args.out in (None, "-"):
            sys.stdout.write(text)
        else:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    return EXIT_OK


def cmd_simulate(args):
    if args.nsim < 1:
        raise UsageError("--nsim must be positive")
    spec = load_spec(args.spec)
    model = spec.build()
    if spec.scheme == "markov":
        if args.grid is None:
            raise UsageError("the markov scheme needs --grid a:b:n")
        locs = args.grid
        S = markov_cov(model, np.abs(locs[:, None] - locs[None, :]))
        w, V = np.linalg.eigh(S)
        R = V * np.sqrt(np.maximum(w, 0.0))
        rng = np.random.default_rng(args.seed)
        sims = R @ rng.standard_normal((locs.size, args.nsim))
    else:
        sims = model.simulate(args.nsim, seed=args.seed)
        locs = model.mesh.nodes if model.mesh is not None else np.arange(model.n)
    header = ["location"] + [f"sim_{i + 1}" for i in range(args.nsim)]
    write_csv(_out(args.out), header, [locs] + [sims[:, i] for i in range(args.nsim)])
    return EXIT_OK


def _template_from_spec(spec):
    if spec.scheme == "generic":
        raise UsageError("fit supports the fem-cov, fem-op and markov schemes")
    if spec.nonstationary:
        raise UsageError("fit takes stationary specs; non-stationary covariates are a library feature")
    mesh = spec.mesh_obj() if spec.scheme != "markov" else None
    nu_upper = float(spec.raw.get("nu_upper", 2.0))
    return ModelTemplate(spec.scheme, m=spec.m, mesh=mesh, method=spec.method, lb=spec.lb,
                         nu_upper=nu_upper)


def cmd_fit(args):
    spec = load_spec(args.spec)
    template = _template_from_spec(spec)
    data, covs = read_dataset(args.data)
    start = {"sigma": spec.sigma, "range": range_from_kappa(spec.kappa, spec.nu), "nu": spec.nu}
    if "sigma_e" in spec.raw:
        start["sigma_e"] = float(spec.raw["sigma_e"])
    fixed = {}
    for name, val in spec.fixed.items():
        if name not in template.param_names:
            raise SpecError("fixed", f"unknown parameter {name!r}")
        fixed[name] = start.get(name) if val is None else float(val)
        if fixed[name] is None:
            raise SpecError(f"fixed.{name}", "needs a value")
    fit = fit_lme(template, data, fixed=fixed, start={k: v for k, v in start.items() if k not in fixed},
                  parallel=args.parallel)
    out = fit.to_dict()
    out["covariates"] = covs
    out["spec"] = spec.raw
    out["spec_dir"] = spec.base_dir
    _write_json(out, args.out)
    return EXIT_OK


def cmd_predict(args):
    with open(args.fit, encoding="utf-8") as fh:
        fitdoc = json.load(fh)
    for key in ("spec", "estimates"):
        if key not in fitdoc:
            raise SpecError(f"fit.{key}", "required field is missing")
    spec = parse_spec(fitdoc["spec"], base_dir=fitdoc.get("spec_dir", "."))
    template = _template_from_spec(spec)
    est = fitdoc["estimates"]
    values = {k: float(est[k]) for k in template.param_names}
    beta = np.asarray(est.get("beta", []), dtype=float)
    data, covs = read_dataset(args.data)
    if covs != fitdoc.get("covariates", covs):
        raise SpecError("data", "covariate columns differ from those used in the fit")
    X_new = None
    if isinstance(args.locs, np.ndarray):
        new_locs = args.locs
        if covs:
            raise UsageError("data has covariates; give --locs as a CSV with those columns")
    else:
        cols = read_csv_columns(args.locs)
        if "loc" not in cols:
            raise SpecError("locs.loc", "required column is missing")
        new_locs = cols["loc"]
        if covs:
            missing = [c for c in covs if c not in cols]
            if missing:
                raise SpecError(f"locs.{missing[0]}", "required column is missing")
            X_new = np.column_stack([cols[c] for c in covs])
    if data.p == 0:
        beta = None
    try:
        pred = predict_kriging(template, data, new_locs, values=values, beta=beta, X_new=X_new,
                               repl=args.repl)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_csv(_out(args.out), ["location", "mean", "sd"], [new_locs, pred["mean"], pred["sd"]])
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _locs_arg(text):
    if os.path.exists(text):
        return text
    try:
        return _grid(text)
    except argparse.ArgumentTypeError:
        raise argparse.ArgumentTypeError(f"--locs must be a CSV file or a:b:n grid, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="fracmatern", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("coeffs", help="rational approximation coefficients as JSON")
    c.add_argument("--phi", type=float)
    c.add_argument("--alpha", type=float)
    c.add_argument("--m", type=int, required=True)
    c.add_argument("--method", choices=METHODS, default="chebfunLB")
    c.add_argument("--lb", type=float)
    c.add_argument("--form", choices=("covariance", "operator"), default="covariance")
    c.add_argument("--out")
    c.set_defaults(func=cmd_coeffs)

    c = sub.add_parser("covariance", help="covariance curve versus the exact covariance (CSV)")
    c.add_argument("--spec", required=True)
    c.add_argument("--anchor", type=float, default=0.5)
    c.add_argument("--grid", type=_grid)
    c.add_argument("--out")
    c.set_defaults(func=cmd_covariance)

    c = sub.add_parser("benchmark", help="L1 error table of the three schemes")
    c.add_argument("--max-m", type=int, default=4, choices=range(1, 9))
    c.add_argument("--format", choices=("pretty", "csv"), default="pretty")
    c.add_argument("--direct", action="store_true", help="add the unstable direct operator row")
    c.add_argument("--out")
    c.set_defaults(func=cmd_benchmark)

    c = sub.add_parser("simulate", help="draw samples (CSV, one column per draw)")
    c.add_argument("--spec", required=True)
    c.add_argument("--nsim", type=int, default=1)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--grid", type=_grid, help="evaluation grid (markov scheme)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("fit", help="maximum-likelihood fit (JSON)")
    c.add_argument("--spec", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--parallel", action="store_true")
    c.add_argument("--out")
    c.set_defaults(func=cmd_fit)

    c = sub.add_parser("predict", help="kriging prediction (CSV)")
    c.add_argument("--fit", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--locs", required=True, type=_locs_arg)
    c.add_argument("--repl", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_predict)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SpecError) as exc:
        print(f"fracmatern {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RationalApproxError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        print(f"fracmatern {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
