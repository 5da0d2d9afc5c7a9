"""Command line interface: ``mgrit-adv <command> ...``.

Commands
--------
solve          two-level or multilevel MGRIT solve of the advection problem
optimize       fit a sparse coarse stepper and report its diagnostics
experiment     run a table or figure experiment (``--list`` shows them)
bounds         per-mode two-level error bound of a coarse stepper
cfl            CFL limits of the explicit schemes
baseline-diff  compare a result CSV with a baseline CSV
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import expkit
from .discretization import SchemeSpec, build_phi, cfl_limit, initial_condition
from .mgrit import Hierarchy, solve
from .optimizer import build_multilevel_psis
from .theory import error_bound

COARSE_KINDS = ("lsq", "nlsq", "ideal", "rediscretize", "phi-pattern")


def _grid(text):
    return expkit._parse_int(text)


def _spec(args) -> SchemeSpec:
    spec = SchemeSpec.from_id(args.scheme, args.nx)
    if args.nt is not None:
        spec = spec.with_dt(spec.dt, n_t=args.nt)
    return spec


def _out_dir(args):
    out = args.output_dir or os.environ.get(expkit.OUTPUT_ENV)
    if out:
        os.makedirs(out, exist_ok=True)
    return out


def _common(p, m_default=4):
    p.add_argument("--scheme", default="erk3+u3", help="scheme id, e.g. erk3+u3 or sdirk2+u2")
    p.add_argument("--nx", type=_grid, default=256, help="spatial points (accepts 2^k)")
    p.add_argument("--nt", type=_grid, default=None, help="time steps (default: scheme preset)")
    p.add_argument("--m", type=int, default=m_default, help="coarsening factor")
    p.add_argument("--output-dir", default=None,
                   help=f"output directory (env {expkit.OUTPUT_ENV} also works)")


def _build_hierarchy(spec, args):
    if args.levels > 2:
        if args.coarse != "lsq":
            raise SystemExit("multilevel solves support --coarse lsq only")
        h, _ = build_multilevel_psis(spec, args.m, args.levels,
                                     min_coarse_points=args.min_coarse_points)
        return h, ""
    if args.levels < 2:
        raise SystemExit("--levels must be at least 2")
    phi = build_phi(spec)
    coarse = expkit.coarse_operator(spec, args.m, args.coarse, phi=phi)
    if coarse.stepper is None:
        raise SystemExit(f"coarse fit failed: {coarse.note}")
    return Hierarchy.two_level(phi, coarse.stepper, spec.n_t, args.m, spec.dx, spec.dt), coarse.note


def cmd_solve(args):
    spec = _spec(args)
    h, note = _build_hierarchy(spec, args)
    rep = solve(h, initial_condition(spec.x), tol=args.tol, max_iters=args.max_iters,
                cycle=args.cycle, threads=args.threads, seed=args.seed)
    for k, r in enumerate(rep.residual_history):
        print(f"iter {k:3d}  residual {r:.3e}")
    status = "converged" if rep.converged else "not converged"
    print(f"{spec.scheme_id} {spec.n_x}x{spec.n_t} m={args.m} levels={h.n_levels}: "
          f"{rep.iterations} iterations, {status}, OC={rep.operator_complexity:.4g}"
          + (f" [{note}]" if note else ""))
    out = _out_dir(args)
    if out:
        path = os.path.join(out, f"solve_{spec.scheme_id}_nx{spec.n_x}_m{args.m}_l{h.n_levels}.csv")
        rep.to_csv(path)
        print(f"wrote {path}")
    return 0 if rep.converged else 1


def cmd_optimize(args):
    spec = _spec(args)
    kind = {"linear": "lsq", "nonlinear": "nlsq"}[args.method]
    if args.pattern == "phi":
        kind = "phi-pattern" if args.method == "linear" else kind
    coarse = expkit.coarse_operator(spec, args.m, kind, eta=args.eta)
    if coarse.stepper is None:
        print(f"fit failed: {coarse.note}", file=sys.stderr)
        return 1
    fit = coarse.fit
    prof = error_bound(build_phi(spec).spectrum, fit.operator.spectrum, args.m, spec.n_t)
    print(f"{spec.scheme_id} {spec.n_x}x{spec.n_t} m={args.m} method={fit.method}")
    print(f"  pattern     {fit.pattern}")
    print(f"  nnz         {fit.nnz}")
    print(f"  objective   {fit.objective_value:.6g}")
    print(f"  max|mu|     {fit.max_abs_mu:.8f}" + ("" if fit.stable else "  (unstable)"))
    print(f"  max bound   {prof.max_bound:.6g}")
    out = _out_dir(args)
    if out:
        path = os.path.join(out, f"psi_{spec.scheme_id}_nx{spec.n_x}_m{args.m}_{args.method}.csv")
        fit.to_csv(path)
        print(f"wrote {path}")
    return 0


def cmd_bounds(args):
    spec = _spec(args)
    phi = build_phi(spec)
    coarse = expkit.coarse_operator(spec, args.m, args.coarse, phi=phi)
    if coarse.stepper is None:
        print(f"fit failed: {coarse.note}", file=sys.stderr)
        return 1
    prof = error_bound(phi.spectrum, coarse.stepper.spectrum, args.m, spec.n_t)
    k = int(np.argmax(prof.bounds))
    print(f"{spec.scheme_id} {spec.n_x}x{spec.n_t} m={args.m} coarse={args.coarse}")
    print(f"  max bound {prof.max_bound:.6g} at theta={prof.theta[k]:.4f}")
    print(f"  unstable modes {int(np.sum(prof.unstable))}")
    out = _out_dir(args)
    if out:
        path = prof.to_csv(os.path.join(out, f"bound_{spec.scheme_id}_nx{spec.n_x}_m{args.m}.csv"))
        print(f"wrote {path}")
    return 0


def cmd_cfl(args):
    orders = [args.order] if args.order else range(1, 6)
    print("scheme   c_max")
    for p in orders:
        print(f"ERK{p}     {cfl_limit(p, 'ERK'):.6f}")
    return 0


def _overrides(args):
    upd = {}
    for name, attr in (("schemes", "scheme"), ("n_x", "nx"), ("m", "m"), ("levels", "levels"),
                       ("variants", "variant")):
        val = getattr(args, attr)
        if val:
            upd[name] = tuple(val)
    for name in ("tol", "seed", "max_iters", "min_coarse_points", "threads"):
        val = getattr(args, name)
        if val is not None:
            upd[name] = val
    if args.no_plot:
        upd["plot"] = False
    if args.large:
        upd["large"] = True
    if args.heat:
        upd["heat"] = True
    return upd


def cmd_experiment(args):
    if args.list or (not args.id and not args.config):
        for eid, title in expkit.list_experiments():
            print(f"{eid:<8} {title}")
        return 0
    try:
        if args.config:
            cfg = expkit.load_config(args.config)
        else:
            cfg = expkit.ExperimentConfig(args.id)
        if args.id and args.id != cfg.experiment:
            cfg = replace(cfg, experiment=args.id)
        cfg = replace(cfg, **_overrides(args)).resolved()
    except expkit.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    table, artifacts = expkit.run_experiment(cfg, output_dir=args.output_dir, workers=args.workers)
    print(table.format())
    for a in artifacts:
        print(f"wrote {a}")
    code = 0
    bad = table.unexpected_failures()
    if bad:
        print(f"{len(bad)} rows failed unexpectedly", file=sys.stderr)
        code = 1
    if args.baseline:
        try:
            report = expkit.compare_baseline(table, args.baseline)
        except expkit.BaselineMissing as exc:
            print(str(exc), file=sys.stderr)
            return 2
        if report.entries:
            print(report)
        print("baseline: " + ("pass" if report.passed else "fail"))
        code = code or (0 if report.passed else 1)
    return code


def cmd_baseline_diff(args):
    try:
        report = expkit.compare_baseline(args.result, args.baseline)
    except expkit.BaselineMissing as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(report.to_json() if args.json else (str(report) or "identical"))
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mgrit-adv", description=__doc__.split("\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run an MGRIT solve")
    _common(p)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--coarse", choices=COARSE_KINDS, default="lsq")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--cycle", choices=("V", "F"), default="V")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--min-coarse-points", type=int, default=2)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("optimize", help="fit a sparse coarse stepper")
    _common(p)
    p.add_argument("--method", choices=("linear", "nonlinear"), default="linear")
    p.add_argument("--pattern", choices=("preset", "phi"), default="preset",
                   help="ERK preset window / SDIRK threshold, or the sparsity of Phi")
    p.add_argument("--eta", type=float, default=None, help="SDIRK threshold override")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("experiment", help="run a table or figure experiment")
    p.add_argument("id", nargs="?", help="experiment id")
    p.add_argument("--list", action="store_true", help="list experiment ids")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--scheme", action="append")
    p.add_argument("--nx", action="append", type=_grid)
    p.add_argument("--m", action="append", type=int)
    p.add_argument("--levels", action="append", type=int)
    p.add_argument("--variant", action="append")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--min-coarse-points", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--workers", type=int, default=None, help="process pool size (default: cores)")
    p.add_argument("--large", action="store_true", help="allow grids beyond desk scale")
    p.add_argument("--heat", action="store_true", help="fig2: add the heat equation case")
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--baseline", help="compare against this baseline CSV")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bounds", help="two-level error bound per Fourier mode")
    _common(p)
    p.add_argument("--coarse", choices=COARSE_KINDS, default="lsq")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("cfl", help="CFL limits of ERK schemes")
    p.add_argument("--order", type=int, choices=range(1, 6))
    p.set_defaults(func=cmd_cfl)

    p = sub.add_parser("baseline-diff", help="compare result and baseline CSVs")
    p.add_argument("result")
    p.add_argument("baseline")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_baseline_diff)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
