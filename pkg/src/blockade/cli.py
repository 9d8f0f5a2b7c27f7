"""
Command-line front end.

    blockade steady CONFIG [--method auto|direct|sector|evolve] [--cutoff N] [--emit-rho PATH] [--convergence]
    blockade sweep CONFIG --param {U,dE,g,J,J2} --range lo:hi:n [--observables LIST] ...
    blockade g2tau CONFIG [--tau-max T] [--points N] [--mode I]
    blockade optimal --J J [--gamma G] [--approx] [--scan lo:hi:n]

Output is CSV on stdout (or ``--output``) with ``#`` comment headers.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import analytics, dynamics, models, weakdrive
from .errors import ConfigError, SolverError, UndefinedCorrelationError
from .sweep import (PARAMS, apply_param, cutoff_convergence, default_observables,
                    dominant_period, evaluate, format_number, grid_argmin, parse_range,
                    refine_argmin, run_sweep, threshold_window)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

fmt = format_number


@contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _header(fh, items):
    for key, value in items:
        fh.write(f"# {key}: {value}\n")


def _load(args):
    spec = models.load(args.config)
    if getattr(args, "cutoff", None) is not None:
        if args.cutoff < 1:
            raise ConfigError("--cutoff must be >= 1")
        spec = spec.with_cutoff(args.cutoff)
    return spec


def _boson_cutoff(spec):
    cuts = {s.cutoff for s in spec.sites if s.is_boson}
    if len(cuts) != 1:
        raise ConfigError("--convergence needs a common boson cutoff (pass --cutoff)")
    return cuts.pop()


# -- subcommands --------------------------------------------------------------

def cmd_steady(args) -> int:
    spec = _load(args)
    L = dynamics.build_liouvillian(spec)
    rho = dynamics.steady_state(L, args.method)
    pops = dynamics.populations(rho)
    names = default_observables(spec)
    try:
        av = weakdrive.solve_manifold(spec, 2) if spec.drives else None
    except SolverError:
        av = None
    rows = []
    for k in range(spec.n_sites):
        unit = [0] * spec.n_sites
        unit[k] = 1
        wd = abs(av.amplitude(unit)) ** 2 if av is not None else math.nan
        rows.append((f"n_{k + 1}", float(pops[k]), wd))
    for name in names:
        i, j = (int(x) - 1 for x in name[3:].split("_"))
        try:
            dyn = dynamics.g2_equal_time(rho, i, j)
        except UndefinedCorrelationError:
            dyn = math.nan
        try:
            wd = weakdrive.g2_from_amplitudes(av, i, j) if av is not None else math.nan
        except UndefinedCorrelationError:
            wd = math.nan
        rows.append((name, dyn, wd))

    with _output(args.output) as fh:
        _header(fh, [("command", "steady"), ("method", args.method),
                     ("dim", L.dim)] + spec.parameters())
        if args.convergence:
            cut = _boson_cutoff(spec)
            _, _, delta = cutoff_convergence(spec, cut, names, args.method)
            _header(fh, [("convergence", f"cutoff {cut} -> {cut + 1} max |delta g2| = {fmt(delta)}")])
        fh.write("observable,dynamics,weakdrive,discrepancy\n")
        for name, dyn, wd in rows:
            if math.isnan(dyn) and name.startswith("g2"):
                fh.write(f"{name},undefined,undefined,undefined\n")
                continue
            disc = abs(dyn - wd) if not (math.isnan(dyn) or math.isnan(wd)) else math.nan
            fh.write(f"{name},{fmt(dyn)},{fmt(wd) if not math.isnan(wd) else 'undefined'},"
                     f"{fmt(disc) if not math.isnan(disc) else 'undefined'}\n")
    if args.emit_rho:
        with open(args.emit_rho, "w") as fh:
            fh.write(f"# basis {rho.basis.signature()} dim {rho.basis.dim}\n")
            for r, c in zip(*np.nonzero(rho.matrix)):
                v = rho.matrix[r, c]
                fh.write(f"{r} {c} {fmt(v.real)} {fmt(v.imag)}\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _load(args)
    values = parse_range(args.range)
    observables = args.observables.split(",") if args.observables else default_observables(spec)
    table = run_sweep(spec, args.param, values, observables, args.solver, None,
                      args.method, args.workers)
    summary = []
    y = table[:, 0]
    if not np.all(np.isnan(y)):
        k, x = grid_argmin(values, y)
        summary.append((f"argmin {observables[0]}", f"{fmt(x)} (grid index {k}, value {fmt(y[k])})"))
        if args.refine:
            def f(v):
                val = evaluate(apply_param(spec, args.param, v), observables[:1],
                               args.solver, None, args.method)[0]
                return math.inf if math.isnan(val) else val
            summary.append((f"refined argmin {observables[0]}", fmt(refine_argmin(f, values, k))))
        if args.window is not None:
            win = threshold_window(values, y, args.window)
            if win is None:
                summary.append((f"window {observables[0]} < {fmt(args.window)}", "none"))
            else:
                lo, hi, contiguous = win
                summary.append((f"window {observables[0]} < {fmt(args.window)}",
                                f"{fmt(lo)} {fmt(hi)} width {fmt(hi - lo)}"
                                f"{'' if contiguous else ' (not contiguous)'}"))
    with _output(args.output) as fh:
        _header(fh, [("command", "sweep"), ("param", args.param), ("range", args.range),
                     ("solver", args.solver), ("method", args.method)] + spec.parameters() + summary)
        fh.write(",".join([args.param] + observables) + "\n")
        for v, row in zip(values, table):
            fh.write(",".join([fmt(v)] + [fmt(x) for x in row]) + "\n")
    return EXIT_OK


def cmd_g2tau(args) -> int:
    spec = _load(args)
    if args.points < 2 or not args.tau_max > 0:
        raise ConfigError("need --points >= 2 and --tau-max > 0")
    L = dynamics.build_liouvillian(spec)
    rho = dynamics.steady_state(L, args.method)
    taus = np.linspace(0.0, args.tau_max, args.points)
    g2 = dynamics.g2_two_time(L, rho, args.mode - 1, taus)
    extra = []
    try:
        extra.append(("dominant_period", fmt(dominant_period(taus, g2))))
    except ConfigError:
        extra.append(("dominant_period", "undefined"))
    with _output(args.output) as fh:
        header = [("command", "g2tau"), ("mode", args.mode), ("tau_max", fmt(args.tau_max)),
                  ("points", args.points), ("method", args.method)] + spec.parameters() + extra
        dynamics.write_g2_csv(fh, taus, g2, header)
    return EXIT_OK


def cmd_optimal(args) -> int:
    with _output(args.output) as fh:
        if args.scan:
            js = parse_range(args.scan)
            _header(fh, [("command", "optimal"), ("gamma", fmt(args.gamma)), ("scan", args.scan)])
            fh.write("J,branch,delta_e_opt,u_opt,feasible,delta_e_approx,u_approx\n")
            for J in js:
                plus, _ = analytics.optimal_exact(J, args.gamma)
                ap = analytics.optimal_approx(J, args.gamma)
                fh.write(f"{fmt(J)},+,{fmt(plus.delta_e_opt)},{fmt(plus.u_opt)},{int(plus.feasible)},"
                         f"{fmt(ap.delta_e_opt)},{fmt(ap.u_opt)}\n")
            return EXIT_OK
        if args.J is None:
            raise ConfigError("--J is required unless --scan is given")
        _header(fh, [("command", "optimal"), ("J", fmt(args.J)), ("gamma", fmt(args.gamma))])
        fh.write("formula,branch,delta_e_opt,u_opt,feasible\n")
        for p in analytics.optimal_exact(args.J, args.gamma):
            sign = "+" if p.branch > 0 else "-"
            fh.write(f"exact,{sign},{fmt(p.delta_e_opt)},{fmt(p.u_opt)},{int(p.feasible)}\n")
        if args.approx:
            p = analytics.optimal_approx(args.J, args.gamma)
            fh.write(f"approx,+,{fmt(p.delta_e_opt)},{fmt(p.u_opt)},{int(p.feasible)}\n")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockade", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cutoff=True):
        p.add_argument("config", type=Path)
        p.add_argument("--method", choices=("auto", "direct", "sector", "evolve"), default="auto")
        if cutoff:
            p.add_argument("--cutoff", type=int, help="override every boson cutoff")
        p.add_argument("--output", "-o", help="write CSV here instead of stdout")

    p = sub.add_parser("steady", help="steady-state populations and g2(0)")
    common(p)
    p.add_argument("--emit-rho", metavar="PATH", help="dump the density matrix as 'row col re im'")
    p.add_argument("--convergence", action="store_true", help="re-run at cutoff+1 and report the change")
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("sweep", help="sweep one parameter over a closed grid")
    common(p)
    p.add_argument("--param", choices=PARAMS, required=True)
    p.add_argument("--range", required=True, metavar="LO:HI:N")
    p.add_argument("--observables", help="comma list, e.g. g2_1_1,g2_1_2,n_2 (default: all g2)")
    p.add_argument("--solver", choices=("dynamics", "weakdrive"), default="dynamics")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--refine", action="store_true", help="golden-section refinement of the argmin")
    p.add_argument("--window", type=float, metavar="THRESHOLD",
                   help="report the interval around the argmin where the first observable < THRESHOLD")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("g2tau", help="two-time g2(tau) of one mode")
    common(p)
    p.add_argument("--tau-max", type=float, default=20.0)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--mode", type=int, default=1, help="1-based boson site")
    p.set_defaults(func=cmd_g2tau)

    p = sub.add_parser("optimal", help="closed-form optimal detuning and Kerr strength")
    p.add_argument("--J", type=float)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--approx", action="store_true", help="also print the large-J asymptote")
    p.add_argument("--scan", metavar="LO:HI:N", help="CSV of the optimum over a grid of J")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_optimal)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"blockade: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"blockade: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
