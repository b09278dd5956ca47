"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 numerical failure. Tables go to
standard output (or ``--out``) as CSV with 17 significant digits;
diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from typing import Sequence

import numpy as np

from . import figures
from .bounds import bound_curve, strong_bound
from .calibrate import (
    LearnConfig,
    format_profile,
    identity_system,
    learn_profile,
    load_profile,
    model_system,
    rapp_system,
    reference_input_fisher,
)
from .errors import FisherBoundError
from .estimate import asymptotic_check
from .expfam import LogNormal, Weibull, gaussian_location
from .profile import closed_form_point, parse_stats

EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(header: Sequence[str], rows, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)


def _add_dist(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--dist", choices=["gaussian", "lognormal", "weibull"], required=required)
    p.add_argument("--sigma", type=float, help="log-normal scale, or Gaussian standard deviation")
    p.add_argument("--k", type=float, help="Weibull shape")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta", type=float)
    p.add_argument("--theta-min", type=float)
    p.add_argument("--theta-max", type=float)
    p.add_argument("--theta-steps", type=int)


def _add_system(p: argparse.ArgumentParser) -> None:
    p.add_argument("--system", choices=["rapp", "identity"])
    p.add_argument("--rho", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fisherbound", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="exact Fisher information of a reference model")
    _add_dist(p, required=True)
    _add_grid(p)
    p.add_argument("--out")

    p = sub.add_parser("bound", help="strong Fisher information bound")
    _add_dist(p)
    _add_grid(p)
    _add_system(p)
    p.add_argument("--stats", default="pow1,pow2")
    p.add_argument("--profile")
    p.add_argument("--weights", action="store_true", help="append normalized weight columns")
    p.add_argument("--out")

    p = sub.add_parser("learn", help="calibrate a moment profile by Monte-Carlo")
    _add_system(p)
    _add_dist(p)
    _add_grid(p)
    p.add_argument("--stats", default=figures.RAPP_STATS)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diff-step", type=float, default=1e-2)
    p.add_argument("--no-crn", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("estimate", help="CMLE Monte-Carlo trials")
    _add_dist(p)
    _add_system(p)
    p.add_argument("--theta", type=float, required=True, help="true parameter")
    p.add_argument("--stats", default="pow1")
    p.add_argument("--profile")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", choices=["optimal", "ones"], default="optimal")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("reproduce", help="figure data as CSV")
    p.add_argument("figure", choices=sorted(figures.FIGURES))
    p.add_argument("--sigma-max", type=float)
    p.add_argument("--dist", choices=["weibull", "lognormal"])
    p.add_argument("--rho", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--theta-min", type=float)
    p.add_argument("--theta-max", type=float)
    p.add_argument("--theta-steps", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    return parser


def _model(args, parser):
    if args.dist is None:
        return None
    if args.dist == "weibull":
        if args.k is None:
            parser.error("--dist weibull requires --k")
        if not args.k > 0:
            parser.error("--k must be positive")
        return Weibull(args.k)
    sigma = 1.0 if args.sigma is None else args.sigma
    if not sigma > 0:
        parser.error("--sigma must be positive")
    if args.dist == "lognormal":
        if args.sigma is None:
            parser.error("--dist lognormal requires --sigma")
        return LogNormal(sigma)
    return gaussian_location(sigma**2)


def _system(args, parser):
    if args.system is None:
        return None
    if args.system == "rapp":
        if args.rho is None or not args.rho > 0:
            parser.error("--system rapp requires a positive --rho")
        return rapp_system(args.rho)
    return identity_system()


def _thetas(args, parser, default=None) -> np.ndarray:
    span = (args.theta_min, args.theta_max, args.theta_steps)
    if args.theta is not None:
        if any(v is not None for v in span):
            parser.error("use either --theta or --theta-min/--theta-max/--theta-steps")
        return np.array([args.theta])
    if all(v is None for v in span):
        if default is None:
            parser.error("give --theta or --theta-min/--theta-max/--theta-steps")
        return np.asarray(default)
    if any(v is None for v in span):
        parser.error("--theta-min, --theta-max and --theta-steps go together")
    if args.theta_steps < 1 or (args.theta_steps > 1 and not args.theta_max > args.theta_min):
        parser.error("need --theta-steps >= 1 and --theta-max > --theta-min")
    return np.linspace(args.theta_min, args.theta_max, args.theta_steps)


def _stats(args, parser):
    try:
        return parse_stats(args.stats)
    except ValueError as e:
        parser.error(str(e))


def _validate_positive(parser, **values) -> None:
    for name, v in values.items():
        if v is not None and v < 1:
            parser.error(f"--{name.replace('_', '-')} must be >= 1")


def cmd_info(args, parser, out) -> None:
    model = _model(args, parser)
    thetas = _thetas(args, parser)
    write_csv(["theta", "fisher"], [[t, model.fisher(t)] for t in thetas], out)


def cmd_bound(args, parser, out) -> None:
    if args.profile is not None:
        if args.dist is not None:
            parser.error("--profile and --dist are exclusive")
        system = _system(args, parser)
        prof = load_profile(args.profile)
        exact = reference_input_fisher if system is not None else None
        reports = bound_curve(prof, exact)
        labels = prof.labels
    else:
        model = _model(args, parser)
        if model is None:
            parser.error("bound needs --dist or --profile")
        stats = _stats(args, parser)
        thetas = _thetas(args, parser)
        reports = []
        for t in thetas:
            try:
                reports.append(strong_bound(closed_form_point(model, stats, t), model.fisher(t)))
            except FisherBoundError as e:
                e.op = e.op or "strong_bound"
                e.theta = float(t)
                raise
        labels = [s.label for s in stats]
    has_chi = reports and reports[0].chi is not None
    header = ["theta", "bound"] + (["fisher", "chi", "chi_db"] if has_chi else [])
    if args.weights:
        header += [f"w_{lab}" for lab in labels]
    rows = []
    for r in reports:
        row = [r.theta, r.bound]
        if has_chi:
            row += [r.bound / r.chi, r.chi, r.chi_db]
        if args.weights:
            row += list(r.norm_weights)
        rows.append(row)
    write_csv(header, rows, out)


def cmd_learn(args, parser, out) -> None:
    system = _system(args, parser)
    model = _model(args, parser)
    if (system is None) == (model is None):
        parser.error("learn needs exactly one of --system or --dist")
    if system is None:
        system = model_system(model)
    _validate_positive(parser, samples=args.samples, workers=args.workers)
    thetas = _thetas(args, parser, default=np.linspace(0.0, 4.0, 81))
    try:
        cfg = LearnConfig(
            theta_grid=tuple(thetas),
            stats=_stats(args, parser),
            samples_per_point=args.samples,
            seed=args.seed,
            diff_step=args.diff_step,
            crn=not args.no_crn,
        )
    except ValueError as e:
        parser.error(str(e))
    out.write(format_profile(learn_profile(system, cfg, workers=args.workers)))


def cmd_estimate(args, parser, out) -> None:
    _validate_positive(parser, n=args.n, trials=args.trials, workers=args.workers)
    if args.trials < 2:
        parser.error("--trials must be >= 2")
    stats = _stats(args, parser)
    if args.profile is not None:
        system = _system(args, parser)
        if system is None:
            parser.error("--profile requires --system to generate data")
        source = load_profile(args.profile)
        if tuple(source.stats) != stats:
            stats = tuple(source.stats)
    else:
        source = _model(args, parser)
        system = None
        if source is None:
            parser.error("estimate needs --dist or --profile")
    report = asymptotic_check(
        source,
        args.theta,
        stats,
        n_per_trial=args.n,
        trials=args.trials,
        seed=args.seed,
        weights=args.weights,
        system=system,
        workers=args.workers,
    )
    for i, msg in sorted(report.failures.items()):
        print(f"trial {i} failed: {msg}", file=sys.stderr)
    out.write(report.to_csv())


def cmd_reproduce(args, parser, out) -> None:
    fig = args.figure
    kw = {}
    mc_only = ("rho", "samples", "seed", "theta_min", "theta_max", "theta_steps", "workers")
    if fig in ("fig6", "fig7"):
        for name, key in (("rho", "rho"), ("samples", "samples"), ("seed", "seed"),
                          ("theta_min", "theta_min"), ("theta_max", "theta_max"),
                          ("theta_steps", "steps"), ("workers", "workers")):
            v = getattr(args, name)
            if v is not None:
                kw[key] = v
        _validate_positive(parser, samples=kw.get("samples"), theta_steps=kw.get("steps"),
                           workers=kw.get("workers"))
    else:
        given = [n for n in mc_only if getattr(args, n) is not None]
        if given:
            parser.error(f"{fig} does not accept --{given[0].replace('_', '-')}")
    if args.sigma_max is not None:
        if fig != "fig1":
            parser.error("--sigma-max applies to fig1 only")
        if not args.sigma_max > 0.2:
            parser.error("--sigma-max must exceed 0.2")
        kw["sigma_max"] = args.sigma_max
    if args.dist is not None:
        if fig != "fig3":
            parser.error("--dist applies to fig3 only")
        kw["dist"] = args.dist
    try:
        header, rows = figures.FIGURES[fig](**kw)
    except ValueError as e:
        if isinstance(e, FisherBoundError):
            raise
        parser.error(str(e))
    write_csv(header, rows, out)


COMMANDS = {
    "info": cmd_info,
    "bound": cmd_bound,
    "learn": cmd_learn,
    "estimate": cmd_estimate,
    "reproduce": cmd_reproduce,
}


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    old_err = sys.stderr
    sys.stderr = stderr
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=stderr)
        buf = io.StringIO()
        try:
            COMMANDS[args.command](args, parser, buf)
        except SystemExit as e:
            return int(e.code or 0)
        except FisherBoundError as e:
            print(f"fisherbound {args.command}: numerical failure: {e}", file=stderr)
            return EXIT_NUMERIC
        except OSError as e:
            print(f"fisherbound {args.command}: {e}", file=stderr)
            return EXIT_USAGE
        if getattr(args, "out", None):
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(buf.getvalue())
        else:
            stdout.write(buf.getvalue())
        return 0
    finally:
        sys.stderr = old_err


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
