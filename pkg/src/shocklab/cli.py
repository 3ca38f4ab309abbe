"""Command-line surface.

Exit codes: 0 pass, 1 tolerance failure, 2 usage error, 3 numerical
non-convergence, 4 window violation.
"""

import argparse
import json
import sys

import numpy as np

from . import blocking, laws
from .errors import NonConvergenceError, WindowViolationError
from .experiments import ExperimentSpec, default_threads, run_experiment
from .lattice import ArrowStream, kmc_evolve
from .shock import ShockParams, build_reversed_step, build_shock_ic, build_step_ic

EXIT_PASS = 0
EXIT_TOLERANCE = 1
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3
EXIT_VIOLATION = 4

_DUMP_HELP = ("write one line per snapshot to stdout: time, a tab, then the "
              "run-length-encoded occupancy of the whole window as "
              "comma-separated count*code tokens with codes 0=hole, "
              "1=second-class, 2=first-class (e.g. '120*2,3*0,1*1,...')")


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def load_config(path):
    """Plain 'key = value' lines; '#' starts a comment; blank lines ignored."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _coerce(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def apply_config(args, parser_defaults, config):
    """Fill unset options (still at their parser default of None) from the
    config file; explicit command-line values win."""
    for key, val in config.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, _coerce(val))
    for key, val in parser_defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    return args


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--threads", type=int, default=None,
                        help="replica worker threads")
    common.add_argument("--out", default=None,
                        help="directory for CSV/JSON artifacts")
    common.add_argument("--config", default=None,
                        help="file of 'key = value' defaults; command line wins")

    parser = argparse.ArgumentParser(
        prog="shocklab",
        description="Exclusion-process shock simulator and limit-law numerics")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common],
                         help="run one trajectory and optionally dump snapshots")
    sim.add_argument("--ic", choices=("shock", "step", "revstep"), default="shock")
    sim.add_argument("--p", type=float, default=None)
    sim.add_argument("--t", type=float, default=None)
    sim.add_argument("--M", type=int, default=None)
    sim.add_argument("--C", type=float, default=None)
    sim.add_argument("--Z", type=int, default=None, help="reversed-step position")
    sim.add_argument("--observe", type=_float_list, default=None,
                     help="comma-separated snapshot times")
    sim.add_argument("--dump", action="store_true", help=_DUMP_HELP)

    exp = sub.add_parser("experiment", parents=[common],
                         help="run a named statistical experiment")
    exp.add_argument("name", help="experiment name")
    exp.add_argument("--p", type=float, default=None)
    exp.add_argument("--t", type=float, default=None)
    exp.add_argument("--M", type=int, default=None)
    exp.add_argument("--Z", type=int, default=None)
    exp.add_argument("--replicas", type=int, default=None)
    exp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="extra experiment parameter, repeatable")
    exp.add_argument("--tolerance", action="append", default=[],
                     metavar="KEY=VALUE", help="tolerance override, repeatable")

    dist = sub.add_parser("dist", parents=[common],
                          help="print distribution tables as CSV on stdout")
    dist.add_argument("family", choices=("fgue", "fmp", "fm1", "pmfP", "diff", "v0"))
    dist.add_argument("--s", type=_float_list, default=None,
                      help="comma-separated evaluation points")
    dist.add_argument("--M", type=int, default=None)
    dist.add_argument("--p", type=float, default=None)
    dist.add_argument("--method", choices=("contour", "residue"), default="contour")
    dist.add_argument("--grid", type=int, default=None, help="Brownian grid steps")
    dist.add_argument("--replicas", type=int, default=None)
    dist.add_argument("--Lmax", type=int, default=None)
    dist.add_argument("--limit", action="store_true",
                      help="difference-of-GUE limit law instead of finite M")
    dist.add_argument("--range", dest="range_", type=int, default=None,
                      help="report the pmf on |i| <= range")

    den = sub.add_parser("density", parents=[common],
                         help="binned density profile of the evolved shock")
    den.add_argument("--p", type=float, default=None)
    den.add_argument("--t", type=float, default=None)
    den.add_argument("--M", type=int, default=None)
    den.add_argument("--bin", dest="bin_width", type=int, default=None)
    den.add_argument("--replicas", type=int, default=None)
    return parser


def _cmd_simulate(args):
    p = args.p
    observe = args.observe or []
    if args.ic == "shock":
        params = ShockParams(p=p, t=args.t, M=args.M, C=args.C, seed=args.seed)
        cfg = build_shock_ic(params)
    elif args.ic == "step":
        cfg = build_step_ic(p, args.t)
    else:
        cfg = build_reversed_step(args.Z if args.Z is not None else 0)
    try:
        traj = kmc_evolve(cfg, ArrowStream(args.seed, p), args.t,
                          observe_at=observe)
    except WindowViolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    if args.dump:
        for t, snap in traj.snapshots:
            sys.stdout.write(f"{t:.6f}\t{snap.rle()}\n")
    print(f"events={traj.event_count} rings={traj.rings_generated}",
          file=sys.stderr)
    return EXIT_PASS


def _parse_kv(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise ValueError(f"expected KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = _coerce(val.strip())
    return out


def _cmd_experiment(args):
    params = _parse_kv(args.set)
    for key in ("p", "t", "M", "Z"):
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    spec = ExperimentSpec(name=args.name, params=params, replicas=args.replicas,
                          seed=args.seed, threads=args.threads,
                          out_dir=args.out, tolerances=_parse_kv(args.tolerance))
    report = run_experiment(spec)
    sys.stdout.write(report.summary_json())
    timing = report.timing_dict()
    print(f"runtime={timing['runtime_seconds']:.2f}s "
          f"rings/s={timing['events_per_second']:.3g}", file=sys.stderr)
    if report.failure:
        if report.failure.startswith("window-violation"):
            return EXIT_VIOLATION
        if report.failure.startswith("non-convergence"):
            return EXIT_NONCONVERGENCE
        return EXIT_TOLERANCE
    return EXIT_PASS if report.passed else EXIT_TOLERANCE


def _csv_out(header, rows):
    sys.stdout.write(",".join(header) + "\n")
    for row in rows:
        sys.stdout.write(",".join(str(v) for v in row) + "\n")


def _cmd_dist(args):
    fam = args.family
    if fam == "fgue":
        s_list = args.s or [float(x) for x in np.linspace(-5, 2, 15)]
        _csv_out(["s", "F_GUE"], [(s, f"{laws.f_gue(s):.12f}") for s in s_list])
    elif fam == "fmp":
        M, p = args.M or 1, args.p or 0.7
        s_list = args.s or [1.0, 2.0, 3.0]
        fn = laws.f_mp_contour if args.method == "contour" else laws.f_mp_residue
        _csv_out(["M", "p", "s", "method", "F"],
                 [(M, p, s, args.method, f"{fn(M, p, s):.12f}") for s in s_list])
    elif fam == "fm1":
        M = args.M or 1
        s_list = args.s or [1.0]
        grid = args.grid or 1024
        replicas = args.replicas or 20000
        rows = []
        for s in s_list:
            est, se = laws.f_m1_mc(M, s, grid, replicas, args.seed)
            rows.append((M, s, grid, replicas, f"{est:.6f}", f"{se:.6f}"))
        _csv_out(["M", "s", "grid", "replicas", "estimate", "stderr"], rows)
    elif fam == "pmfP":
        M, p = args.M or 1, args.p or 0.7
        probs, tail = laws.pmf_P_table(M, p)
        lmax = args.Lmax if args.Lmax is not None else len(probs) - 1
        _csv_out(["L", "probability"],
                 [(L, f"{laws.pmf_P(L, M, p):.12f}") for L in range(lmax + 1)])
        print(f"tail_mass={tail:.3e}", file=sys.stderr)
    elif fam == "diff":
        s_list = args.s or [float(x) for x in np.linspace(-3, 3, 13)]
        if args.limit:
            rows = [(s, "limit", f"{laws.diff_law_cdf(s, limit=True):.9f}")
                    for s in s_list]
        else:
            M, p = args.M or 1, args.p or 0.7
            rows = [(s, f"M={M}", f"{laws.diff_law_cdf(s, M, p):.9f}")
                    for s in s_list]
        _csv_out(["s", "mode", "cdf"], rows)
    elif fam == "v0":
        p = args.p or 0.7
        r = args.range_ if args.range_ is not None else 8
        bp = blocking.BlockingParams(p=p)
        table = blocking.v0_pmf_table(bp, r)
        _csv_out(["i", "probability"],
                 [(i, f"{prob:.12f}") for i, prob in table.items()])
    return EXIT_PASS


def _cmd_density(args):
    params = {}
    for key in ("p", "t", "M"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    if args.bin_width is not None:
        params["bin_width"] = args.bin_width
    spec = ExperimentSpec(name="density", params=params, replicas=args.replicas,
                          seed=args.seed, threads=args.threads, out_dir=args.out)
    report = run_experiment(spec)
    print(report.summary_json(), file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_TOLERANCE


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    config = {}
    if getattr(args, "config", None):
        try:
            config = load_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    hard_defaults = {"seed": 0, "threads": default_threads(), "p": 0.7,
                     "t": 200.0, "M": 1}
    apply_config(args, hard_defaults, config)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "experiment":
            return _cmd_experiment(args)
        if args.command == "dist":
            return _cmd_dist(args)
        if args.command == "density":
            return _cmd_density(args)
    except NonConvergenceError as exc:
        print(f"error: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except WindowViolationError as exc:
        print(f"error: window violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
