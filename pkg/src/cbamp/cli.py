"""Command-line entry point.

Subcommands: ``gen``, ``solve``, ``se``, ``mse-curve``, ``phase``, ``se-boundary``.
Every option may also come from a JSON file given with ``--config``; flags
on the command line take precedence.  Exit status is 0 on success, 1 on a
usage error and 2 when a solver diverges.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys

from . import __version__
from .amp import SolverConfig
from .errors import DivergenceError, ParameterError, RangeError
from .harness import (
    BOUNDARY_HEADER,
    MSE_CURVE_HEADER,
    PHASE_HEADER,
    SE_COMPARE_HEADER,
    SOLVERS,
    ExperimentConfig,
    fmt,
    measurements,
    phase_rows,
    run_mse_curve,
    run_phase,
    run_se_boundary,
    run_se_compare,
    write_csv,
)
from .model import InstanceSpec, PriorBG
from .state_evolution import SEParams, se_run

EXIT_USAGE = 1
EXIT_DIVERGED = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_grid(text):
    """``"a:b:step"`` (inclusive) or a comma-separated list of floats."""
    text = str(text)
    try:
        if ":" in text:
            a, b, s = (float(v) for v in text.split(":"))
            if s <= 0 or b < a:
                raise ValueError
            count = int(round((b - a) / s)) + 1
            return [round(a + k * s, 10) for k in range(count)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}; use a:b:step or a,b,c") from None


def _grid_default(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return parse_grid(value)


def _problem_args(p, n=1000):
    p.add_argument("--n", type=int, default=n, help="signal length N")
    p.add_argument("--alpha", type=float, default=0.5, help="measurement rate M/N")
    p.add_argument("--m", type=int, default=None, help="number of measurements (overrides --alpha)")
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--mu", type=complex, default=0j, help="slab mean, e.g. 0 or 1+1j")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1e-4)
    p.add_argument("--gamma", type=float, default=None, help="entry variance (default 1/N)")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="cbamp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cbamp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file supplying option defaults")
        p.add_argument("--output", "-o", default=None, help="write CSV here instead of stdout")
        return p

    p = add("gen", "write a seed-level problem description as JSON")
    _problem_args(p)

    p = add("solve", "run one solver on one instance and print its trace")
    _problem_args(p)
    p.add_argument("--algo", choices=sorted(SOLVERS), default="cbamp")
    p.add_argument("--instance", help="JSON problem description from `gen`")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--sigma2-floor", type=float, default=1e-12)
    p.add_argument("--no-onsager", action="store_true", help="drop the Onsager correction")

    p = add("se", "state-evolution trace")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--mu", type=complex, default=0j)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1e-4)
    p.add_argument("--gamma-n", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--mode", choices=("mc", "quad"), default="mc")
    p.add_argument("--seed", type=int, default=0)

    p = add("mse-curve", "mean MSE per iteration over trials")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--mu", type=complex, default=0j)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1e-4)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--algos", default="cbamp,real-amp")
    p.add_argument("--with-se", action="store_true", help="append the state-evolution curve")
    p.add_argument("--compare-se", action="store_true",
                   help="emit CB-AMP against state evolution with relative errors")
    p.add_argument("--samples", type=int, default=100_000, help="state-evolution MC samples")

    p = add("phase", "noiseless success-rate grid and 50%% crossings")
    p.add_argument("--mode", choices=("empirical", "se"), default="empirical")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--trials", type=int, default=9)
    p.add_argument("--rho", type=parse_grid, default=parse_grid("0.05:0.5:0.05"))
    p.add_argument("--alpha", type=parse_grid, default=parse_grid("0.05:1.0:0.05"))
    p.add_argument("--mu", type=complex, default=0j)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--algos", default="cbamp,real-amp")
    p.add_argument("--boundary-output", default=None,
                   help="file for the alpha_50 table (default: appended to the output)")
    p.add_argument("--tol", type=float, default=1e-3, help="bisection tolerance for --mode se")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0, help="state-evolution seed for --mode se")

    p = add("se-boundary", "state-evolution phase boundary by bisection")
    p.add_argument("--rho", type=parse_grid, default=parse_grid("0.05:0.5:0.05"))
    p.add_argument("--mu", type=complex, default=0j)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--mode", choices=("mc", "quad"), default="mc")
    p.add_argument("--seed", type=int, default=0)
    return parser, sub


def _apply_config_file(parser, sub, argv):
    """Re-parse with defaults taken from ``--config`` when one is given."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            values = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config!r}: {exc}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object")
    subparser = sub.choices[args.command]
    known = {a.dest for a in subparser._actions}
    defaults = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in known:
            parser.error(f"unknown config key {key!r} for {args.command}")
        if dest in ("rho", "alpha") and args.command in ("phase", "se-boundary"):
            value = _grid_default(value)
        elif dest == "mu" and not isinstance(value, complex):
            value = complex(value) if not isinstance(value, dict) else \
                complex(value.get("re", 0.0), value.get("im", 0.0))
        elif dest == "algos" and isinstance(value, list):
            value = ",".join(value)
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _algos(text):
    algos = [a.strip() for a in text.split(",") if a.strip()]
    unknown = [a for a in algos if a not in SOLVERS]
    if unknown or not algos:
        raise UsageError(f"unknown algorithm(s) {unknown}; choose from {sorted(SOLVERS)}")
    return algos


def _resolved(args):
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("config", "output", "boundary_output"):
            continue
        out[k] = [v.real, v.imag] if isinstance(v, complex) else v
    return out


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _spec_from_args(args):
    if getattr(args, "instance", None):
        with open(args.instance) as fh:
            return InstanceSpec.from_json(fh.read())
    prior = PriorBG(args.rho, args.mu, args.tau)
    m = args.m if args.m is not None else measurements(args.alpha, args.n)
    return InstanceSpec.from_trial_seed(m, args.n, prior, args.sigma2, args.seed, gamma=args.gamma)


def cmd_gen(args):
    with _sink(args.output) as fh:
        fh.write(_spec_from_args(args).to_json() + "\n")


def cmd_solve(args):
    spec = _spec_from_args(args)
    problem = spec.build()
    config = SolverConfig(args.iters, args.tol, args.sigma2_floor, args.damping,
                          onsager=not args.no_onsager)
    notes = [f"instance {json.dumps(spec.to_dict(), sort_keys=True)}"]
    try:
        _, _, trace = SOLVERS[args.algo](problem, config)
    except DivergenceError as exc:
        with _sink(args.output) as fh:
            write_csv(fh, ("t", "mse", "mean_nu", "mean_Va", "residual"),
                      _trace_rows(exc.trace or []), _resolved(args), notes)
            fh.write("# diverged\n")
        print(f"cbamp: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    with _sink(args.output) as fh:
        write_csv(fh, ("t", "mse", "mean_nu", "mean_Va", "residual"), _trace_rows(trace),
                  _resolved(args), notes)
        fh.write(f"# final_mse={fmt(trace[-1].mse)}\n")
    return 0


def _trace_rows(trace):
    return [(r.t, r.mse, r.mean_nu, r.mean_Va, r.residual) for r in trace]


def cmd_se(args):
    params = SEParams(args.alpha, PriorBG(args.rho, args.mu, args.tau), args.sigma2,
                      args.gamma_n, args.samples, args.seed, args.mode)
    trace = se_run(params, args.iters)
    with _sink(args.output) as fh:
        write_csv(fh, ("t", "E", "V"), zip(trace.t, trace.E, trace.V), _resolved(args))


def _experiment(args, kind, **extra):
    return ExperimentConfig(
        kind=kind, n=args.n, alpha=args.alpha, rho=args.rho, mu_re=args.mu.real,
        mu_im=args.mu.imag, tau=args.tau, iters=args.iters, trials=args.trials,
        base_seed=args.base_seed, algos=_algos(args.algos), output=args.output, **extra)


def cmd_mse_curve(args):
    if args.compare_se:
        cfg = _experiment(args, "se-compare", sigma2=args.sigma2, se_samples=args.samples)
        rows, header = run_se_compare(cfg), SE_COMPARE_HEADER
    else:
        cfg = _experiment(args, "mse-curve", sigma2=args.sigma2, with_se=args.with_se,
                          se_samples=args.samples)
        rows, header = run_mse_curve(cfg), MSE_CURVE_HEADER
    with _sink(args.output) as fh:
        write_csv(fh, header, rows, _resolved(args),
                  [f"trials={cfg.trials} seeds {cfg.base_seed}..{cfg.base_seed + cfg.trials - 1}"])


def _write_boundary(args, rows, header, fh_main):
    if args.boundary_output:
        with _sink(args.boundary_output) as fh:
            write_csv(fh, header, rows, _resolved(args))
    else:
        fh_main.write("\n")
        write_csv(fh_main, header, rows)


def cmd_phase(args):
    if args.mode == "se":
        return cmd_se_boundary(args)
    cfg = _experiment(args, "phase", sigma2=0.0)
    points, boundaries = run_phase(cfg)
    notes = ["sigma2=0 at generation; solvers apply sigma2_floor=1e-12",
             f"success: final MSE < 1e-4; trials per cell={cfg.trials}",
             "alpha_50: isotonic fit then linear interpolation; nan = no crossing in grid"]
    with _sink(args.output) as fh:
        write_csv(fh, PHASE_HEADER, phase_rows(points), _resolved(args), notes)
        _write_boundary(args, boundaries, BOUNDARY_HEADER, fh)
    return 0


def cmd_se_boundary(args):
    prior = PriorBG(0.5, args.mu, args.tau)
    # `phase --mode se` reuses this command with Monte Carlo state evolution
    mode = args.mode if args.command == "se-boundary" else "mc"
    rows = run_se_boundary(prior, args.rho, tol=args.tol, iters=args.iters,
                           mc_samples=args.samples, seed=args.seed, mode=mode)
    with _sink(args.output) as fh:
        write_csv(fh, ("rho", "alpha_star"), rows, _resolved(args))
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "se": cmd_se,
    "mse-curve": cmd_mse_curve,
    "phase": cmd_phase,
    "se-boundary": cmd_se_boundary,
}


def main(argv=None):
    parser, sub = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config_file(parser, sub, argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args) or 0
    except (UsageError, ParameterError, RangeError, OSError) as exc:
        print(f"cbamp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"cbamp: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
