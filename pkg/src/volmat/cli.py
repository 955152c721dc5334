"""Command-line interface.

Subcommands: ``estimate`` (panel CSV in, matrix CSV out), ``benchmark``
(Monte Carlo report CSV plus figure), ``simulate`` (dump one generated
instance), ``transform`` (sine-transform whitening to CSV), and ``tune``
(rolling selection of scale count and threshold).

Every flag can also be supplied through ``--config FILE`` holding one
``key = value`` pair per line (``#`` starts a comment); command-line flags
override file values, unknown keys are rejected, and every run logs its
fully resolved configuration to stderr in the same re-feedable format.
Exit codes: 0 on success, 1 on numerical failure, 2 on usage or
validation errors.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import simulate as sim
from .core import (
    PricePanel,
    VolmatError,
    _atomic_write_text,
    read_panel_csv,
    write_matrix_csv,
    write_panel_csv,
)
from .estimators import ThresholdRule, arvm, msrvm, scale_weights, threshold
from .norms import NoConvergenceError
from .transform import whiten
from .tuning import TuningGrid, rolling_select

__all__ = ["main"]

_METHODS = ("msrvm", "arvm", "thr-msrvm", "thr-arvm")


class _UsageError(Exception):
    """Validation failure that should exit with code 2."""


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise _UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in values:
                raise _UsageError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
    return values


def _comma_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip() != "")


def _comma_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


def _comma_names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip() != "")


def _bool_flag(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Resolve --config before the real parse so flags override the file."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    file_values = _parse_config_file(known.config)
    valid = {
        action.dest: action
        for action in parser._actions
        if action.dest not in ("help", "config")
    }
    defaults = {}
    for key, raw in file_values.items():
        dest = key.replace("-", "_")
        if dest not in valid:
            raise _UsageError(f"unknown config key {key!r}")
        action = valid[dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = _bool_flag(raw)
            continue
        caster = action.type or str
        try:
            defaults[dest] = caster(raw)
        except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
            raise _UsageError(f"config key {key!r}: {exc}") from exc
    parser.set_defaults(**defaults)
    for dest in defaults:
        valid[dest].required = False  # the file already supplied it
    return argv


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _log_resolved(command: str, args: argparse.Namespace, skip=("config",)) -> None:
    print(f"[volmat {command}] resolved configuration:", file=sys.stderr)
    for key in sorted(vars(args)):
        if key in skip or key == "func":
            continue
        value = getattr(args, key)
        if value is None:
            continue
        print(f"  {key.replace('_', '-')} = {_format_value(value)}", file=sys.stderr)


# ---------------------------------------------------------------------------
# estimate


def _add_estimate_parser(sub) -> None:
    p = sub.add_parser("estimate", help="estimate a volatility matrix from a panel CSV")
    p.add_argument("--config", help="key = value config file; flags override")
    p.add_argument("--input", required=True, help="panel CSV path")
    p.add_argument("--method", required=True, choices=_METHODS)
    p.add_argument("--N", type=int, help="scale count for msrvm methods "
                   "(default floor(sqrt(n)))")
    p.add_argument("--K", type=int, help="subsampling gap, required for arvm methods")
    p.add_argument("--hbar", type=float,
                   help="threshold constant; varpi = hbar * n**-0.25 * sqrt(log(n p))")
    p.add_argument("--varpi", type=float, help="absolute threshold level")
    p.add_argument("--diag-exempt", type=_bool_flag, default=False,
                   help="leave diagonal entries unthresholded (default false)")
    p.add_argument("--output", required=True, help="matrix CSV path")
    p.set_defaults(func=_cmd_estimate)


def _cmd_estimate(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    panel = read_panel_csv(args.input)
    thresholded = args.method.startswith("thr-")
    if thresholded:
        if (args.varpi is None) == (args.hbar is None):
            raise _UsageError(
                f"method {args.method} needs exactly one of --varpi or --hbar"
            )
    elif args.varpi is not None or args.hbar is not None:
        raise _UsageError("--varpi/--hbar only apply to thresholded methods")

    uses_msrvm = args.method.endswith("msrvm")
    if uses_msrvm:
        if args.K is not None:
            raise _UsageError("--K only applies to arvm methods")
        weights = scale_weights(panel.n, N=args.N)
        scale_info = f"N={weights.N}"
        estimate = msrvm(panel, weights)
    else:
        if args.N is not None:
            raise _UsageError("--N only applies to msrvm methods")
        if args.K is None:
            raise _UsageError(f"method {args.method} requires --K")
        scale_info = f"K={args.K}"
        estimate = arvm(panel, args.K)

    varpi_info = ""
    if thresholded:
        if args.varpi is not None:
            rule = ThresholdRule(args.varpi, apply_to_diagonal=not args.diag_exempt)
        else:
            rule = ThresholdRule.from_hbar(
                args.hbar, panel.n, panel.p, apply_to_diagonal=not args.diag_exempt
            )
        estimate = threshold(estimate, rule)
        varpi_info = f" varpi={rule.varpi!r}"

    write_matrix_csv(estimate, args.output)
    elapsed = time.perf_counter() - start
    print(
        f"[volmat estimate] n={panel.n} p={panel.p} {scale_info}{varpi_info} "
        f"elapsed={elapsed:.3f}s",
        file=sys.stderr,
    )
    return 0


# ---------------------------------------------------------------------------
# benchmark


def _add_benchmark_parser(sub) -> None:
    p = sub.add_parser("benchmark", help="run the Monte Carlo estimator benchmark")
    p.add_argument("--config", help="key = value config file; flags override")
    p.add_argument("--n", type=int, default=200, help="observation intervals")
    p.add_argument("--p", type=int, default=100, help="assets")
    p.add_argument("--reps", type=int, default=200, help="Monte Carlo repetitions")
    p.add_argument("--seed", type=int, help="master seed (required)")
    p.add_argument("--theta", type=_comma_floats,
                   default=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7),
                   help="comma-separated relative noise levels")
    p.add_argument("--estimators", type=_comma_names,
                   default=("msrvm", "arvm", "thr-msrvm", "thr-arvm"),
                   help="comma-separated subset of msrvm,arvm,thr-msrvm,thr-arvm")
    p.add_argument("--hbar-grid", type=_comma_floats,
                   default=sim.default_hbar_grid(),
                   help="threshold constants searched per noise level")
    p.add_argument("--K-grid", type=_comma_ints, default=None,
                   help="gaps searched for arvm (default round(c sqrt(n)) "
                        "for c in 0.5..4)")
    p.add_argument("--ou-rate", type=float, default=6.0)
    p.add_argument("--ou-mean", type=float, default=0.5)
    p.add_argument("--rho-low", type=float, default=0.47)
    p.add_argument("--rho-high", type=float, default=0.53)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--figure", help="figure path (default: report path with .png)")
    p.add_argument("--no-figure", action="store_true", help="skip the figure")
    p.set_defaults(func=_cmd_benchmark)


def _build_estimators(names, n, hbar_grid, gap_grid):
    gap_grid = gap_grid or sim.default_gap_grid(n)
    available = {
        "msrvm": sim.MultiScaleEstimator(),
        "arvm": sim.AveragedEstimator(gap_grid=gap_grid),
        "thr-msrvm": sim.ThresholdMultiScaleEstimator(hbar_grid=hbar_grid),
        "thr-arvm": sim.ThresholdAveragedEstimator(
            gap_grid=gap_grid, hbar_grid=hbar_grid
        ),
    }
    chosen = []
    for name in names:
        if name not in available:
            raise _UsageError(
                f"unknown estimator {name!r}; choose from {sorted(available)}"
            )
        chosen.append(available[name])
    return chosen


def _cmd_benchmark(args: argparse.Namespace) -> int:
    if args.seed is None:
        raise _UsageError("--seed is required for benchmark runs")
    cfg = sim.SimConfig(
        n=args.n, p=args.p, theta_grid=args.theta, reps=args.reps, seed=args.seed,
        ou_rate=args.ou_rate, ou_mean=args.ou_mean,
        rho_low=args.rho_low, rho_high=args.rho_high,
    )
    estimators = _build_estimators(args.estimators, cfg.n, args.hbar_grid, args.K_grid)
    start = time.perf_counter()
    report = sim.run_benchmark(cfg, estimators)
    elapsed = time.perf_counter() - start

    sim.write_benchmark_csv(report, args.out)
    root, _ = os.path.splitext(args.out)
    sim.write_benchmark_long_csv(report, root + "_long.csv")
    if not args.no_figure:
        from .figures import render_benchmark_figure

        figure_path = args.figure or root + ".png"
        render_benchmark_figure(report, figure_path)
        print(f"[volmat benchmark] figure written to {figure_path}", file=sys.stderr)
    print(
        f"[volmat benchmark] {len(report.rows)} rows, digest={report.digest}, "
        f"elapsed={elapsed:.1f}s",
        file=sys.stderr,
    )
    return 0


# ---------------------------------------------------------------------------
# simulate


def _add_simulate_parser(sub) -> None:
    p = sub.add_parser("simulate", help="dump one simulated instance to CSV")
    p.add_argument("--config", help="key = value config file; flags override")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--theta", type=float, default=0.5, help="relative noise level")
    p.add_argument("--rep", type=int, default=0, help="repetition index")
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>latent.csv, <prefix>observed.csv, "
                        "<prefix>truth.csv")
    p.set_defaults(func=_cmd_simulate)


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = sim.SimConfig(n=args.n, p=args.p, theta_grid=(args.theta,),
                        reps=1, seed=args.seed)
    instance = sim.simulate_instance(cfg, args.rep, args.theta)
    write_panel_csv(instance.latent, args.out_prefix + "latent.csv")
    write_panel_csv(instance.observed, args.out_prefix + "observed.csv")
    write_matrix_csv(instance.truth, args.out_prefix + "truth.csv")
    print(
        f"[volmat simulate] n={cfg.n} p={cfg.p} theta={args.theta} "
        f"rho={instance.rho!r}",
        file=sys.stderr,
    )
    return 0


# ---------------------------------------------------------------------------
# transform


def _add_transform_parser(sub) -> None:
    p = sub.add_parser("transform", help="sine-transform whitening of a panel")
    p.add_argument("--config", help="key = value config file; flags override")
    p.add_argument("--input", required=True, help="panel CSV path")
    p.add_argument("--kappa", type=float, required=True,
                   help="noise standard deviation")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_transform)


def _cmd_transform(args: argparse.Namespace) -> int:
    panel = read_panel_csv(args.input)
    series = whiten(panel, args.kappa)
    header = "l,a_l," + ",".join(f"U_{i + 1}" for i in range(series.p))
    lines = [header]
    for l in range(series.n):
        cells = [str(l + 1), repr(float(series.a[l]))]
        cells += [repr(float(v)) for v in series.u[:, l]]
        lines.append(",".join(cells))
    _atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(
        f"[volmat transform] n={panel.n} p={panel.p} kappa={args.kappa!r}",
        file=sys.stderr,
    )
    return 0


# ---------------------------------------------------------------------------
# tune


def _add_tune_parser(sub) -> None:
    p = sub.add_parser("tune", help="rolling selection of scale count and threshold")
    p.add_argument("--config", help="key = value config file; flags override")
    p.add_argument("--input", required=True, help="panel CSV path")
    p.add_argument("--L", type=int, default=5, help="number of time blocks")
    p.add_argument("--N-grid", type=_comma_ints, default=None,
                   help="candidate scale counts (default floor(sqrt(block n)))")
    p.add_argument("--varpi-grid", type=_comma_floats, required=True,
                   help="candidate absolute thresholds")
    p.add_argument("--out", help="score table CSV path (optional)")
    p.set_defaults(func=_cmd_tune)


def _cmd_tune(args: argparse.Namespace) -> int:
    panel = read_panel_csv(args.input)
    n_grid = args.N_grid
    if n_grid is None:
        n_grid = (max(2, math.floor(math.sqrt(panel.n // args.L))),)
    grid = TuningGrid(N_candidates=n_grid, varpi_candidates=args.varpi_grid, L=args.L)
    best_n, best_varpi, table = rolling_select(panel, grid)
    if args.out:
        lines = ["N,varpi,score"]
        lines += [f"{row.N},{row.varpi!r},{row.score!r}" for row in table]
        _atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"selected N = {best_n}, varpi = {best_varpi!r}")
    return 0


# ---------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="volmat",
        description="Sparse integrated volatility matrix estimation toolkit. "
                    "The VOLMAT_THREADS environment variable caps benchmark "
                    "worker processes without changing any numerical output.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_estimate_parser(sub)
    _add_benchmark_parser(sub)
    _add_simulate_parser(sub)
    _add_transform_parser(sub)
    _add_tune_parser(sub)
    return parser, sub.choices


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = _build_parser()
    if argv and argv[0] in commands:
        command = argv[0]
        try:
            argv = [command] + _apply_config_file(commands[command], argv[1:])
        except (_UsageError, OSError) as exc:
            print(f"volmat {command}: error: {exc}", file=sys.stderr)
            return 2
    args = parser.parse_args(argv)
    _log_resolved(args.command, args)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"volmat {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (NoConvergenceError, sim.CholeskyError, FloatingPointError) as exc:
        print(f"volmat {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1
    except VolmatError as exc:
        print(f"volmat {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"volmat {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
