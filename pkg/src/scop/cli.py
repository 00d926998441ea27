"""Command-line interface: simulate, sweep, run-csv, selfcheck.

Exit codes: 0 success, 1 selfcheck failure, 2 usage error, 3 data error
(unreadable/invalid input or unwritable output), 4 numerical failure (more
than 1% of repetitions failed, or the selection could not be evaluated on
external data). Colored output is disabled when stdout is not a terminal or
the NO_COLOR environment variable is set.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

import numpy as np

from . import figures
from .cli_io import (
    VERSION,
    DataError,
    load_labeled_csv,
    load_precomputed_csv,
    load_test_csv,
    sweep_csv,
    sweep_json,
    write_intervals_csv,
    write_results,
    write_units_csv,
    write_text,
)
from .intervals import (
    ABS_RESIDUAL,
    CQR,
    METHODS,
    SCORE_KINDS,
    acp_intervals,
    cqr_intervals,
    evaluate_coverage,
    ocp_intervals,
    scop_intervals,
)
from .predictors import Dataset, QuantilePair, fit_ols, fit_quantile, score_units
from .selection import SelectionRule, TPos, apply_rule, format_rule, parse_rule
from .selfcheck import run_all
from .simulate import (
    ExperimentConfig,
    ExperimentError,
    ExperimentResult,
    run_experiment,
    sweep as run_sweep,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _use_color() -> bool:
    return sys.stdout.isatty() and "NO_COLOR" not in os.environ


def _status(passed: bool) -> str:
    word = "PASS" if passed else "FAIL"
    if not _use_color():
        return word
    code = "32" if passed else "31"
    return f"\x1b[{code}m{word}\x1b[0m"


# --------------------------------------------------------------------------
# argument types


def _rule_type(text: str) -> SelectionRule:
    try:
        return parse_rule(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _alpha_type(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must be in (0, 1), got {value}")
    return value


def _methods_type(text: str) -> tuple[str, ...]:
    methods = tuple(part.strip() for part in text.split(",") if part.strip())
    if not methods:
        raise argparse.ArgumentTypeError("at least one method is required")
    for method in methods:
        if method not in METHODS:
            raise argparse.ArgumentTypeError(
                f"unknown method {method!r} (known: {', '.join(METHODS)})"
            )
    return methods


def _fraction_type(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"fraction must be in (0, 1), got {value}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed_type(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


# --------------------------------------------------------------------------
# parser


def _add_experiment_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scenario", choices=("A", "B", "C"), default="A", help="data-generating scenario")
    sub.add_argument("--rule", type=_rule_type, required=True, help="selection rule, e.g. t-cons:-1, t-test:60, t-pos:-1,0.2")
    sub.add_argument("--n", type=_positive_int, default=200, dest="n_cal", help="calibration size (default 200)")
    sub.add_argument("--n-train", type=_positive_int, default=200, help="training size (default 200)")
    sub.add_argument("--m", type=_positive_int, default=200, help="test size (default 200)")
    sub.add_argument("--alpha", type=_alpha_type, default=0.1, help="miscoverage level (default 0.1)")
    sub.add_argument("--methods", type=_methods_type, default=("scop", "ocp", "acp"), help="comma-separated subset of scop,scop_plus,ocp,acp")
    sub.add_argument("--score", choices=SCORE_KINDS, default=ABS_RESIDUAL, help="conformity score")
    sub.add_argument("--reps", type=_positive_int, default=1000, help="Monte Carlo repetitions (default 1000)")
    sub.add_argument("--seed", type=_seed_type, default=0, help="master seed (default 0)")
    sub.add_argument("--fixed-beta", action="store_true", help="scenario A: one coefficient draw shared by all repetitions")
    sub.add_argument("--acp-simple", action="store_true", help="adjusted baseline: drop the infinite-interval guard")
    sub.add_argument("--threads", type=_positive_int, default=1, help="worker threads (default 1)")
    sub.add_argument("--out", help="result file path")
    sub.add_argument("--format", choices=("csv", "json"), default="csv", help="result file format (default csv)")
    sub.add_argument("--plot-dir", help="directory for rendered figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scop",
        description="Selection-conditional conformal prediction: simulation harness, "
        "external-data runner, and deterministic property checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="run one Monte Carlo experiment")
    _add_experiment_flags(sim)

    swp = commands.add_parser("sweep", help="run one experiment per grid value")
    _add_experiment_flags(swp)
    swp.add_argument("--param", choices=("q", "nm"), required=True, help="swept parameter")
    swp.add_argument(
        "--values",
        required=True,
        help="comma-separated grid: quantile levels for q, n:m pairs for nm",
    )

    ext = commands.add_parser("run-csv", help="selection and intervals on external data")
    ext.add_argument("--labeled", required=True, help="labeled CSV (y,x1..xd), or calibration units (y,mu_hat,t_score) with --precomputed")
    ext.add_argument("--test", required=True, help="test CSV (x1..xd, optional y), or test units (mu_hat,t_score, optional y) with --precomputed")
    ext.add_argument("--precomputed", action="store_true", help="input rows carry mu_hat/t_score; skip predictor fitting")
    ext.add_argument("--rule", type=_rule_type, required=True, help="selection rule")
    ext.add_argument("--alpha", type=_alpha_type, default=0.1, help="miscoverage level (default 0.1)")
    ext.add_argument("--methods", type=_methods_type, default=("scop", "ocp", "acp"), help="comma-separated subset of scop,scop_plus,ocp,acp")
    ext.add_argument("--score", choices=SCORE_KINDS, default=ABS_RESIDUAL, help="conformity score (abs_residual only with --precomputed)")
    ext.add_argument("--train-frac", type=_fraction_type, default=0.5, help="fraction of labeled rows used for training (default 0.5)")
    ext.add_argument("--split-seed", type=_seed_type, default=0, help="seed for the train/calibration shuffle split")
    ext.add_argument("--acp-simple", action="store_true", help="adjusted baseline: drop the infinite-interval guard")
    ext.add_argument("--out", required=True, help="intervals CSV path")
    ext.add_argument("--dump-units", metavar="PREFIX", help="also write PREFIX_cal.csv and PREFIX_test.csv unit scores")
    ext.add_argument("--plot-dir", help="directory for rendered figures")

    commands.add_parser("selfcheck", help="run the deterministic property suite")
    return parser


# --------------------------------------------------------------------------
# path checks (before any heavy work)


def _check_readable(path: str) -> None:
    if not os.path.isfile(path):
        raise DataError(f"{path}: no such file")
    if not os.access(path, os.R_OK):
        raise DataError(f"{path}: not readable")


def _check_writable(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise DataError(f"{path}: directory {parent} does not exist")
    if not os.access(parent, os.W_OK):
        raise DataError(f"{path}: directory {parent} is not writable")


def _prepare_plot_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise DataError(f"{path}: not writable")


def _out_stem(out: str | None, default: str) -> str:
    if out is None:
        return default
    stem = os.path.splitext(os.path.basename(out))[0]
    return stem or default


# --------------------------------------------------------------------------
# simulate / sweep


def _config_from_args(args: argparse.Namespace, parser: argparse.ArgumentParser) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            scenario=args.scenario,
            rule=args.rule,
            n_train=args.n_train,
            n_cal=args.n_cal,
            m=args.m,
            alpha=args.alpha,
            methods=args.methods,
            score=args.score,
            reps=args.reps,
            seed=args.seed,
            fixed_beta=args.fixed_beta,
            acp_simple=args.acp_simple,
        )
    except ValueError as exc:
        parser.error(str(exc))
        raise AssertionError("unreachable")


def _print_summaries(result: ExperimentResult) -> None:
    print(f"scenario {result.config.scenario}, rule {format_rule(result.config.rule)}, "
          f"alpha {result.config.alpha:g}, {len(result.records)} repetitions")
    header = f"{'method':<10} {'fcr':>8} {'se':>8} {'length':>10} {'selected':>9} {'inf reps':>8}"
    print(header)
    for s in result.summaries:
        se = f"{s.fcr_se:.4f}" if s.fcr_se is not None else "-"
        length = f"{s.mean_length:.3f}" if s.mean_length is not None else "-"
        print(
            f"{s.method:<10} {s.fcr:>8.4f} {se:>8} {length:>10} "
            f"{s.mean_selected:>9.2f} {s.infinite_rep_count:>8d}"
        )
    if result.fdr is not None:
        print(f"selection fdr {result.fdr:.4f}")
    if result.failed:
        print(f"failed repetitions: {len(result.failed)}")


def _cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    config = _config_from_args(args, parser)
    if args.out:
        _check_writable(args.out)
    if args.plot_dir:
        _prepare_plot_dir(args.plot_dir)
    result = run_experiment(config, threads=args.threads)
    _print_summaries(result)
    if args.out:
        write_results(result, args.out, format=args.format)
        print(f"wrote {args.out}")
    if args.plot_dir:
        for path in figures.render_simulation(result, args.plot_dir, _out_stem(args.out, "simulate")):
            print(f"wrote {path}")
    return EXIT_OK


def _parse_sweep_values(param: str, text: str, parser: argparse.ArgumentParser) -> list:
    parts = [part.strip() for part in text.split(",") if part.strip()]
    if not parts:
        parser.error("--values needs at least one entry")
    values: list = []
    for part in parts:
        if param == "q":
            try:
                values.append(float(part))
            except ValueError:
                parser.error(f"--values: not a number: {part!r}")
        else:
            pieces = part.split(":")
            if len(pieces) != 2:
                parser.error(f"--values: expected n:m, got {part!r}")
            try:
                values.append((int(pieces[0]), int(pieces[1])))
            except ValueError:
                parser.error(f"--values: expected integers in {part!r}")
    return values


def _cmd_sweep(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    config = _config_from_args(args, parser)
    values = _parse_sweep_values(args.param, args.values, parser)
    if args.out:
        _check_writable(args.out)
    if args.plot_dir:
        _prepare_plot_dir(args.plot_dir)
    try:
        results = run_sweep(config, args.param, values, threads=args.threads)
    except ValueError as exc:  # rule/param mismatch
        parser.error(str(exc))
        raise AssertionError("unreachable")
    for value, result in zip(values, results):
        print(f"--- {args.param} = {value}")
        _print_summaries(result)
    if args.out:
        text = sweep_csv(values, results) if args.format == "csv" else sweep_json(args.param, values, results)
        write_text(args.out, text)
        print(f"wrote {args.out}")
    if args.plot_dir:
        for path in figures.render_sweep(args.param, values, results, args.plot_dir, _out_stem(args.out, "sweep")):
            print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# run-csv


def _shuffle_split(data: Dataset, train_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    order = np.random.default_rng(seed).permutation(data.n)
    n_train = int(round(train_frac * data.n))
    if n_train < 2 or data.n - n_train < 2:
        raise DataError(
            f"train fraction {train_frac:g} leaves too few rows "
            f"(train {n_train}, calibration {data.n - n_train}; need >= 2 each)"
        )
    train_idx = np.sort(order[:n_train])
    cal_idx = np.sort(order[n_train:])
    return (
        Dataset(x=data.x[train_idx], y=data.y[train_idx]),
        Dataset(x=data.x[cal_idx], y=data.y[cal_idx]),
    )


def _cmd_run_csv(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.precomputed and args.score == CQR:
        parser.error("--precomputed supports --score abs_residual only "
                     "(quantile intervals need refitting on raw features)")
    _check_readable(args.labeled)
    _check_readable(args.test)
    _check_writable(args.out)
    if args.dump_units:
        _check_writable(args.dump_units + "_cal.csv")
    if args.plot_dir:
        _prepare_plot_dir(args.plot_dir)

    pair = None
    cal_data = None
    if args.precomputed:
        cal_units = load_precomputed_csv(args.labeled, require_y=True)
        test_units = load_precomputed_csv(args.test, require_y=False)
        test_y = test_units.response
    else:
        labeled = load_labeled_csv(args.labeled)
        test_x, test_y = load_test_csv(args.test)
        if test_x.shape[1] != labeled.x.shape[1]:
            raise DataError(
                f"{args.test}: {test_x.shape[1]} feature columns, "
                f"but {args.labeled} has {labeled.x.shape[1]}"
            )
        train, cal_data = _shuffle_split(labeled, args.train_frac, args.split_seed)
        try:
            model = fit_ols(train)
            if args.score == CQR:
                lo_level = args.alpha / 2.0
                lo = fit_quantile(train, lo_level)
                hi = fit_quantile(train, 1.0 - lo_level)
                pair = QuantilePair(lo_level=lo_level, hi_level=1.0 - lo_level, lo=lo, hi=hi)
            cal_units = score_units(model, cal_data.x, cal_data.y)
            test_units = score_units(model, test_x)
        except (ValueError, np.linalg.LinAlgError) as exc:
            print(f"scop: numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL

    try:
        outcome = apply_rule(args.rule, cal_units, test_units)
        intervals = {}
        for method in args.methods:
            if pair is not None:
                intervals[method] = cqr_intervals(
                    method,
                    outcome,
                    pair,
                    cal_data,
                    test_x,
                    args.alpha,
                    rule=args.rule,
                    cal=cal_units,
                    test=test_units,
                    simple=args.acp_simple,
                )
            elif method == "ocp":
                intervals[method] = ocp_intervals(cal_units, test_units, outcome, args.alpha)
            elif method == "acp":
                intervals[method] = acp_intervals(
                    args.rule, cal_units, test_units, outcome, args.alpha, simple=args.acp_simple
                )
            else:
                intervals[method] = scop_intervals(
                    cal_units, test_units, outcome, args.alpha, use_plus=(method == "scop_plus")
                )
    except ValueError as exc:
        print(f"scop: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"rule {format_rule(args.rule)}: selected {outcome.n_selected} of {len(test_units)} test units")
    if test_y is not None:
        for method in args.methods:
            cov = evaluate_coverage(intervals[method], test_y)
            length = "inf" if cov.infinite else (f"{cov.avg_length:.4f}" if cov.avg_length is not None else "-")
            print(f"{method:<10} fcp {cov.fcp:.4f}  avg length {length}")
        if isinstance(args.rule, TPos) and outcome.n_selected > 0:
            false_hits = int(np.sum(np.asarray(test_y)[outcome.selected_test] >= args.rule.b0))
            print(f"selection fdp {false_hits / outcome.n_selected:.4f}")

    write_intervals_csv(args.out, intervals, y=test_y)
    print(f"wrote {args.out}")
    if args.dump_units:
        dump_test = test_units
        if test_y is not None and test_units.response is None:
            dump_test = score_units(model, test_x, test_y)
        write_units_csv(args.dump_units + "_cal.csv", cal_units)
        write_units_csv(args.dump_units + "_test.csv", dump_test)
        print(f"wrote {args.dump_units}_cal.csv and {args.dump_units}_test.csv")
    if args.plot_dir:
        for path in figures.render_intervals(intervals, test_y, args.plot_dir, _out_stem(args.out, "run-csv")):
            print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# selfcheck


def _cmd_selfcheck() -> int:
    failures = 0
    for result in run_all():
        print(f"{_status(result.passed)} {result.name}: {result.detail}")
        failures += 0 if result.passed else 1
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_CHECK_FAILED
    print("all checks passed")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args, parser)
        if args.command == "sweep":
            return _cmd_sweep(args, parser)
        if args.command == "run-csv":
            return _cmd_run_csv(args, parser)
        return _cmd_selfcheck()
    except DataError as exc:
        print(f"scop: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExperimentError as exc:
        print(f"scop: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
