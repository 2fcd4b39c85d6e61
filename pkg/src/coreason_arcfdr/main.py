# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Command-line entry point: `arcfdr learn | fdr | bayes | simulate | calibrate`."""

import argparse
import csv
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from coreason_arcfdr.bayes import expected_true_arcs, marginal_truncation_check, posterior_arc_marginals
from coreason_arcfdr.core import Dataset, check_same_ordering
from coreason_arcfdr.evalharness import (
    load_calibration_bands,
    run_bayes_calibration,
    run_fdr_calibration,
    sample_truth,
    summarize_calibration,
    write_calibration_csv,
)
from coreason_arcfdr.exceptions import (
    CapacityError,
    ConvergenceError,
    DatasetValidationError,
    FormatError,
    InfiniteGradientError,
    NetworkSpecError,
    NoisyOrTypeError,
    StructureError,
)
from coreason_arcfdr.fdr import estimate_fdr, fdr_sweep
from coreason_arcfdr.formats import (
    output_header,
    read_dataset_csv,
    read_experiment_spec,
    read_model_file,
    write_dataset_csv,
    write_model_file,
)
from coreason_arcfdr.models import (
    CalibrationPoint,
    FdrEstimate,
    Method,
    RunConfig,
    ScoreConfig,
    ScoreFamily,
    SearchConfig,
)
from coreason_arcfdr.registry import NetworkRegistry
from coreason_arcfdr.search import learn_structure
from coreason_arcfdr.synth import PATIENT_COUNT, NoisyOrNetwork
from coreason_arcfdr.utils.logger import logger, set_console_level

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_DISCOVERIES = 3
EXIT_NUMERIC = 4

DEFAULT_SIMULATE_ROWS = 1000
FDR_COLUMNS = ["observed_arcs", "q", "null_total", "fdr_raw", "fdr_clamped", "expected_ppv", "seed"]

INPUT_ERRORS = (
    FormatError,
    DatasetValidationError,
    NetworkSpecError,
    NoisyOrTypeError,
    StructureError,
    ValidationError,
    KeyError,
    OSError,
)
NUMERIC_ERRORS = (ConvergenceError, InfiniteGradientError, CapacityError)


def _names(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [name.strip() for name in value.split(",") if name.strip()]


def _run_config(args: argparse.Namespace, inputs: Sequence[str]) -> RunConfig:
    return RunConfig(
        command=args.command,
        inputs=tuple(inputs),
        seed=getattr(args, "seed", 0),
        family=ScoreFamily(getattr(args, "family", ScoreFamily.BDEU_EXACT.value)),
        kappa=getattr(args, "kappa", 0.01),
        ess=getattr(args, "ess", 4.0),
        k=getattr(args, "k", 5),
        q=getattr(args, "q", 10),
        max_parents=getattr(args, "max_parents", None),
        n=getattr(args, "n", None),
        output=getattr(args, "output", None),
        kappa_grid=tuple(getattr(args, "kappa_grid", None) or ()),
    )


def _search_config(args: argparse.Namespace, ordering: Sequence[int], names: Sequence[str]) -> SearchConfig:
    children = _names(getattr(args, "children", None))
    allowed_children = None
    if children is not None:
        unknown = [c for c in children if c not in names]
        if unknown:
            raise FormatError(f"--children names unknown variables {unknown}")
        allowed_children = frozenset(names.index(c) for c in children)
    return SearchConfig(
        score=ScoreConfig(family=ScoreFamily(args.family), kappa=args.kappa, ess=args.ess),
        ordering=tuple(ordering),
        max_parents=args.max_parents,
        allowed_children=allowed_children,
    )


def cmd_learn(args: argparse.Namespace) -> int:
    """Learns a structure from a dataset CSV and writes it as a model file."""
    run = _run_config(args, [args.dataset])
    data = read_dataset_csv(args.dataset, _names(args.ordering)).data
    learned = learn_structure(data, _search_config(args, data.ordering, data.names), workers=args.workers)
    scores = {node: fs.log_score for node, fs in learned.family_scores.items()}
    write_model_file(learned.dag, data.names, args.output, scores, output_header(run, run.seed))
    print(f"arcs: {learned.dag.arc_count}")
    print(f"score: {sum(scores.values())!r}")
    return EXIT_OK


def _kappa_list(value: str) -> List[float]:
    try:
        kappas = [float(item) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {value!r}") from e
    if not kappas or any(kappa <= 0.0 for kappa in kappas):
        raise argparse.ArgumentTypeError("kappa grid needs at least one value, all positive")
    return kappas


def _optional(value: Optional[float]) -> str:
    return "" if value is None else repr(value)


def _estimate_row(estimate: FdrEstimate) -> List[object]:
    return [
        estimate.observed_arcs,
        estimate.q_permutations,
        sum(estimate.null_counts),
        _optional(estimate.fdr_raw),
        _optional(estimate.fdr_clamped),
        _optional(estimate.expected_ppv),
        estimate.seed,
    ]


def _sweep(args: argparse.Namespace, run: RunConfig, data: Dataset, config: SearchConfig) -> int:
    points = fdr_sweep(data, config, args.kappa_grid, args.q, args.seed, args.workers)
    for point in points:
        estimate = point.estimate
        if estimate is None:
            print(f"kappa {point.kappa!r}: failed ({point.error})")
        elif estimate.no_discoveries:
            print(f"kappa {point.kappa!r}: 0 arcs, FDR undefined")
        else:
            print(f"kappa {point.kappa!r}: {estimate.observed_arcs} arcs, fdr_clamped {estimate.fdr_clamped:.6g}")
    if args.output:
        with Path(args.output).open("w", newline="", encoding="utf-8") as f:
            for line in output_header(run, run.seed).splitlines():
                f.write(f"# {line}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["kappa", *FDR_COLUMNS, "error"])
            for point in points:
                if point.estimate is None:
                    writer.writerow([repr(point.kappa), "", args.q, "", "", "", "", point.seed, point.error])
                else:
                    writer.writerow([repr(point.kappa), *_estimate_row(point.estimate), ""])
    if not any(p.estimate is not None and not p.estimate.no_discoveries for p in points):
        print("no discoveries at any kappa: FDR undefined")
        return EXIT_NO_DISCOVERIES
    return EXIT_OK


def cmd_fdr(args: argparse.Namespace) -> int:
    """Estimates the FDR of the greedy search on a dataset, or over a kappa grid."""
    run = _run_config(args, [args.dataset])
    data = read_dataset_csv(args.dataset, _names(args.ordering)).data
    config = _search_config(args, data.ordering, data.names)
    if args.kappa_grid:
        return _sweep(args, run, data, config)
    estimate = estimate_fdr(data, config, args.q, args.seed, workers=args.workers).estimate
    print(f"observed_arcs: {estimate.observed_arcs}")
    print(f"null_counts: {' '.join(str(c) for c in estimate.null_counts)}")
    if args.output:
        with Path(args.output).open("w", newline="", encoding="utf-8") as f:
            for line in output_header(run, run.seed).splitlines():
                f.write(f"# {line}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(FDR_COLUMNS)
            writer.writerow(_estimate_row(estimate))
    if estimate.no_discoveries:
        print("no discoveries: FDR undefined")
        return EXIT_NO_DISCOVERIES
    print(f"fdr_raw: {estimate.fdr_raw:.6g}")
    print(f"fdr_clamped: {estimate.fdr_clamped:.6g}")
    print(f"expected_ppv: {estimate.expected_ppv:.6g}")
    return EXIT_OK


def cmd_bayes(args: argparse.Namespace) -> int:
    """Expected number of true arcs of a model file under the BDeu posterior."""
    run = _run_config(args, [args.dataset, args.model])
    model = read_model_file(args.model)
    data = read_dataset_csv(args.dataset, _names(args.ordering)).data
    if model.names != data.names:
        raise FormatError(f"model nodes {list(model.names)} do not match dataset columns {list(data.names)}")
    if args.ordering is None:
        data = data.with_ordering(model.dag.ordering)
    check_same_ordering(data, model.dag.ordering)
    score = ScoreConfig(family=ScoreFamily.BDEU_EXACT, kappa=args.kappa, ess=args.ess)
    summary = posterior_arc_marginals(data, score, args.k, args.workers)
    estimate = expected_true_arcs(summary.marginals, model.dag)
    print(f"model_arcs: {estimate.model_arc_count}")
    print(f"expected_true_arcs: {estimate.expected_true_arcs:.6g}")
    print("expected_ppv: " + ("undefined" if estimate.expected_ppv is None else f"{estimate.expected_ppv:.6g}"))
    if args.check_truncation:
        check = marginal_truncation_check(data, score, args.k, args.workers, baseline=summary)
        print(f"max_marginal_change_k{args.k}_to_k{args.k + 1}: {check.max_abs_change:.6g}")
    if args.marginals_csv:
        with Path(args.marginals_csv).open("w", newline="", encoding="utf-8") as f:
            for line in output_header(run, run.seed).splitlines():
                f.write(f"# {line}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["parent", "child", "marginal", "in_model"])
            model_arcs = model.dag.arcs
            for (parent, child), p in sorted(summary.marginals.items(), key=lambda item: (item[0][1], item[0][0])):
                in_model = int((parent, child) in model_arcs)
                writer.writerow([data.names[parent], data.names[child], repr(p), in_model])
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    """Samples a dataset from a built-in network or a network-spec file."""
    run = _run_config(args, [args.network])
    truth = NetworkRegistry().resolve(args.network, args.seed)
    default_rows = PATIENT_COUNT if isinstance(truth, NoisyOrNetwork) else DEFAULT_SIMULATE_ROWS
    rows = args.n if args.n is not None else default_rows
    data = sample_truth(truth, rows, np.random.default_rng(args.seed))
    write_dataset_csv(data, args.output, header=output_header(run, run.seed))
    print(f"rows: {data.n_rows}")
    print(f"columns: {data.n_vars}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    """Runs a calibration experiment spec and writes the calibration CSV."""
    spec = read_experiment_spec(args.spec)
    truth = NetworkRegistry().resolve(spec.truth, spec.seed)
    search_score = ScoreConfig(family=spec.family, kappa=spec.kappa_grid[0], ess=spec.ess)
    points: List[CalibrationPoint] = []
    if Method.FDR in spec.methods:
        points.extend(
            run_fdr_calibration(
                truth,
                spec.sample_sizes,
                spec.kappa_grid,
                search_score,
                spec.replicates,
                spec.q,
                spec.seed,
                spec.max_parents,
                spec.max_arcs,
                args.workers,
            )
        )
    if Method.BAYES in spec.methods:
        points.extend(
            run_bayes_calibration(
                truth,
                spec.sample_sizes,
                spec.bayes_settings,
                spec.size_limit,
                spec.thresholds,
                spec.replicates,
                spec.seed,
                search_score=search_score,
                search_kappa_grid=spec.kappa_grid,
                max_parents=spec.max_parents,
                max_arcs=spec.max_arcs,
                workers=args.workers,
            )
        )
    write_calibration_csv(points, args.output, output_header(spec, spec.seed))
    bands = load_calibration_bands(args.bands)
    for method in spec.methods:
        method_points = [p for p in points if p.method == method]
        if method_points:
            report = summarize_calibration(method_points, bands)
            verdict = "within bands" if report.passed else "; ".join(report.failures)
            print(f"{method.value}: {report.points} points, {verdict}")
    return EXIT_OK


def _add_score_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("dataset", help="Dataset CSV (first row holds variable names)")
    parser.add_argument("--ordering", help="Comma-separated variable names in ordering order")
    parser.add_argument("--family", choices=[f.value for f in ScoreFamily], default=ScoreFamily.BDEU_EXACT.value)
    parser.add_argument("--kappa", type=float, default=0.01, help="Structure prior strength")
    parser.add_argument("--ess", type=float, default=4.0, help="BDeu equivalent sample size")
    parser.add_argument("--max-parents", type=int, default=None)
    parser.add_argument("--children", help="Comma-separated names of the nodes whose parents are searched")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arcfdr", description="Arc confidence for learned Bayesian networks.")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads (default: ARCFDR_WORKERS or 1)")
    parser.add_argument("--log-level", default=None, help="Console log level, e.g. DEBUG or WARNING")
    commands = parser.add_subparsers(dest="command", required=True)

    learn = commands.add_parser("learn", help="Learn a structure with the greedy search")
    _add_score_flags(learn)
    learn.add_argument("--output", required=True, help="Model file to write")
    learn.set_defaults(handler=cmd_learn)

    fdr = commands.add_parser("fdr", help="Permutation FDR of the greedy search")
    _add_score_flags(fdr)
    fdr.add_argument("--q", type=int, default=10, help="Number of null replicates")
    fdr.add_argument("--seed", type=int, default=0)
    fdr.add_argument(
        "--kappa-grid", type=_kappa_list, default=None, help="Comma-separated kappas to sweep instead of --kappa"
    )
    fdr.add_argument("--output", help="CSV file for the estimate row")
    fdr.set_defaults(handler=cmd_fdr)

    bayes = commands.add_parser("bayes", help="Bayesian expected number of true arcs of a model")
    bayes.add_argument("dataset")
    bayes.add_argument("model", help="Model file written by `arcfdr learn`")
    bayes.add_argument("--ordering")
    bayes.add_argument("--kappa", type=float, default=0.1)
    bayes.add_argument("--ess", type=float, default=4.0)
    bayes.add_argument("--k", type=int, default=5, help="Parent-set size limit")
    bayes.add_argument("--check-truncation", action="store_true", help="Also enumerate at k + 1")
    bayes.add_argument("--marginals-csv", help="CSV file for per-arc marginals")
    bayes.set_defaults(handler=cmd_bayes)

    simulate = commands.add_parser("simulate", help="Sample a dataset from a generating network")
    simulate.add_argument("network", help="'alarm', 'hiv-standin' or a network-spec file")
    simulate.add_argument("--n", type=int, default=None, help="Rows (default 1000, or 102 patients)")
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--output", required=True)
    simulate.set_defaults(handler=cmd_simulate)

    calibrate = commands.add_parser("calibrate", help="Run a calibration experiment spec")
    calibrate.add_argument("spec", help="Experiment spec file")
    calibrate.add_argument("--output", required=True)
    calibrate.add_argument("--bands", default=None, help="Tolerance bands JSON (default: bundled)")
    calibrate.set_defaults(handler=cmd_calibrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parses arguments, runs one command and maps failures to exit codes."""
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_console_level(args.log_level)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except NUMERIC_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except INPUT_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
