# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Ground-truth evaluation and calibration experiments.

Both estimators are run against data sampled from a known generating model; every point of
a run pairs the estimator's expected PPV with the actual PPV of the same learned model.
"""

import csv
import math
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from coreason_arcfdr.bayes import (
    DEFAULT_SIZE_LIMIT,
    ArcMarginals,
    TruncationCheck,
    expected_true_arcs,
    model_averaged_log_predictive,
    model_selection_log_predictive,
    nested_models_by_threshold,
    posterior_arc_marginals,
)
from coreason_arcfdr.core import Dag, Dataset, arc_overlap
from coreason_arcfdr.exceptions import ArcFdrError
from coreason_arcfdr.fdr import DEFAULT_Q, derive_point_seed, estimate_fdr
from coreason_arcfdr.models import (
    CalibrationPoint,
    CalibrationReport,
    Method,
    ScoreConfig,
    ScoreFamily,
    SearchConfig,
)
from coreason_arcfdr.search import learn_structure
from coreason_arcfdr.synth import (
    CptNetwork,
    NoisyOrNetwork,
    bipartite_search_config,
    sample_cpt_network,
    sample_noisyor_network,
)
from coreason_arcfdr.utils.logger import logger

TruthModel = Union[CptNetwork, NoisyOrNetwork]

CALIBRATION_COLUMNS = (
    "method",
    "family",
    "kappa",
    "alpha",
    "n",
    "replicate",
    "model_arcs",
    "expected_ppv",
    "actual_ppv",
    "fdr_raw",
    "seed",
    "threshold",
)

BANDS_RESOURCE = "calibration_bands.json"


class PredictionMode(str, Enum):
    """How held-out data is predicted when tuning hyperparameters."""

    MODEL_SELECTION = "selection"
    MODEL_AVERAGING = "averaging"


class CalibrationBands(BaseModel):
    """Tolerance bands the calibration curves are checked against."""

    model_config = ConfigDict(frozen=True)

    high_ppv_threshold: float = Field(0.8, ge=0.0, le=1.0)
    high_ppv_tolerance: float = Field(0.15, ge=0.0)
    low_ppv_threshold: float = Field(0.5, ge=0.0, le=1.0)
    bayes_min_expected: float = Field(0.5, ge=0.0, le=1.0)
    bayes_gap_low: float = -0.25
    bayes_gap_high: float = 0.05
    standin_fdr_max: float = Field(0.2, ge=0.0, le=1.0)
    standin_tolerance: float = Field(0.10, ge=0.0)
    truncation_tolerance: float = Field(0.02, ge=0.0)
    greedy_match_rate: float = Field(0.8, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _ordered_gap(self) -> "CalibrationBands":
        if self.bayes_gap_low > self.bayes_gap_high:
            raise ValueError("bayes_gap_low must not exceed bayes_gap_high")
        return self


class TuningResult(BaseModel):
    """Held-out log likelihood of every (kappa, ess) grid point and the best one."""

    model_config = ConfigDict(frozen=True)

    mode: PredictionMode
    kappa: float
    ess: float
    scores: Tuple[Tuple[float, float, float], ...]  # (kappa, ess, held-out log likelihood)


def actual_ppv(learned: Dag, truth: Dag) -> Optional[float]:
    """Fraction of learned arcs present in the truth; None for a model without arcs.

    Raises:
        StructureError: If the structures have different node counts.
    """
    overlap = arc_overlap(learned, truth)
    count = learned.arc_count
    return overlap / count if count else None


def replicate_seed(seed: int, n: int, replicate: int) -> int:
    """Data seed of one (sample size, replicate) cell, shared by the FDR and Bayes runs."""
    return int(np.random.SeedSequence([seed, n, replicate]).generate_state(1, dtype=np.uint32)[0])


def sample_truth(truth: TruthModel, n: int, rng: np.random.Generator) -> Dataset:
    """Draws `n` rows (patients for a noisy-OR model) from a generating model."""
    if isinstance(truth, NoisyOrNetwork):
        return sample_noisyor_network(truth, n, rng)
    return sample_cpt_network(truth, n, rng)


def search_config_for(truth: TruthModel, score: ScoreConfig, max_parents: Optional[int] = None) -> SearchConfig:
    """Search configuration under the truth's ordering; noisy-OR truths restrict to HLA -> peptide."""
    if isinstance(truth, NoisyOrNetwork):
        return bipartite_search_config(truth.hla_count, truth.peptide_count, score, max_parents)
    return SearchConfig(score=score, ordering=truth.dag.ordering, max_parents=max_parents)


def _alpha(score: ScoreConfig) -> Optional[float]:
    return score.ess if score.family == ScoreFamily.BDEU_EXACT else None


def _sorted(points: Iterable[CalibrationPoint]) -> List[CalibrationPoint]:
    return sorted(points, key=lambda p: p.sort_key)


class GreedyModel(NamedTuple):
    """One greedy-learned model of a calibration cell, or the reason there is none."""

    kappa: float
    config: SearchConfig
    dag: Optional[Dag]
    arc_count: Optional[int] = None
    error: Optional[str] = None


def learn_greedy_models(
    truth: TruthModel,
    data: Dataset,
    score: ScoreConfig,
    kappa_grid: Sequence[float],
    max_parents: Optional[int] = None,
    max_arcs: Optional[int] = None,
    workers: Optional[int] = None,
) -> List[GreedyModel]:
    """The greedy models of one dataset over a kappa grid, in ascending kappa order.

    Once a model exceeds `max_arcs`, that model and every larger kappa carry an error
    instead of a Dag. Both calibration harnesses go through this, so their points refer to
    the same learned models.
    """
    models: List[GreedyModel] = []
    over_budget = False
    for kappa in sorted(kappa_grid):
        config = search_config_for(truth, score.model_copy(update={"kappa": kappa}), max_parents)
        if over_budget:
            models.append(GreedyModel(kappa, config, None, error=f"skipped: model exceeds {max_arcs} arcs"))
            continue
        try:
            dag = learn_structure(data, config, workers=workers).dag
        except (ArcFdrError, ValueError) as e:
            logger.warning(f"Greedy search at kappa={kappa} failed: {e}")
            models.append(GreedyModel(kappa, config, None, error=str(e)))
            continue
        if max_arcs is not None and dag.arc_count > max_arcs:
            over_budget = True
            logger.info(f"Arc budget {max_arcs} exceeded at kappa={kappa}")
            models.append(GreedyModel(kappa, config, None, dag.arc_count, f"skipped: {dag.arc_count} arcs"))
            continue
        models.append(GreedyModel(kappa, config, dag, dag.arc_count))
    return models


def run_fdr_calibration(
    truth: TruthModel,
    sample_sizes: Sequence[int],
    kappa_grid: Sequence[float],
    score: ScoreConfig,
    replicates: int = 3,
    q_permutations: int = DEFAULT_Q,
    seed: int = 0,
    max_parents: Optional[int] = None,
    max_arcs: Optional[int] = None,
    workers: Optional[int] = None,
) -> List[CalibrationPoint]:
    """FDR calibration: one point per (replicate, n, kappa), failures recorded in place.

    Kappas are visited in ascending order. Once a learned model exceeds `max_arcs`, the
    remaining larger kappas of that (replicate, n) cell are skipped and marked as such.
    """
    if not sample_sizes or not kappa_grid or replicates < 1:
        raise ValueError("calibration needs at least one sample size, one kappa and one replicate")
    points: List[CalibrationPoint] = []
    for replicate in range(replicates):
        for n in sample_sizes:
            data_seed = replicate_seed(seed, n, replicate)
            data = sample_truth(truth, n, np.random.default_rng(data_seed))
            for model in learn_greedy_models(truth, data, score, kappa_grid, max_parents, max_arcs, workers):
                cell = CalibrationPoint(
                    method=Method.FDR,
                    family=score.family,
                    kappa=model.kappa,
                    alpha=_alpha(score),
                    n=n,
                    replicate=replicate,
                    seed=derive_point_seed(data_seed, model.kappa),
                    model_arcs=model.arc_count,
                    error=model.error,
                )
                if model.dag is None:
                    points.append(cell)
                    continue
                try:
                    result = estimate_fdr(data, model.config, q_permutations, cell.seed, workers=workers, dag=model.dag)
                except (ArcFdrError, ValueError) as e:
                    logger.warning(f"FDR calibration point kappa={model.kappa}, n={n}, rep={replicate} failed: {e}")
                    points.append(cell.model_copy(update={"error": str(e)}))
                    continue
                measured = {
                    "expected_ppv": result.estimate.expected_ppv,
                    "actual_ppv": actual_ppv(model.dag, truth.dag),
                    "fdr_raw": result.estimate.fdr_raw,
                }
                points.append(cell.model_copy(update=measured))
    logger.info(f"FDR calibration finished: {len(points)} points")
    return _sorted(points)


def _threshold_points(
    truth: TruthModel, cell: CalibrationPoint, marginals: ArcMarginals, thresholds: Sequence[float], data: Dataset
) -> List[CalibrationPoint]:
    points: List[CalibrationPoint] = []
    for model in nested_models_by_threshold(marginals, thresholds, data.ordering):
        measured = {
            "model_arcs": model.dag.arc_count,
            "expected_ppv": model.estimate.expected_ppv,
            "actual_ppv": actual_ppv(model.dag, truth.dag),
            "threshold": model.threshold,
        }
        points.append(cell.model_copy(update=measured))
    return points


def run_bayes_calibration(
    truth: TruthModel,
    sample_sizes: Sequence[int],
    settings: Sequence[Tuple[float, float]] = ((0.1, 4.0),),
    size_limit: int = DEFAULT_SIZE_LIMIT,
    thresholds: Sequence[float] = (0.9, 0.7, 0.5, 0.3, 0.1),
    replicates: int = 3,
    seed: int = 0,
    search_score: Optional[ScoreConfig] = None,
    search_kappa_grid: Sequence[float] = (),
    max_parents: Optional[int] = None,
    max_arcs: Optional[int] = None,
    workers: Optional[int] = None,
) -> List[CalibrationPoint]:
    """Bayesian calibration on the same replicate datasets as `run_fdr_calibration`.

    For every (kappa, ess) in `settings`, the nested models obtained by thresholding the
    arc marginals give one point each (`threshold` set; `kappa` and `alpha` are the
    Bayesian hyperparameters). If `search_kappa_grid` is given, the greedy models the FDR
    harness learns with `search_score`, `max_parents` and `max_arcs` are also scored with
    the marginals of the first setting; those points carry the search family and kappa and
    no threshold, so they share their (kappa, n, replicate) keys with the FDR points.
    """
    if not settings:
        raise ValueError("Bayesian calibration needs at least one (kappa, ess) setting")
    scores = [ScoreConfig(family=ScoreFamily.BDEU_EXACT, kappa=kappa, ess=ess) for kappa, ess in settings]
    greedy_score = search_score if search_score is not None else scores[0]
    points: List[CalibrationPoint] = []
    for replicate in range(replicates):
        for n in sample_sizes:
            data_seed = replicate_seed(seed, n, replicate)
            data = sample_truth(truth, n, np.random.default_rng(data_seed))
            marginals: Dict[int, ArcMarginals] = {}
            for index, score in enumerate(scores):
                cell = CalibrationPoint(
                    method=Method.BAYES,
                    family=score.family,
                    kappa=score.kappa,
                    alpha=score.ess,
                    n=n,
                    replicate=replicate,
                    seed=data_seed,
                )
                try:
                    marginals[index] = posterior_arc_marginals(data, score, size_limit, workers).marginals
                    points.extend(_threshold_points(truth, cell, marginals[index], thresholds, data))
                except (ArcFdrError, ValueError) as e:
                    logger.warning(f"Bayes calibration kappa={score.kappa}, ess={score.ess}, n={n} failed: {e}")
                    points.append(cell.model_copy(update={"error": str(e)}))
            if not search_kappa_grid:
                continue
            greedy_models = learn_greedy_models(
                truth, data, greedy_score, search_kappa_grid, max_parents, max_arcs, workers
            )
            for model in greedy_models:
                cell = CalibrationPoint(
                    method=Method.BAYES,
                    family=greedy_score.family,
                    kappa=model.kappa,
                    alpha=_alpha(greedy_score),
                    n=n,
                    replicate=replicate,
                    seed=data_seed,
                    model_arcs=model.arc_count,
                    error=model.error,
                )
                if model.dag is not None and 0 not in marginals:
                    cell = cell.model_copy(update={"error": "no marginals for the first Bayesian setting"})
                elif model.dag is not None:
                    measured = {
                        "expected_ppv": expected_true_arcs(marginals[0], model.dag).expected_ppv,
                        "actual_ppv": actual_ppv(model.dag, truth.dag),
                    }
                    cell = cell.model_copy(update=measured)
                points.append(cell)
    logger.info(f"Bayes calibration finished: {len(points)} points")
    return _sorted(points)


def tune_hyperparams_by_prediction(
    train: Dataset,
    test: Dataset,
    grid: Sequence[Tuple[float, float]],
    mode: PredictionMode = PredictionMode.MODEL_AVERAGING,
    search: Optional[SearchConfig] = None,
    size_limit: int = DEFAULT_SIZE_LIMIT,
    workers: Optional[int] = None,
) -> TuningResult:
    """Picks the (kappa, ess) pair maximising the held-out log likelihood (first on ties).

    In model-selection mode each grid point learns one structure on `train` with the greedy
    search; in model-averaging mode the parent-set posteriors are averaged.
    """
    if not grid:
        raise ValueError("hyperparameter grid must not be empty")
    if test.n_rows != train.n_rows:
        logger.warning(f"Held-out size {test.n_rows} differs from training size {train.n_rows}")
    base = search if search is not None else SearchConfig(ordering=train.ordering)
    scores: List[Tuple[float, float, float]] = []
    for kappa, ess in grid:
        score = ScoreConfig(family=ScoreFamily.BDEU_EXACT, kappa=kappa, ess=ess)
        if mode == PredictionMode.MODEL_SELECTION:
            config = base.model_copy(update={"score": score})
            dag = learn_structure(train, config, workers=workers).dag
            value = model_selection_log_predictive(train, test, dag, ess)
        else:
            value = model_averaged_log_predictive(train, test, score, size_limit, workers=workers)
        logger.info(f"Held-out log likelihood at kappa={kappa}, ess={ess} ({mode.value}): {value:.4f}")
        scores.append((kappa, ess, value))
    best = max(range(len(scores)), key=lambda i: (scores[i][2], -i))
    return TuningResult(mode=mode, kappa=scores[best][0], ess=scores[best][1], scores=tuple(scores))


def _csv_value(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_calibration_csv(
    points: Sequence[CalibrationPoint], path: Union[str, Path], header: Optional[str] = None
) -> None:
    """Writes the calibration table; undefined values are empty fields, never 0.

    `header` is written first, every line prefixed with "# ".
    """
    target = Path(path)
    with target.open("w", newline="", encoding="utf-8") as f:
        if header:
            for line in header.splitlines():
                f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CALIBRATION_COLUMNS)
        for point in points:
            writer.writerow([_csv_value(getattr(point, column)) for column in CALIBRATION_COLUMNS])
    logger.info(f"Wrote {len(points)} calibration points to {target}")


def load_calibration_bands(path: Optional[Union[str, Path]] = None) -> CalibrationBands:
    """Reads tolerance bands from `path`, or the bundled defaults."""
    if path is None:
        text = resources.files("coreason_arcfdr").joinpath("data", BANDS_RESOURCE).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return CalibrationBands.model_validate_json(text)


def _mean(values: Sequence[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def summarize_calibration(
    points: Sequence[CalibrationPoint],
    bands: CalibrationBands,
    truncation: Optional[TruncationCheck] = None,
) -> CalibrationReport:
    """Checks one method's points against the bands.

    FDR: every point with expected PPV at or above `high_ppv_threshold` must be within
    `high_ppv_tolerance`, and below `low_ppv_threshold` the mean gap (actual - expected)
    must be non-negative. Noisy-OR points come from the bipartite stand-in and are held
    to `standin_tolerance` wherever the clamped FDR is at most `standin_fdr_max`.
    Bayes: the mean gap above `bayes_min_expected` must lie within
    [bayes_gap_low, bayes_gap_high], and a `truncation` check, when given, must not move
    any marginal by more than `truncation_tolerance`.

    Raises:
        ValueError: If the points mix methods or there are none.
    """
    methods = {p.method for p in points}
    if len(methods) != 1:
        raise ValueError(f"expected points of exactly one method, got {sorted(m.value for m in methods)}")
    method = methods.pop()
    scored = [
        (p.family, p.expected_ppv, p.actual_ppv)
        for p in points
        if p.expected_ppv is not None and p.actual_ppv is not None
    ]
    pairs = [(e, a) for _, e, a in scored]
    noisyor = ScoreFamily.BIC_NOISYOR
    standin = [abs(a - e) for f, e, a in scored if f == noisyor and 1.0 - e <= bands.standin_fdr_max]
    high = [abs(a - e) for f, e, a in scored if f != noisyor and e >= bands.high_ppv_threshold]
    low_gap = _mean([a - e for e, a in pairs if e < bands.low_ppv_threshold])
    upper_gap = _mean([a - e for e, a in pairs if e >= bands.bayes_min_expected])
    failures: List[str] = []
    if method == Method.FDR:
        if high and max(high) > bands.high_ppv_tolerance:
            failures.append(f"high-PPV error {max(high):.3f} exceeds {bands.high_ppv_tolerance}")
        if standin and max(standin) > bands.standin_tolerance:
            failures.append(f"stand-in error {max(standin):.3f} exceeds {bands.standin_tolerance}")
        if low_gap is not None and low_gap < 0.0:
            failures.append(f"low-PPV mean gap {low_gap:.3f} is negative")
    else:
        if upper_gap is not None and not bands.bayes_gap_low <= upper_gap <= bands.bayes_gap_high:
            failures.append(f"mean gap {upper_gap:.3f} outside [{bands.bayes_gap_low}, {bands.bayes_gap_high}]")
        if truncation is not None and truncation.max_abs_change > bands.truncation_tolerance:
            failures.append(
                f"raising the size limit past {truncation.size_limit} moved a marginal by "
                f"{truncation.max_abs_change:.3f}, more than {bands.truncation_tolerance}"
            )
    return CalibrationReport(
        method=method,
        points=len(pairs),
        high_ppv_points=len(high),
        max_high_ppv_error=max(high) if high else None,
        standin_points=len(standin),
        max_standin_error=max(standin) if standin else None,
        low_ppv_mean_gap=low_gap,
        mean_gap_above_half=upper_gap,
        truncation_change=truncation.max_abs_change if truncation is not None else None,
        failures=failures,
    )
