# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Permutation-based False Discovery Rate of a structure search algorithm.

For a search that decomposes into per-node parent searches, the null distribution for a
node is obtained by permuting that node's column while every other column stays real. All
arc hypotheses into the permuted child are then false, so the arcs found estimate the
expected number of false discoveries:

    FDR = ((1 + sum_q N(D^q)) / Q) / N(D)

where N(D) is the number of arcs learned on the real data and N(D^q) on null replicate q.
"""

import struct
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from coreason_arcfdr.core import Dag, Dataset, check_same_ordering
from coreason_arcfdr.exceptions import ArcFdrError
from coreason_arcfdr.interfaces import ParentSetLearner
from coreason_arcfdr.models import FdrEstimate, SearchConfig
from coreason_arcfdr.search import GreedyParentSetLearner, learn_structure
from coreason_arcfdr.utils.concurrency import map_nodes
from coreason_arcfdr.utils.logger import logger

DEFAULT_Q = 10


class FdrResult(BaseModel):
    """An FDR estimate together with the structure learned on the real data."""

    model_config = ConfigDict(frozen=True)

    estimate: FdrEstimate
    dag: Dag


class SweepPoint(BaseModel):
    """One kappa of a sweep; `error` is set instead of the result when the point failed."""

    model_config = ConfigDict(frozen=True)

    kappa: float
    seed: int
    estimate: Optional[FdrEstimate] = None
    dag: Optional[Dag] = None
    error: Optional[str] = None


class QDoublingCheck(BaseModel):
    """Estimates at Q and 2Q permutations and the change in expected PPV."""

    model_config = ConfigDict(frozen=True)

    at_q: FdrEstimate
    at_2q: FdrEstimate
    ppv_change: Optional[float] = None


def node_stream(seed: int, replicate: int, node: int) -> np.random.Generator:
    """Independent RNG stream keyed by (seed, replicate, node)."""
    return np.random.default_rng([seed, replicate, node])


def derive_point_seed(seed: int, kappa: float) -> int:
    """Seed of one sweep point, derived from the sweep seed and the kappa value's bits."""
    kappa_bits = struct.unpack("<Q", struct.pack("<d", float(kappa)))[0]
    return int(np.random.SeedSequence([seed, kappa_bits]).generate_state(1, dtype=np.uint32)[0])


def permute_columns_for_node(data: Dataset, node: int, rng: np.random.Generator) -> Dataset:
    """Returns `data` with column `node` replaced by a uniform random permutation of itself."""
    if not 0 <= node < data.n_vars:
        raise IndexError(f"node {node} out of range for {data.n_vars} variables")
    return data.with_column(node, rng.permutation(data.values[:, node]))


def _learner(config: SearchConfig, learner: Optional[ParentSetLearner]) -> ParentSetLearner:
    return learner if learner is not None else GreedyParentSetLearner(config)


def null_arc_count(
    data: Dataset,
    config: SearchConfig,
    seed: int,
    replicate: int = 0,
    learner: Optional[ParentSetLearner] = None,
    workers: Optional[int] = 1,
) -> int:
    """Arcs found on one null replicate.

    Each searched node gets its own fresh permutation of its own column (stream keyed by
    seed, replicate and node); the node's parents are then searched on that dataset.
    """
    algorithm = _learner(config, learner)

    def _count(node: int) -> int:
        permuted = permute_columns_for_node(data, node, node_stream(seed, replicate, node))
        return len(algorithm.learn_parents(permuted, node))

    return sum(map_nodes(_count, algorithm.searched_children(data), workers))


def fdr_from_counts(observed_arcs: int, null_counts: Sequence[int], seed: int = 0) -> FdrEstimate:
    """Smoothed estimator arithmetic; an estimate without discoveries carries no rate."""
    counts = tuple(int(c) for c in null_counts)
    q = len(counts)
    if q < 1:
        raise ValueError("at least one null replicate is required")
    if observed_arcs == 0:
        return FdrEstimate(observed_arcs=0, null_counts=counts, q_permutations=q, seed=seed)
    raw = ((1 + sum(counts)) / q) / observed_arcs
    clamped = min(raw, 1.0)
    return FdrEstimate(
        observed_arcs=observed_arcs,
        null_counts=counts,
        q_permutations=q,
        fdr_raw=raw,
        fdr_clamped=clamped,
        expected_ppv=1.0 - clamped,
        seed=seed,
    )


def estimate_fdr(
    data: Dataset,
    config: SearchConfig,
    q_permutations: int = DEFAULT_Q,
    seed: int = 0,
    learner: Optional[ParentSetLearner] = None,
    workers: Optional[int] = None,
    dag: Optional[Dag] = None,
) -> FdrResult:
    """Learns the structure on the real data and estimates its FDR from Q null replicates.

    Deterministic given `seed`, whatever the worker count. Pass `dag` when the structure
    has already been learned on `data` with the same configuration.
    """
    if q_permutations < 1:
        raise ValueError(f"Q must be at least 1, got {q_permutations}")
    if dag is not None:
        check_same_ordering(data, dag.ordering)
    elif learner is None:
        dag = learn_structure(data, config, workers=workers).dag
    else:
        parents: List[Tuple[int, ...]] = [()] * data.n_vars
        for node in learner.searched_children(data):
            parents[node] = learner.learn_parents(data, node)
        dag = Dag(parents=tuple(parents), ordering=data.ordering)
    null_counts = map_nodes(
        lambda q: null_arc_count(data, config, seed, q, learner=learner, workers=1), range(q_permutations), workers
    )
    estimate = fdr_from_counts(dag.arc_count, null_counts, seed)
    if estimate.no_discoveries:
        logger.info(f"No discoveries at kappa={config.score.kappa}; FDR undefined")
    else:
        logger.info(
            f"FDR at kappa={config.score.kappa}: {dag.arc_count} arcs, null counts {list(null_counts)}, "
            f"raw {estimate.fdr_raw:.4f}, expected PPV {estimate.expected_ppv:.4f}"
        )
    return FdrResult(estimate=estimate, dag=dag)


def fdr_sweep(
    data: Dataset,
    config: SearchConfig,
    kappa_grid: Sequence[float],
    q_permutations: int = DEFAULT_Q,
    seed: int = 0,
    workers: Optional[int] = None,
) -> List[SweepPoint]:
    """One FDR estimate per kappa; a failing point is recorded and the sweep continues."""
    if not kappa_grid:
        raise ValueError("kappa grid must not be empty")
    points: List[SweepPoint] = []
    for kappa in kappa_grid:
        point_seed = derive_point_seed(seed, kappa)
        try:
            result = estimate_fdr(data, config.with_kappa(kappa), q_permutations, point_seed, workers=workers)
        except (ArcFdrError, ValueError) as e:
            logger.warning(f"FDR sweep point kappa={kappa} failed: {e}")
            points.append(SweepPoint(kappa=kappa, seed=point_seed, error=str(e)))
            continue
        points.append(SweepPoint(kappa=kappa, seed=point_seed, estimate=result.estimate, dag=result.dag))
    return points


def q_doubling_check(
    data: Dataset,
    config: SearchConfig,
    q_permutations: int = DEFAULT_Q,
    seed: int = 0,
    workers: Optional[int] = None,
) -> QDoublingCheck:
    """Compares the estimate at Q permutations with the one at 2Q (same seed)."""
    at_q = estimate_fdr(data, config, q_permutations, seed, workers=workers).estimate
    at_2q = estimate_fdr(data, config, 2 * q_permutations, seed, workers=workers).estimate
    change = None
    if at_q.expected_ppv is not None and at_2q.expected_ppv is not None:
        change = abs(at_2q.expected_ppv - at_q.expected_ppv)
    return QDoublingCheck(at_q=at_q, at_2q=at_2q, ppv_change=change)
