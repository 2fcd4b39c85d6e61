# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Exact Bayesian arc confidence under a known ordering.

The structure posterior factorises over nodes, so the expected number of true arcs in a
given model is the sum of the marginal posteriors of its arcs. Per-node posteriors are
enumerated exactly over all parent sets up to a size limit; larger sets get zero mass.
"""

import itertools
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import logsumexp

from coreason_arcfdr.core import Arc, Dag, Dataset, candidate_parents, check_same_ordering
from coreason_arcfdr.exceptions import CapacityError, StructureError
from coreason_arcfdr.models import BayesEstimate, ParentSetPosterior, ScoreConfig, ScoreFamily
from coreason_arcfdr.scoring import bdeu_from_counts, configuration_index, family_counts
from coreason_arcfdr.utils.concurrency import map_nodes
from coreason_arcfdr.utils.logger import logger

DEFAULT_SIZE_LIMIT = 5
DEFAULT_SUBSET_CAPACITY = 5_000_000
DEFAULT_BAYES_KAPPA = 0.1
DEFAULT_BAYES_ESS = 4.0
# mixture components below this posterior mass are dropped from predictive averages
PREDICTIVE_MASS_FLOOR = 1e-15

ArcMarginals = Dict[Arc, float]


class PosteriorSummary(BaseModel):
    """Per-node parent-set posteriors and the arc marginals derived from them."""

    model_config = ConfigDict(frozen=True)

    size_limit: int
    posteriors: Dict[int, ParentSetPosterior]
    marginals: ArcMarginals


class NestedModel(BaseModel):
    """A model built from all arcs whose marginal exceeds a threshold."""

    model_config = ConfigDict(frozen=True)

    threshold: float
    dag: Dag
    estimate: BayesEstimate


class TruncationCheck(BaseModel):
    """Effect of raising the parent-set size limit from k to k + 1."""

    model_config = ConfigDict(frozen=True)

    size_limit: int
    max_abs_change: float
    worst_arc: Optional[Arc] = None


def subset_count(n_candidates: int, size_limit: int) -> int:
    """Number of subsets of at most `size_limit` elements."""
    return sum(math.comb(n_candidates, s) for s in range(min(size_limit, n_candidates) + 1))


def _require_bdeu(config: ScoreConfig) -> None:
    if config.family != ScoreFamily.BDEU_EXACT:
        raise ValueError(f"exact posteriors need the BDeu family, got {config.family.value}")


def enumerate_parent_posteriors(
    data: Dataset,
    node: int,
    config: ScoreConfig,
    k: int = DEFAULT_SIZE_LIMIT,
    capacity: int = DEFAULT_SUBSET_CAPACITY,
) -> ParentSetPosterior:
    """Posterior over every candidate parent set of `node` with at most `k` members.

    Each set S scores bdeu_family_loglik + |S| ln kappa; scores are normalised with
    log-sum-exp. Sets are enumerated by size, then lexicographically.

    Raises:
        ValueError: If the score family is not exact BDeu.
        CapacityError: If the number of subsets exceeds `capacity`.
    """
    _require_bdeu(config)
    if k < 0:
        raise ValueError(f"size limit must be nonnegative, got {k}")
    candidates = sorted(candidate_parents(node, data.ordering))
    limit = min(k, len(candidates))
    count = subset_count(len(candidates), limit)
    if count > capacity:
        raise CapacityError(f"node {node}: {count} parent sets to enumerate (capacity {capacity})")

    subsets = np.full((count, limit), -1, dtype=np.int64)
    log_scores = np.empty(count)
    log_kappa = math.log(config.kappa)
    row = 0
    for size in range(limit + 1):
        for combo in itertools.combinations(candidates, size):
            subsets[row, :size] = combo
            counts = family_counts(data, node, combo, config.max_configurations)
            log_scores[row] = bdeu_from_counts(counts, config.ess) + size * log_kappa
            row += 1

    probabilities = np.exp(log_scores - logsumexp(log_scores))
    probabilities /= probabilities.sum()
    return ParentSetPosterior(
        node=node,
        candidates=tuple(candidates),
        size_limit=limit,
        subsets=subsets,
        log_scores=log_scores,
        probabilities=probabilities,
    )


def arc_marginals(post: ParentSetPosterior) -> Dict[int, float]:
    """Marginal posterior of each candidate parent: total mass of the sets containing it."""
    mask = post.subsets >= 0
    weights = np.broadcast_to(post.probabilities[:, None], post.subsets.shape)[mask]
    size = max(post.candidates, default=-1) + 1
    sums = np.bincount(post.subsets[mask], weights=weights, minlength=size)
    return {parent: float(min(1.0, sums[parent])) for parent in post.candidates}


def posterior_arc_marginals(
    data: Dataset,
    config: ScoreConfig,
    k: int = DEFAULT_SIZE_LIMIT,
    workers: Optional[int] = None,
    capacity: int = DEFAULT_SUBSET_CAPACITY,
) -> PosteriorSummary:
    """Enumerates every node's posterior and collects the marginal of each candidate arc."""
    _require_bdeu(config)
    nodes = list(range(data.n_vars))
    posteriors = map_nodes(lambda node: enumerate_parent_posteriors(data, node, config, k, capacity), nodes, workers)
    marginals: ArcMarginals = {}
    for post in posteriors:
        for parent, probability in arc_marginals(post).items():
            marginals[(parent, post.node)] = probability
    logger.info(
        f"Enumerated parent-set posteriors for {data.n_vars} nodes "
        f"(k={k}, kappa={config.kappa}, ess={config.ess}); expected arcs {sum(marginals.values()):.3f}"
    )
    return PosteriorSummary(size_limit=k, posteriors={p.node: p for p in posteriors}, marginals=marginals)


def expected_true_arcs(marginals: ArcMarginals, g_l: Dag) -> BayesEstimate:
    """Bayesian expected number of true arcs in `g_l`: the sum of its arcs' marginals.

    Raises:
        StructureError: If `g_l` has an arc outside the candidate universe of `marginals`.
    """
    per_arc: Dict[Arc, float] = {}
    for arc in g_l.arcs.sorted():
        if arc not in marginals:
            raise StructureError(f"arc {arc[0]} -> {arc[1]} is not a candidate arc")
        per_arc[arc] = marginals[arc]
    expected = min(float(sum(per_arc.values())), float(len(per_arc)))
    count = g_l.arc_count
    return BayesEstimate(
        expected_true_arcs=expected,
        per_arc_marginals=per_arc,
        model_arc_count=count,
        expected_ppv=min(1.0, expected / count) if count else None,
    )


def nested_models_by_threshold(
    marginals: ArcMarginals, thresholds: Sequence[float], ordering: Sequence[int]
) -> List[NestedModel]:
    """One model per threshold t containing every arc with marginal strictly above t.

    Raises:
        ValueError: If thresholds are not strictly descending within (0, 1].
    """
    values = list(thresholds)
    if any(not 0.0 < t <= 1.0 for t in values):
        raise ValueError("thresholds must lie in (0, 1]")
    if any(later >= earlier for earlier, later in zip(values, values[1:])):
        raise ValueError("thresholds must be strictly descending")
    n_nodes = len(ordering)
    models: List[NestedModel] = []
    for threshold in values:
        arcs = [arc for arc, probability in marginals.items() if probability > threshold]
        dag = Dag.from_arcs(n_nodes, arcs, ordering)
        models.append(NestedModel(threshold=threshold, dag=dag, estimate=expected_true_arcs(marginals, dag)))
    return models


def marginal_truncation_check(
    data: Dataset,
    config: ScoreConfig,
    k: int = DEFAULT_SIZE_LIMIT,
    workers: Optional[int] = None,
    baseline: Optional[PosteriorSummary] = None,
) -> TruncationCheck:
    """Re-runs the enumeration at k + 1 and reports the largest change of any arc marginal."""
    at_k = baseline if baseline is not None else posterior_arc_marginals(data, config, k, workers)
    at_k1 = posterior_arc_marginals(data, config, k + 1, workers)
    worst: Optional[Arc] = None
    change = 0.0
    for arc, probability in at_k1.marginals.items():
        delta = abs(probability - at_k.marginals.get(arc, 0.0))
        if delta > change:
            change, worst = delta, arc
    logger.info(f"Size limit {k} -> {k + 1}: max marginal change {change:.4g}")
    return TruncationCheck(size_limit=k, max_abs_change=change, worst_arc=worst)


def bdeu_predictive(train: Dataset, test: Dataset, node: int, parents: Sequence[int], ess: float) -> np.ndarray:
    """BDeu posterior-predictive probability of each test row's value of `node`."""
    counts = family_counts(train, node, parents)
    q, r = counts.shape
    a_jk = ess / (q * r)
    config = configuration_index(test, parents)
    numerator = counts[config, test.values[:, node]] + a_jk
    denominator = counts.sum(axis=1)[config] + ess / q
    return np.asarray(numerator / denominator, dtype=float)


def _check_compatible(train: Dataset, test: Dataset) -> None:
    if train.arities != test.arities or train.ordering != test.ordering:
        raise StructureError("training and held-out data must share arities and ordering")


def model_selection_log_predictive(train: Dataset, test: Dataset, dag: Dag, ess: float) -> float:
    """Held-out log likelihood under one structure with BDeu posterior-predictive parameters."""
    _check_compatible(train, test)
    check_same_ordering(train, dag.ordering)
    return float(
        sum(np.log(bdeu_predictive(train, test, node, family, ess)).sum() for node, family in enumerate(dag.parents))
    )


def model_averaged_log_predictive(
    train: Dataset,
    test: Dataset,
    config: ScoreConfig,
    k: int = DEFAULT_SIZE_LIMIT,
    summary: Optional[PosteriorSummary] = None,
    workers: Optional[int] = None,
) -> float:
    """Held-out log likelihood averaging each node's predictive over its parent-set posterior.

    Each test row is scored independently given the training data.
    """
    _check_compatible(train, test)
    summary = summary if summary is not None else posterior_arc_marginals(train, config, k, workers)
    total = 0.0
    for node, post in sorted(summary.posteriors.items()):
        mixture = np.zeros(test.n_rows)
        for row in np.flatnonzero(post.probabilities >= PREDICTIVE_MASS_FLOOR):
            parents = post.parent_set(int(row))
            mixture += post.probabilities[row] * bdeu_predictive(train, test, node, parents, config.ess)
        total += float(np.log(mixture).sum())
    return total
