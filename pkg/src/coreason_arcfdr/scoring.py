# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Decomposable family scores: exact BDeu, BIC for CPT families and the kappa^M prior.

All scores are natural-log quantities. Parent configurations are indexed mixed-radix over
the parents in ascending index order, the last parent varying fastest.
"""

import math
import threading
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, xlogy

from coreason_arcfdr.core import Dag, Dataset, check_same_ordering, positions
from coreason_arcfdr.exceptions import CapacityError, StructureError
from coreason_arcfdr.models import DEFAULT_MAX_CONFIGURATIONS, FamilyScore, ScoreConfig, ScoreFamily


def configuration_count(data: Dataset, parents: Sequence[int]) -> int:
    """Product of the parent arities (1 for an empty parent set)."""
    return math.prod(data.arities[p] for p in parents)


def configuration_index(data: Dataset, parents: Sequence[int]) -> np.ndarray:
    """Per-row mixed-radix index of the parent configuration."""
    parents = sorted(parents)
    if not parents:
        return np.zeros(data.n_rows, dtype=np.int64)
    return np.ravel_multi_index(
        tuple(data.values[:, p] for p in parents), tuple(data.arities[p] for p in parents)
    ).astype(np.int64)


def family_counts(
    data: Dataset, node: int, parents: Sequence[int], max_configurations: int = DEFAULT_MAX_CONFIGURATIONS
) -> np.ndarray:
    """Counts N_jk of node state k under parent configuration j.

    Returns:
        A (q, r) integer array, q = number of parent configurations, r = arity of `node`.

    Raises:
        CapacityError: If q exceeds `max_configurations`.
    """
    q = configuration_count(data, parents)
    if q > max_configurations:
        raise CapacityError(
            f"node {node} with parents {sorted(parents)} has {q} parent configurations "
            f"(cap {max_configurations})"
        )
    r = data.arities[node]
    flat = configuration_index(data, parents) * r + data.values[:, node]
    return np.bincount(flat, minlength=q * r).reshape(q, r)


def bdeu_from_counts(counts: np.ndarray, ess: float) -> float:
    """Closed-form BDeu log marginal likelihood of a count table.

    With q configurations and r states, alpha_jk = ess / (q r) and alpha_j = ess / q.
    An empty table (no rows) scores 0.
    """
    q, r = counts.shape
    a_jk = ess / (q * r)
    a_j = ess / q
    n_j = counts.sum(axis=1)
    return float(np.sum(gammaln(a_j) - gammaln(a_j + n_j)) + np.sum(gammaln(a_jk + counts) - gammaln(a_jk)))


def bdeu_family_loglik(
    data: Dataset,
    node: int,
    parents: Sequence[int],
    ess: float,
    max_configurations: int = DEFAULT_MAX_CONFIGURATIONS,
) -> float:
    """Exact log marginal likelihood of one family under the BDeu Dirichlet prior."""
    if ess <= 0:
        raise ValueError(f"equivalent sample size must be positive, got {ess}")
    return bdeu_from_counts(family_counts(data, node, parents, max_configurations), ess)


def bic_cpt_family(
    data: Dataset, node: int, parents: Sequence[int], max_configurations: int = DEFAULT_MAX_CONFIGURATIONS
) -> float:
    """BIC score of a CPT family: ML log likelihood minus (d/2) ln n, d = q (r - 1).

    ML parameters are the empirical conditional frequencies; 0 ln 0 = 0.
    """
    counts = family_counts(data, node, parents, max_configurations)
    q, r = counts.shape
    loglik = float(np.sum(xlogy(counts, counts)) - np.sum(xlogy(counts.sum(axis=1), counts.sum(axis=1))))
    return loglik - 0.5 * q * (r - 1) * math.log(data.n_rows)


def structure_log_prior(arc_count: int, kappa: float) -> float:
    """Unnormalised log structure prior M ln kappa."""
    if arc_count < 0:
        raise ValueError(f"arc count must be nonnegative, got {arc_count}")
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    return arc_count * math.log(kappa)


def data_term(data: Dataset, node: int, parents: Sequence[int], config: ScoreConfig) -> float:
    """The data part of a family score for the configured family."""
    if config.family == ScoreFamily.BDEU_EXACT:
        return bdeu_family_loglik(data, node, parents, config.ess, config.max_configurations)
    if config.family == ScoreFamily.BIC_CPT:
        return bic_cpt_family(data, node, parents, config.max_configurations)
    from coreason_arcfdr.noisyor import noisyor_bic_family

    return noisyor_bic_family(data, node, parents, tol=config.noisyor_tol)


def family_score(data: Dataset, node: int, parents: Sequence[int], config: ScoreConfig) -> FamilyScore:
    """Data term plus |parents| ln kappa, comparable across parent sets of one node.

    Raises:
        StructureError: If a parent does not precede `node` in the dataset ordering.
    """
    parent_set = tuple(sorted(parents))
    pos = positions(data.ordering)
    for parent in parent_set:
        if not 0 <= parent < data.n_vars or pos[parent] >= pos[node]:
            raise StructureError(f"parent {parent} is not a candidate parent of node {node}")
    log_score = data_term(data, node, parent_set, config) + structure_log_prior(len(parent_set), config.kappa)
    return FamilyScore(node=node, parent_set=parent_set, log_score=log_score)


def total_score(data: Dataset, dag: Dag, config: ScoreConfig) -> float:
    """Decomposable total: the sum of the family scores of every node."""
    check_same_ordering(data, dag.ordering)
    return sum(family_score(data, node, family, config).log_score for node, family in enumerate(dag.parents))


class FamilyScorer:
    """Memoised family scores for one dataset and score configuration.

    The cache is guarded by a lock; filling it is idempotent, so concurrent callers
    observe the same values as an uncached scorer.
    """

    def __init__(self, data: Dataset, config: ScoreConfig) -> None:
        self.data = data
        self.config = config
        self._lock = threading.Lock()
        self._cache: Dict[Tuple[int, Tuple[int, ...]], FamilyScore] = {}

    def score(self, node: int, parents: Sequence[int]) -> FamilyScore:
        """Returns the family score of `node` with `parents`, computing it at most once."""
        key = (node, tuple(sorted(parents)))
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        result = family_score(self.data, node, key[1], self.config)
        with self._lock:
            self._cache.setdefault(key, result)
        return result

    def __len__(self) -> int:
        with self._lock:
            return len(self._cache)

    def clear(self) -> None:
        """Clears the cache."""
        with self._lock:
            self._cache.clear()
