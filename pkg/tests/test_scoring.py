# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

import math
from typing import List

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import betaln

from coreason_arcfdr.core import Dag, Dataset, validate_dataset
from coreason_arcfdr.exceptions import CapacityError, StructureError
from coreason_arcfdr.models import ScoreConfig, ScoreFamily
from coreason_arcfdr.scoring import (
    FamilyScorer,
    bdeu_family_loglik,
    bdeu_from_counts,
    bic_cpt_family,
    configuration_count,
    configuration_index,
    family_counts,
    family_score,
    structure_log_prior,
    total_score,
)


def _column(values: List[int]) -> Dataset:
    return validate_dataset(np.array(values)[:, None], [2])


def test_bdeu_two_rows_no_parents() -> None:
    assert bdeu_family_loglik(_column([1, 0]), 0, (), ess=2.0) == pytest.approx(math.log(1 / 6), abs=1e-12)


def test_bdeu_of_empty_table_is_zero() -> None:
    assert bdeu_from_counts(np.zeros((4, 3)), ess=4.0) == 0.0


def test_bdeu_rejects_nonpositive_ess() -> None:
    with pytest.raises(ValueError):
        bdeu_family_loglik(_column([1, 0]), 0, (), ess=0.0)


def _dirichlet_integral(counts: np.ndarray, ess: float) -> float:
    """Log marginal likelihood of a binary-child count table by numerical integration."""
    q = counts.shape[0]
    a = ess / (2 * q)
    total = 0.0
    for n0, n1 in counts:
        # the 'alg' weight integrates theta^(n1+a-1) (1-theta)^(n0+a-1) with its endpoint singularities
        value, _ = quad(
            lambda t: 1.0, 0.0, 1.0, weight="alg", wvar=(n1 + a - 1, n0 + a - 1), epsabs=1e-14, epsrel=1e-12
        )
        total += math.log(value) - betaln(a, a)
    return total


def test_bdeu_matches_numerical_dirichlet_integral() -> None:
    rng = np.random.default_rng(2024)
    for _ in range(50):
        n_parents = int(rng.integers(0, 3))
        n_rows = int(rng.integers(1, 7))
        data = validate_dataset(rng.integers(0, 2, (n_rows, n_parents + 1)), [2] * (n_parents + 1))
        node = n_parents
        parents = tuple(range(n_parents))
        counts = family_counts(data, node, parents)
        expected = _dirichlet_integral(counts, ess=4.0)
        assert bdeu_family_loglik(data, node, parents, ess=4.0) == pytest.approx(expected, abs=1e-8)


def test_bic_alternating_column() -> None:
    data = _column([1, 0, 1, 0])
    assert bic_cpt_family(data, 0, ()) == pytest.approx(-5 * math.log(2), abs=1e-12)


def test_bic_constant_column_is_pure_penalty() -> None:
    data = _column([1, 1, 1, 1, 1])
    assert bic_cpt_family(data, 0, ()) == pytest.approx(-0.5 * math.log(5), abs=1e-12)


def test_bic_with_parent_matches_direct_likelihood() -> None:
    rng = np.random.default_rng(5)
    data = validate_dataset(np.column_stack([rng.integers(0, 3, 60), rng.integers(0, 2, 60)]), [3, 2])
    loglik = 0.0
    for j in range(3):
        rows = data.values[data.values[:, 0] == j, 1]
        for k in range(2):
            n_jk = int((rows == k).sum())
            if n_jk:
                loglik += n_jk * math.log(n_jk / rows.size)
    expected = loglik - 0.5 * 3 * 1 * math.log(60)
    assert bic_cpt_family(data, 1, (0,)) == pytest.approx(expected, abs=1e-10)


def test_structure_log_prior() -> None:
    assert structure_log_prior(2, 0.01) == pytest.approx(2 * math.log(0.01))
    assert structure_log_prior(0, 0.5) == 0.0
    with pytest.raises(ValueError):
        structure_log_prior(-1, 0.5)
    with pytest.raises(ValueError):
        structure_log_prior(1, 0.0)


def test_configuration_index_is_mixed_radix_last_parent_fastest() -> None:
    data = validate_dataset([[1, 2, 0], [0, 1, 1], [1, 0, 1]], [2, 3, 2])
    assert configuration_count(data, (0, 1)) == 6
    assert configuration_index(data, (1, 0)).tolist() == [5, 1, 3]
    assert configuration_index(data, ()).tolist() == [0, 0, 0]


def test_family_counts_shape_and_values() -> None:
    data = validate_dataset([[1, 2, 0], [0, 1, 1], [1, 0, 1]], [2, 3, 2])
    counts = family_counts(data, 2, (0, 1))
    assert counts.shape == (6, 2)
    assert counts.sum() == 3
    assert counts[5, 0] == 1
    assert counts[1, 1] == 1
    assert counts[3, 1] == 1


def test_family_counts_capacity() -> None:
    data = validate_dataset([[0, 0, 0]], [2, 2, 2])
    with pytest.raises(CapacityError):
        family_counts(data, 2, (0, 1), max_configurations=3)


def test_family_score_adds_prior(chain_data: Dataset) -> None:
    config = ScoreConfig(kappa=0.01, ess=4.0)
    scored = family_score(chain_data, 2, (1,), config)
    assert scored.parent_set == (1,)
    expected = bdeu_family_loglik(chain_data, 2, (1,), 4.0) + math.log(0.01)
    assert scored.log_score == pytest.approx(expected, abs=1e-12)


def test_family_score_bic_family(chain_data: Dataset) -> None:
    config = ScoreConfig(family=ScoreFamily.BIC_CPT, kappa=1.0)
    assert family_score(chain_data, 1, (0,), config).log_score == pytest.approx(bic_cpt_family(chain_data, 1, (0,)))


def test_family_score_rejects_later_parent(chain_data: Dataset) -> None:
    with pytest.raises(StructureError):
        family_score(chain_data, 0, (1,), ScoreConfig())


def test_total_score_is_sum_of_families(chain_data: Dataset) -> None:
    config = ScoreConfig()
    dag = Dag(parents=((), (0,), (1,)), ordering=(0, 1, 2))
    expected = sum(family_score(chain_data, i, dag.parents[i], config).log_score for i in range(3))
    assert total_score(chain_data, dag, config) == pytest.approx(expected)


def test_total_score_rejects_other_ordering(chain_data: Dataset) -> None:
    with pytest.raises(StructureError):
        total_score(chain_data, Dag.empty(3, ordering=(2, 1, 0)), ScoreConfig())


def test_family_scorer_caches(chain_data: Dataset) -> None:
    scorer = FamilyScorer(chain_data, ScoreConfig())
    first = scorer.score(2, (1, 0))
    second = scorer.score(2, (0, 1))
    assert first is second
    assert len(scorer) == 1
    scorer.clear()
    assert len(scorer) == 0


def test_bdeu_is_likelihood_equivalent() -> None:
    rng = np.random.default_rng(21)
    for _ in range(25):
        n_rows = int(rng.integers(2, 80))
        data = validate_dataset(rng.integers(0, 2, (n_rows, 2)), [2, 2])
        ess = float(rng.uniform(0.5, 10.0))
        x_to_y = bdeu_family_loglik(data, 0, (), ess) + bdeu_family_loglik(data, 1, (0,), ess)
        y_to_x = bdeu_family_loglik(data, 1, (), ess) + bdeu_family_loglik(data, 0, (1,), ess)
        assert x_to_y == pytest.approx(y_to_x, abs=1e-10)


@pytest.mark.parametrize("family", list(ScoreFamily))
def test_family_scores_ignore_row_order(chain_data: Dataset, family: ScoreFamily) -> None:
    order = np.random.default_rng(2).permutation(chain_data.n_rows)
    shuffled = validate_dataset(chain_data.values[order], chain_data.arities, names=chain_data.names)
    config = ScoreConfig(family=family, kappa=0.1)
    for node, parents in [(0, ()), (1, (0,)), (2, (1,)), (2, (0, 1))]:
        expected = family_score(chain_data, node, parents, config).log_score
        assert family_score(shuffled, node, parents, config).log_score == expected


@pytest.mark.parametrize("family", list(ScoreFamily))
def test_larger_parent_sets_gain_with_kappa(chain_data: Dataset, family: ScoreFamily) -> None:
    kappas = [1e-4, 1e-3, 0.01, 0.1, 1.0, 5.0, 100.0]
    for smaller, larger in [((), (1,)), ((1,), (0, 1)), ((), (0, 1))]:
        gaps = []
        for kappa in kappas:
            config = ScoreConfig(family=family, kappa=kappa)
            gaps.append(
                family_score(chain_data, 2, larger, config).log_score
                - family_score(chain_data, 2, smaller, config).log_score
            )
        assert all(later >= earlier for earlier, later in zip(gaps, gaps[1:], strict=False))
