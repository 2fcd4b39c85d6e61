# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

import itertools
import math
from typing import List, Tuple

import numpy as np
import pytest
from scipy.special import logsumexp

from coreason_arcfdr.bayes import (
    arc_marginals,
    bdeu_predictive,
    enumerate_parent_posteriors,
    expected_true_arcs,
    marginal_truncation_check,
    model_averaged_log_predictive,
    model_selection_log_predictive,
    nested_models_by_threshold,
    posterior_arc_marginals,
    subset_count,
)
from coreason_arcfdr.core import Dag, Dataset, validate_dataset
from coreason_arcfdr.exceptions import CapacityError, StructureError
from coreason_arcfdr.models import ParentSetPosterior, ScoreConfig, ScoreFamily
from coreason_arcfdr.scoring import bdeu_family_loglik

CONFIG = ScoreConfig(kappa=0.1, ess=4.0)


def test_subset_count() -> None:
    assert subset_count(4, 2) == 1 + 4 + 6
    assert subset_count(2, 5) == 4
    assert subset_count(0, 3) == 1


def test_first_node_has_single_entry(chain_data: Dataset) -> None:
    post = enumerate_parent_posteriors(chain_data, 0, CONFIG)
    assert len(post.entries) == 1
    assert post.probability_of(()) == 1.0
    assert arc_marginals(post) == {}


def test_two_candidates_enumerate_four_sets(chain_data: Dataset) -> None:
    post = enumerate_parent_posteriors(chain_data, 2, CONFIG, k=2)
    assert [entry[0] for entry in post.entries] == [(), (0,), (1,), (0, 1)]
    assert post.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert post.probability_of((1,)) > 0.5


def test_posterior_matches_direct_normalisation(chain_data: Dataset) -> None:
    post = enumerate_parent_posteriors(chain_data, 2, CONFIG, k=2)
    sets = [(), (0,), (1,), (0, 1)]
    log_scores = np.array([bdeu_family_loglik(chain_data, 2, s, 4.0) + len(s) * math.log(0.1) for s in sets])
    expected = np.exp(log_scores - log_scores.max())
    expected /= expected.sum()
    np.testing.assert_allclose(post.probabilities, expected, rtol=0, atol=1e-12)


def test_size_limit_truncates(chain_data: Dataset) -> None:
    post = enumerate_parent_posteriors(chain_data, 2, CONFIG, k=1)
    assert post.size_limit == 1
    assert post.probability_of((0, 1)) == 0.0
    assert len(post.entries) == 3


def test_empty_set_mass_shrinks_as_kappa_grows(chain_data: Dataset) -> None:
    kappas = [1e-4, 0.01, 0.1, 1.0, 5.0]
    empty_mass = [
        enumerate_parent_posteriors(chain_data, 1, CONFIG.model_copy(update={"kappa": kappa})).probability_of(())
        for kappa in kappas
    ]
    assert all(later <= earlier for earlier, later in zip(empty_mass, empty_mass[1:], strict=False))


def test_arc_marginals_sum_over_sets() -> None:
    post = ParentSetPosterior(
        node=2,
        candidates=(0, 1),
        size_limit=2,
        subsets=np.array([[0, -1], [0, 1]]),
        log_scores=np.array([0.0, -1.0]),
        probabilities=np.array([0.7, 0.3]),
    )
    marginals = arc_marginals(post)
    assert marginals[0] == pytest.approx(1.0)
    assert marginals[1] == pytest.approx(0.3)


def test_empty_set_posterior_gives_zero_marginals() -> None:
    post = ParentSetPosterior(
        node=2,
        candidates=(0, 1),
        size_limit=2,
        subsets=np.full((1, 2), -1),
        log_scores=np.array([0.0]),
        probabilities=np.array([1.0]),
    )
    assert arc_marginals(post) == {0: 0.0, 1: 0.0}


def test_non_bdeu_family_is_rejected(chain_data: Dataset) -> None:
    with pytest.raises(ValueError):
        enumerate_parent_posteriors(chain_data, 2, ScoreConfig(family=ScoreFamily.BIC_CPT))


def test_capacity_is_enforced(chain_data: Dataset) -> None:
    with pytest.raises(CapacityError):
        enumerate_parent_posteriors(chain_data, 2, CONFIG, capacity=3)


def test_expected_true_arcs_of_empty_model(chain_data: Dataset) -> None:
    summary = posterior_arc_marginals(chain_data, CONFIG)
    estimate = expected_true_arcs(summary.marginals, Dag.empty(3))
    assert estimate.expected_true_arcs == 0.0
    assert estimate.model_arc_count == 0
    assert estimate.expected_ppv is None


def test_expected_true_arcs_with_certain_arcs() -> None:
    marginals = {(0, 1): 1.0, (0, 2): 0.2, (1, 2): 1.0}
    estimate = expected_true_arcs(marginals, Dag.from_arcs(3, [(0, 1), (1, 2)]))
    assert estimate.expected_true_arcs == pytest.approx(2.0)
    assert estimate.expected_ppv == pytest.approx(1.0)
    assert estimate.per_arc_marginals == {(0, 1): 1.0, (1, 2): 1.0}


def test_expected_true_arcs_rejects_unknown_arc() -> None:
    with pytest.raises(StructureError):
        expected_true_arcs({(0, 1): 0.5}, Dag.from_arcs(3, [(1, 2)]))


def _ordering_consistent_dags(n: int) -> List[Tuple[Tuple[int, ...], ...]]:
    per_node = [
        [subset for size in range(node + 1) for subset in itertools.combinations(range(node), size)]
        for node in range(n)
    ]
    return list(itertools.product(*per_node))


def test_expected_true_arcs_matches_brute_force_over_all_dags() -> None:
    rng = np.random.default_rng(123)
    structures = _ordering_consistent_dags(4)
    assert len(structures) == 64
    for _ in range(20):
        n_rows = int(rng.integers(10, 60))
        data = validate_dataset(rng.integers(0, 2, (n_rows, 4)), [2] * 4)
        config = ScoreConfig(kappa=float(10 ** rng.uniform(-2, 0)), ess=float(rng.uniform(1.0, 8.0)))
        g_l = Dag(parents=structures[int(rng.integers(0, len(structures)))], ordering=(0, 1, 2, 3))

        family = {
            (node, parents): bdeu_family_loglik(data, node, parents, config.ess) + len(parents) * math.log(config.kappa)
            for node in range(4)
            for size in range(node + 1)
            for parents in itertools.combinations(range(node), size)
        }
        log_posterior = np.array([sum(family[(i, s)] for i, s in enumerate(dag)) for dag in structures])
        weights = np.exp(log_posterior - logsumexp(log_posterior))
        overlaps = np.array(
            [len(g_l.arcs & Dag(parents=dag, ordering=(0, 1, 2, 3)).arcs) for dag in structures], dtype=float
        )
        expected = float(weights @ overlaps)

        summary = posterior_arc_marginals(data, config, k=3)
        assert expected_true_arcs(summary.marginals, g_l).expected_true_arcs == pytest.approx(expected, abs=1e-10)


def test_nested_models_by_threshold() -> None:
    marginals = {(0, 1): 0.95, (0, 2): 0.6, (1, 2): 0.4}
    models = nested_models_by_threshold(marginals, [0.9, 0.5], (0, 1, 2))
    assert [m.dag.arcs.sorted() for m in models] == [[(0, 1)], [(0, 1), (0, 2)]]
    assert models[1].estimate.expected_true_arcs == pytest.approx(1.55)


def test_nested_models_at_threshold_one_are_empty() -> None:
    models = nested_models_by_threshold({(0, 1): 1.0}, [1.0], (0, 1))
    assert models[0].dag.arc_count == 0
    assert models[0].estimate.expected_ppv is None


def test_nested_models_require_descending_thresholds() -> None:
    with pytest.raises(ValueError):
        nested_models_by_threshold({}, [0.5, 0.9], (0, 1))
    with pytest.raises(ValueError):
        nested_models_by_threshold({}, [1.5], (0, 1))


def test_truncation_change_vanishes_when_all_sets_are_enumerated(chain_data: Dataset) -> None:
    check = marginal_truncation_check(chain_data, CONFIG, k=2)
    assert check.max_abs_change == pytest.approx(0.0, abs=1e-12)


def test_truncation_change_is_reported() -> None:
    rng = np.random.default_rng(6)
    a, b = rng.integers(0, 2, (2, 80))
    c = a ^ b
    data = validate_dataset(np.column_stack([a, b, c]), [2, 2, 2])
    check = marginal_truncation_check(data, ScoreConfig(kappa=0.5), k=1)
    assert check.size_limit == 1
    assert check.max_abs_change > 0.0
    assert check.worst_arc is not None


def test_workers_do_not_change_marginals(chain_data: Dataset) -> None:
    serial = posterior_arc_marginals(chain_data, CONFIG, workers=1)
    parallel = posterior_arc_marginals(chain_data, CONFIG, workers=3)
    assert serial.marginals == parallel.marginals


def test_bdeu_predictive_without_parents() -> None:
    train = validate_dataset([[0], [0], [1]], [2])
    test = validate_dataset([[0], [1]], [2])
    probs = bdeu_predictive(train, test, 0, (), ess=4.0)
    np.testing.assert_allclose(probs, [(2 + 2) / (3 + 4), (1 + 2) / (3 + 4)])


def test_model_selection_log_predictive_sums_nodes(chain_data: Dataset) -> None:
    dag = Dag.empty(3)
    expected = sum(np.log(bdeu_predictive(chain_data, chain_data, i, (), 4.0)).sum() for i in range(3))
    assert model_selection_log_predictive(chain_data, chain_data, dag, 4.0) == pytest.approx(expected)


def test_model_averaging_with_size_zero_equals_empty_model(chain_data: Dataset) -> None:
    averaged = model_averaged_log_predictive(chain_data, chain_data, CONFIG, k=0)
    selected = model_selection_log_predictive(chain_data, chain_data, Dag.empty(3), CONFIG.ess)
    assert averaged == pytest.approx(selected)


def test_predictive_requires_compatible_data(chain_data: Dataset) -> None:
    with pytest.raises(StructureError):
        model_selection_log_predictive(chain_data, chain_data.with_ordering((2, 1, 0)), Dag.empty(3), 4.0)
