# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

from typing import List, Tuple

import numpy as np
import pytest

from coreason_arcfdr.core import Dag, Dataset, validate_dataset
from coreason_arcfdr.exceptions import StructureError
from coreason_arcfdr.fdr import (
    derive_point_seed,
    estimate_fdr,
    fdr_from_counts,
    fdr_sweep,
    node_stream,
    null_arc_count,
    permute_columns_for_node,
    q_doubling_check,
)
from coreason_arcfdr.models import ScoreConfig, SearchConfig
from coreason_arcfdr.synth import bipartite_search_config, random_noisyor_network, sample_noisyor_network, standin_score


class CopyEverythingLearner:
    """Declares every predecessor a parent, whatever the data."""

    def searched_children(self, data: Dataset) -> List[int]:
        return list(range(data.n_vars))

    def learn_parents(self, data: Dataset, node: int) -> Tuple[int, ...]:
        position = data.ordering.index(node)
        return tuple(sorted(data.ordering[:position]))


def test_fdr_arithmetic() -> None:
    estimate = fdr_from_counts(30, [2] * 10)
    assert estimate.fdr_raw == pytest.approx(((1 + 20) / 10) / 30)
    assert estimate.expected_ppv == pytest.approx(1 - 0.07)


def test_fdr_arithmetic_small_null() -> None:
    estimate = fdr_from_counts(30, [0] * 9 + [2])
    assert estimate.fdr_raw == pytest.approx(0.01)
    assert estimate.fdr_clamped == pytest.approx(0.01)
    assert estimate.expected_ppv == pytest.approx(0.99)


def test_fdr_is_clamped() -> None:
    estimate = fdr_from_counts(5, [10] * 10)
    assert estimate.fdr_raw == pytest.approx(2.02)
    assert estimate.fdr_clamped == 1.0
    assert estimate.expected_ppv == 0.0


def test_fdr_without_discoveries_is_undefined() -> None:
    estimate = fdr_from_counts(0, [1, 0, 2], seed=5)
    assert estimate.no_discoveries
    assert estimate.fdr_raw is None
    assert estimate.fdr_clamped is None
    assert estimate.expected_ppv is None
    assert estimate.null_counts == (1, 0, 2)
    assert estimate.seed == 5


def test_fdr_requires_a_replicate() -> None:
    with pytest.raises(ValueError):
        fdr_from_counts(3, [])


def test_permutation_preserves_the_column_multiset(chain_data: Dataset) -> None:
    permuted = permute_columns_for_node(chain_data, 1, np.random.default_rng(0))
    assert sorted(permuted.values[:, 1]) == sorted(chain_data.values[:, 1])
    np.testing.assert_array_equal(permuted.values[:, [0, 2]], chain_data.values[:, [0, 2]])
    np.testing.assert_array_equal(chain_data.values[:, 1], chain_data.column(1))


def test_permutation_rejects_bad_node(chain_data: Dataset) -> None:
    with pytest.raises(IndexError):
        permute_columns_for_node(chain_data, 3, np.random.default_rng(0))


def test_node_streams_are_reproducible() -> None:
    assert node_stream(1, 2, 3).random() == node_stream(1, 2, 3).random()
    assert node_stream(1, 2, 3).random() != node_stream(1, 2, 4).random()


def test_derived_seeds_depend_on_kappa() -> None:
    assert derive_point_seed(0, 0.1) == derive_point_seed(0, 0.1)
    assert derive_point_seed(0, 0.1) != derive_point_seed(0, 0.01)
    assert derive_point_seed(0, 0.1) != derive_point_seed(1, 0.1)


def test_null_count_of_a_copying_learner_counts_every_candidate(chain_data: Dataset) -> None:
    config = SearchConfig(ordering=chain_data.ordering)
    assert null_arc_count(chain_data, config, seed=0, learner=CopyEverythingLearner()) == 3


def test_estimate_with_custom_learner(chain_data: Dataset) -> None:
    config = SearchConfig(ordering=chain_data.ordering)
    result = estimate_fdr(chain_data, config, q_permutations=4, learner=CopyEverythingLearner())
    assert result.dag.arc_count == 3
    assert result.estimate.null_counts == (3, 3, 3, 3)
    assert result.estimate.fdr_raw == pytest.approx(((1 + 12) / 4) / 3)
    assert result.estimate.fdr_clamped == 1.0


def test_chain_has_low_fdr(chain_data: Dataset, chain_config: SearchConfig) -> None:
    result = estimate_fdr(chain_data, chain_config, q_permutations=10, seed=1)
    assert result.dag.arcs.sorted() == [(0, 1), (1, 2)]
    assert result.estimate.observed_arcs == 2
    assert result.estimate.fdr_raw is not None
    assert result.estimate.fdr_raw >= 0.05
    assert result.estimate.fdr_clamped is not None
    assert result.estimate.fdr_clamped < 0.5


def test_noise_without_discoveries(noise_data: Dataset) -> None:
    config = SearchConfig(score=ScoreConfig(kappa=1e-4), ordering=noise_data.ordering)
    result = estimate_fdr(noise_data, config, q_permutations=3)
    assert result.estimate.no_discoveries
    assert result.estimate.expected_ppv is None


def test_estimate_is_deterministic_across_workers(chain_data: Dataset) -> None:
    config = SearchConfig(score=ScoreConfig(kappa=1.0), ordering=chain_data.ordering)
    serial = estimate_fdr(chain_data, config, q_permutations=6, seed=42, workers=1)
    parallel = estimate_fdr(chain_data, config, q_permutations=6, seed=42, workers=4)
    assert serial == parallel


def test_estimate_uses_a_given_structure(chain_data: Dataset, chain_config: SearchConfig) -> None:
    dag = Dag.from_arcs(3, [(0, 1)])
    result = estimate_fdr(chain_data, chain_config, q_permutations=2, dag=dag)
    assert result.dag == dag
    assert result.estimate.observed_arcs == 1
    with pytest.raises(StructureError):
        estimate_fdr(chain_data, chain_config, q_permutations=2, dag=Dag.empty(3, ordering=(2, 1, 0)))


def test_estimate_rejects_zero_permutations(chain_data: Dataset, chain_config: SearchConfig) -> None:
    with pytest.raises(ValueError):
        estimate_fdr(chain_data, chain_config, q_permutations=0)


def test_sweep_point_equals_single_estimate(chain_data: Dataset, chain_config: SearchConfig) -> None:
    points = fdr_sweep(chain_data, chain_config, [0.05], q_permutations=3, seed=7)
    assert len(points) == 1
    direct = estimate_fdr(chain_data, chain_config.with_kappa(0.05), 3, derive_point_seed(7, 0.05))
    assert points[0].estimate == direct.estimate
    assert points[0].dag == direct.dag
    assert points[0].error is None


def test_sweep_records_failing_points() -> None:
    data = validate_dataset(np.random.default_rng(0).integers(0, 2, (30, 3)), [2, 2, 2])
    config = SearchConfig(score=ScoreConfig(max_configurations=1), ordering=data.ordering)
    points = fdr_sweep(data, config, [0.5, 10.0], q_permutations=2)
    assert [p.kappa for p in points] == [0.5, 10.0]
    assert all(p.error is not None and p.estimate is None for p in points)


def test_sweep_rejects_empty_grid(chain_data: Dataset, chain_config: SearchConfig) -> None:
    with pytest.raises(ValueError):
        fdr_sweep(chain_data, chain_config, [])


def test_q_doubling_check(chain_data: Dataset, chain_config: SearchConfig) -> None:
    check = q_doubling_check(chain_data, chain_config, q_permutations=3, seed=2)
    assert check.at_q.q_permutations == 3
    assert check.at_2q.q_permutations == 6
    assert check.ppv_change is not None
    assert 0.0 <= check.ppv_change <= 1.0


@pytest.mark.parametrize("kappa", [1.0, 10.0, 100.0])
def test_noisyor_fdr_with_rarely_reacting_peptides(kappa: float) -> None:
    rng = np.random.default_rng(3)
    net = random_noisyor_network(rng, hla_count=10, peptide_count=8)
    data = sample_noisyor_network(net, 102, rng)
    config = bipartite_search_config(10, 8, standin_score(kappa))
    result = estimate_fdr(data, config, 2, seed=3)
    assert all(10 <= child and parent < 10 for parent, child in result.dag.arcs.sorted())
    assert len(result.estimate.null_counts) == 2


@pytest.mark.slow
def test_fdr_of_independent_columns_stays_high() -> None:
    replicates_with_arcs = 0
    high = 0
    for seed in range(20):
        rng = np.random.default_rng([seed, 500])
        data = validate_dataset(rng.integers(0, 2, (500, 20)), [2] * 20)
        config = SearchConfig(score=ScoreConfig(kappa=5.0), ordering=data.ordering)
        estimate = estimate_fdr(data, config, 10, seed=seed).estimate
        if estimate.fdr_clamped is None:
            continue
        replicates_with_arcs += 1
        if estimate.fdr_clamped >= 0.5:
            high += 1
    assert replicates_with_arcs >= 10
    assert high >= 0.9 * replicates_with_arcs
