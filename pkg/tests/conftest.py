# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

from typing import Iterator

import numpy as np
import pytest

from coreason_arcfdr.core import Dag, Dataset, validate_dataset
from coreason_arcfdr.models import ScoreConfig, SearchConfig
from coreason_arcfdr.registry import NetworkRegistry
from coreason_arcfdr.synth import CptNetwork, load_alarm


def flip(column: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Copies a binary column, flipping each entry with probability `rate`."""
    return np.where(rng.random(column.shape[0]) < rate, 1 - column, column)


@pytest.fixture
def copy_pair() -> Dataset:
    """Two binary columns, the second an exact copy of the first."""
    rng = np.random.default_rng(7)
    a = rng.integers(0, 2, 100)
    return validate_dataset(np.column_stack([a, a]), [2, 2], names=["A", "B"])


@pytest.fixture
def chain_data() -> Dataset:
    """A -> B -> C with each copy flipped 10% of the time."""
    rng = np.random.default_rng(11)
    a = rng.integers(0, 2, 200)
    b = flip(a, 0.1, rng)
    c = flip(b, 0.1, rng)
    return validate_dataset(np.column_stack([a, b, c]), [2, 2, 2], names=["A", "B", "C"])


@pytest.fixture
def noise_data() -> Dataset:
    """Five mutually independent uniform binary columns."""
    rng = np.random.default_rng(3)
    return validate_dataset(rng.integers(0, 2, (1000, 5)), [2] * 5)


@pytest.fixture
def chain_config(chain_data: Dataset) -> SearchConfig:
    return SearchConfig(score=ScoreConfig(kappa=0.01, ess=4.0), ordering=chain_data.ordering)


@pytest.fixture
def tiny_network() -> CptNetwork:
    """A -> B over binary nodes, B copying A with 90% probability."""
    dag = Dag(parents=((), (0,)), ordering=(0, 1))
    cpts = (np.array([[0.3, 0.7]]), np.array([[0.9, 0.1], [0.1, 0.9]]))
    return CptNetwork(dag=dag, arities=(2, 2), names=("A", "B"), cpts=cpts)


@pytest.fixture(scope="session")
def alarm() -> CptNetwork:
    return load_alarm()


@pytest.fixture
def registry() -> Iterator[NetworkRegistry]:
    reg = NetworkRegistry()
    reg.clear()
    yield reg
    reg.clear()
