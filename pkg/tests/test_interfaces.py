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

from coreason_arcfdr.core import Dataset
from coreason_arcfdr.interfaces import ParentSetLearner
from coreason_arcfdr.models import SearchConfig
from coreason_arcfdr.search import GreedyParentSetLearner


class NoParents:
    def searched_children(self, data: Dataset) -> List[int]:
        return []

    def learn_parents(self, data: Dataset, node: int) -> Tuple[int, ...]:
        return ()


class NotALearner:
    def searched_children(self, data: Dataset) -> List[int]:
        return []


def test_protocol_is_structural() -> None:
    assert isinstance(NoParents(), ParentSetLearner)
    assert not isinstance(NotALearner(), ParentSetLearner)


def test_greedy_learner_satisfies_protocol() -> None:
    assert isinstance(GreedyParentSetLearner(SearchConfig(ordering=(0, 1))), ParentSetLearner)
