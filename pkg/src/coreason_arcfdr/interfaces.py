# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

from typing import List, Protocol, Tuple, runtime_checkable

from coreason_arcfdr.core import Dataset


@runtime_checkable
class ParentSetLearner(Protocol):
    """Protocol for a structure search that decomposes into per-node parent searches.

    The permutation FDR estimator is parameterised by such a learner: it re-runs the same
    per-node search on data where the child's column has been permuted.
    """

    def searched_children(self, data: Dataset) -> List[int]:
        """Returns the nodes whose parents the learner searches for.

        Args:
            data: The dataset the learner will be applied to.

        Returns:
            Node indices in ascending order. Other nodes always get an empty parent set.
        """
        ...

    def learn_parents(self, data: Dataset, node: int) -> Tuple[int, ...]:
        """Learns the parent set of one node.

        Args:
            data: The dataset (possibly with `node`'s column permuted).
            node: The child node.

        Returns:
            The learned parents, sorted ascending.
        """
        ...
