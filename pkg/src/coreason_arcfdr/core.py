# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Domain data model: datasets, orderings, DAGs and arc sets.

Variables are identified by integer indices; names are metadata. A variable ordering is a
permutation of the indices where position means precedence. Every structure in the package
respects a fixed, known ordering.
"""

from typing import Any, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from coreason_arcfdr.exceptions import DatasetValidationError, StructureError

Arc = Tuple[int, int]
"""A directed arc as (parent, child)."""


def ordering_violations(ordering: Sequence[int], n_vars: int) -> List[str]:
    """Lists the reasons `ordering` is not a permutation of range(n_vars)."""
    problems: List[str] = []
    if len(ordering) != n_vars:
        problems.append(f"ordering has {len(ordering)} entries for {n_vars} variables")
    if sorted(int(i) for i in ordering) != list(range(len(ordering))):
        problems.append(f"ordering {list(ordering)} is not a permutation of 0..{len(ordering) - 1}")
    return problems


def positions(ordering: Sequence[int]) -> List[int]:
    """Returns `pos` with pos[node] = position of node in `ordering`."""
    pos = [0] * len(ordering)
    for position, node in enumerate(ordering):
        pos[node] = position
    return pos


def _dataset_violations(
    values: np.ndarray, arities: Sequence[int], names: Sequence[str], ordering: Sequence[int]
) -> List[str]:
    problems: List[str] = []
    if values.ndim != 2:
        return [f"values must be a 2-D table, got {values.ndim} dimension(s)"]
    n_rows, n_vars = values.shape
    if n_rows < 1:
        problems.append("dataset has no rows")
    if n_vars < 1:
        problems.append("dataset has no variables")
    if len(arities) != n_vars:
        problems.append(f"{len(arities)} arities given for {n_vars} columns")
    if len(names) != n_vars:
        problems.append(f"{len(names)} names given for {n_vars} columns")
    if len(set(names)) != len(names):
        problems.append("variable names are not unique")
    for column, arity in enumerate(arities):
        if arity < 2:
            problems.append(f"column {column} has arity {arity} < 2")
            continue
        if column >= n_vars:
            continue
        bad_rows = np.flatnonzero((values[:, column] < 0) | (values[:, column] >= arity))
        for row in bad_rows:
            problems.append(f"row {int(row)}, column {column}: value {int(values[row, column])} not in [0, {arity})")
    problems.extend(ordering_violations(ordering, n_vars))
    return problems


class Dataset(BaseModel):
    """An n x N table of category indices with arities, names and a variable ordering.

    Row k is observation k, column i is variable i. The table is stored read-only.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    arities: Tuple[int, ...]
    names: Tuple[str, ...]
    ordering: Tuple[int, ...]

    @field_validator("values", mode="before")
    @classmethod
    def _as_readonly_int_table(cls, v: Any) -> np.ndarray:
        table = np.array(v, dtype=np.int64, copy=True)
        table.setflags(write=False)
        return table

    @model_validator(mode="after")
    def _check_invariants(self) -> "Dataset":
        problems = _dataset_violations(self.values, self.arities, self.names, self.ordering)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_vars(self) -> int:
        return int(self.values.shape[1])

    def column(self, i: int) -> np.ndarray:
        """Returns the (read-only) column of variable `i`."""
        return self.values[:, i]

    def with_column(self, i: int, column: np.ndarray) -> "Dataset":
        """Returns a copy of the dataset whose column `i` is replaced by `column`."""
        table = self.values.copy()
        table[:, i] = column
        return Dataset(values=table, arities=self.arities, names=self.names, ordering=self.ordering)

    def with_ordering(self, ordering: Sequence[int]) -> "Dataset":
        """Returns the same table under a different variable ordering."""
        return Dataset(values=self.values, arities=self.arities, names=self.names, ordering=tuple(ordering))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.arities == other.arities
            and self.names == other.names
            and self.ordering == other.ordering
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.values.shape, self.values.tobytes(), self.arities, self.names, self.ordering))


class ArcSet(BaseModel):
    """The set of arc hypotheses of a structure, as (parent, child) pairs."""

    model_config = ConfigDict(frozen=True)

    arcs: FrozenSet[Arc]

    def __len__(self) -> int:
        return len(self.arcs)

    def __contains__(self, arc: object) -> bool:
        return arc in self.arcs

    def __and__(self, other: "ArcSet") -> "ArcSet":
        return ArcSet(arcs=self.arcs & other.arcs)

    def sorted(self) -> List[Arc]:
        """Returns the arcs sorted by (child, parent)."""
        return sorted(self.arcs, key=lambda arc: (arc[1], arc[0]))


class Dag(BaseModel):
    """A structure given as per-node parent sets consistent with a variable ordering.

    Parent tuples are normalised to ascending index order.
    """

    model_config = ConfigDict(frozen=True)

    parents: Tuple[Tuple[int, ...], ...]
    ordering: Tuple[int, ...]

    @field_validator("parents", mode="after")
    @classmethod
    def _sorted_unique_parents(cls, v: Tuple[Tuple[int, ...], ...]) -> Tuple[Tuple[int, ...], ...]:
        for child, family in enumerate(v):
            if len(set(family)) != len(family):
                raise ValueError(f"node {child} has duplicate parents {list(family)}")
        return tuple(tuple(sorted(family)) for family in v)

    @model_validator(mode="after")
    def _parents_precede_children(self) -> "Dag":
        n = len(self.parents)
        problems = ordering_violations(self.ordering, n)
        if problems:
            raise ValueError("; ".join(problems))
        pos = positions(self.ordering)
        for child, family in enumerate(self.parents):
            for parent in family:
                if not 0 <= parent < n:
                    raise ValueError(f"node {child} has out-of-range parent {parent}")
                if pos[parent] >= pos[child]:
                    raise ValueError(f"parent {parent} does not precede child {child} in the ordering")
        return self

    @classmethod
    def empty(cls, n_nodes: int, ordering: Optional[Sequence[int]] = None) -> "Dag":
        """Returns the arc-free structure over `n_nodes` nodes."""
        order = tuple(ordering) if ordering is not None else tuple(range(n_nodes))
        return cls(parents=tuple(() for _ in range(n_nodes)), ordering=order)

    @classmethod
    def from_arcs(cls, n_nodes: int, arcs: Iterable[Arc], ordering: Optional[Sequence[int]] = None) -> "Dag":
        """Builds a structure from (parent, child) pairs."""
        families: List[List[int]] = [[] for _ in range(n_nodes)]
        for parent, child in set(arcs):
            if not 0 <= child < n_nodes:
                raise StructureError(f"arc ({parent}, {child}) has out-of-range child")
            families[child].append(parent)
        order = tuple(ordering) if ordering is not None else tuple(range(n_nodes))
        try:
            return cls(parents=tuple(tuple(f) for f in families), ordering=order)
        except ValueError as e:
            raise StructureError(str(e)) from e

    @property
    def n_nodes(self) -> int:
        return len(self.parents)

    @property
    def arcs(self) -> ArcSet:
        return ArcSet(arcs=frozenset((p, c) for c, family in enumerate(self.parents) for p in family))

    @property
    def arc_count(self) -> int:
        """M, the total number of arcs."""
        return sum(len(family) for family in self.parents)

    def is_acyclic(self) -> bool:
        """Checks acyclicity directly from the parent sets, ignoring the ordering."""
        indegree = [len(family) for family in self.parents]
        children: List[List[int]] = [[] for _ in self.parents]
        for child, family in enumerate(self.parents):
            for parent in family:
                children[parent].append(child)
        ready = [node for node, d in enumerate(indegree) if d == 0]
        visited = 0
        while ready:
            node = ready.pop()
            visited += 1
            for child in children[node]:
                indegree[child] -= 1
                if indegree[child] == 0:
                    ready.append(child)
        return visited == self.n_nodes


def validate_dataset(
    values: Any,
    arities: Sequence[int],
    ordering: Optional[Sequence[int]] = None,
    names: Optional[Sequence[str]] = None,
) -> Dataset:
    """Validates a raw table and returns a Dataset.

    Args:
        values: n x N array-like of category indices.
        arities: Per-variable category counts.
        ordering: Variable ordering; defaults to column order.
        names: Variable names; defaults to "X0", "X1", ...

    Returns:
        A Dataset satisfying all invariants.

    Raises:
        DatasetValidationError: Listing every violation found.
    """
    table = np.asarray(values)
    if table.dtype.kind == "f":
        if not np.all(np.mod(table, 1) == 0):
            raise DatasetValidationError(["values must be integer category indices"])
    elif table.dtype.kind not in "iub":
        raise DatasetValidationError([f"values must be integer category indices, got dtype {table.dtype}"])
    table = table.astype(np.int64)
    n_vars = table.shape[1] if table.ndim == 2 else 0
    order = tuple(int(i) for i in ordering) if ordering is not None else tuple(range(n_vars))
    labels = tuple(names) if names is not None else tuple(f"X{i}" for i in range(n_vars))
    arity_tuple = tuple(int(a) for a in arities)

    problems = _dataset_violations(table, arity_tuple, labels, order)
    if problems:
        raise DatasetValidationError(problems)
    return Dataset(values=table, arities=arity_tuple, names=labels, ordering=order)


def candidate_parents(node: int, ordering: Sequence[int]) -> List[int]:
    """Returns the nodes preceding `node` in `ordering`, in ordering order."""
    position = list(ordering).index(node)
    return [int(i) for i in ordering[:position]]


def arc_overlap(g: Dag, g_ref: Dag) -> int:
    """Counts the arcs present in both structures.

    Raises:
        StructureError: If the structures have different node counts.
    """
    if g.n_nodes != g_ref.n_nodes:
        raise StructureError(f"node count mismatch: {g.n_nodes} vs {g_ref.n_nodes}")
    return len(g.arcs & g_ref.arcs)


def check_same_ordering(data: Dataset, ordering: Sequence[int]) -> None:
    """Ensures a structure or configuration uses the dataset's ordering.

    Raises:
        StructureError: On any mismatch; orderings are never reconciled silently.
    """
    if tuple(ordering) != data.ordering:
        raise StructureError(f"ordering mismatch: dataset uses {list(data.ordering)}, got {list(ordering)}")
