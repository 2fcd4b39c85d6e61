# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Greedy structure search under a known variable ordering.

With the ordering fixed, the search decomposes into one independent parent-set search per
node. Each starts from the empty set and applies the strictly best single-parent addition
or deletion until no move improves the family score.
"""

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict

from coreason_arcfdr.core import Dag, Dataset, candidate_parents, check_same_ordering
from coreason_arcfdr.exceptions import StructureError
from coreason_arcfdr.models import FamilyScore, SearchConfig
from coreason_arcfdr.scoring import FamilyScorer
from coreason_arcfdr.utils.concurrency import map_nodes, map_nodes_async
from coreason_arcfdr.utils.logger import logger


class ParentSetResult(BaseModel):
    """Outcome of one per-node greedy search."""

    model_config = ConfigDict(frozen=True)

    node: int
    parent_set: Tuple[int, ...]
    score: FamilyScore
    trace: Tuple[float, ...]  # family score after each accepted move, starting from the empty set
    moves: Tuple[str, ...]  # "+p" for an addition, "-p" for a deletion


class LearnedStructure(BaseModel):
    """A learned structure with the final family score of every searched node."""

    model_config = ConfigDict(frozen=True)

    dag: Dag
    family_scores: Dict[int, FamilyScore]


def searched_children(data: Dataset, config: SearchConfig) -> List[int]:
    """Nodes whose parents are searched, ascending."""
    if config.allowed_children is None:
        return list(range(data.n_vars))
    return sorted(config.allowed_children)


def search_candidates(node: int, config: SearchConfig) -> List[int]:
    """Candidate parents of `node`: its predecessors, narrowed by `allowed_parents` if given.

    A node without an `allowed_parents` entry keeps all of its predecessors.
    """
    candidates = candidate_parents(node, config.ordering)
    if config.allowed_parents is not None and node in config.allowed_parents:
        allowed = set(config.allowed_parents[node])
        candidates = [p for p in candidates if p in allowed]
    return sorted(candidates)


def learn_parent_set(
    data: Dataset, node: int, config: SearchConfig, scorer: Optional[FamilyScorer] = None
) -> ParentSetResult:
    """Greedy single-arc addition/deletion search for the parents of one node.

    Among equally scoring moves a deletion is preferred over an addition, then the lowest
    parent index. A move is accepted only if it strictly increases the family score.

    Raises:
        StructureError: If the orderings differ or `node` is not a searched child.
    """
    check_same_ordering(data, config.ordering)
    if not 0 <= node < data.n_vars:
        raise StructureError(f"node {node} out of range for {data.n_vars} variables")
    if config.allowed_children is not None and node not in config.allowed_children:
        raise StructureError(f"node {node} is not among the searched children")

    scorer = scorer if scorer is not None else FamilyScorer(data, config.score)
    candidates = search_candidates(node, config)
    cap = config.effective_max_parents

    current = scorer.score(node, ())
    trace = [current.log_score]
    moves: List[str] = []
    while True:
        best: Optional[Tuple[FamilyScore, str]] = None
        for parent in current.parent_set:
            reduced = tuple(p for p in current.parent_set if p != parent)
            scored = scorer.score(node, reduced)
            if best is None or scored.log_score > best[0].log_score:
                best = (scored, f"-{parent}")
        if cap is None or len(current.parent_set) < cap:
            for parent in candidates:
                if parent in current.parent_set:
                    continue
                scored = scorer.score(node, (*current.parent_set, parent))
                if best is None or scored.log_score > best[0].log_score:
                    best = (scored, f"+{parent}")
        if best is None or best[0].log_score <= current.log_score:
            break
        current = best[0]
        trace.append(current.log_score)
        moves.append(best[1])

    logger.debug(f"Node {node}: parents {list(current.parent_set)} after moves {moves}")
    return ParentSetResult(
        node=node, parent_set=current.parent_set, score=current, trace=tuple(trace), moves=tuple(moves)
    )


def _assemble(data: Dataset, config: SearchConfig, results: List[ParentSetResult]) -> LearnedStructure:
    parents: List[Tuple[int, ...]] = [() for _ in range(data.n_vars)]
    scores: Dict[int, FamilyScore] = {}
    for result in results:
        parents[result.node] = result.parent_set
        scores[result.node] = result.score
    dag = Dag(parents=tuple(parents), ordering=config.ordering)
    logger.info(f"Learned structure with {dag.arc_count} arcs over {data.n_vars} nodes (kappa={config.score.kappa})")
    return LearnedStructure(dag=dag, family_scores=scores)


def learn_structure(data: Dataset, config: SearchConfig, workers: Optional[int] = None) -> LearnedStructure:
    """Learns every searched node's parents independently and assembles the structure.

    The result does not depend on the order or concurrency with which nodes are processed.
    """
    check_same_ordering(data, config.ordering)
    scorer = FamilyScorer(data, config.score)
    results = map_nodes(
        lambda node: learn_parent_set(data, node, config, scorer), searched_children(data, config), workers
    )
    return _assemble(data, config, results)


async def learn_structure_async(data: Dataset, config: SearchConfig, workers: int = 1) -> LearnedStructure:
    """Async variant of `learn_structure` for callers already inside an event loop."""
    check_same_ordering(data, config.ordering)
    scorer = FamilyScorer(data, config.score)
    results = await map_nodes_async(
        lambda node: learn_parent_set(data, node, config, scorer), searched_children(data, config), workers
    )
    return _assemble(data, config, results)


class GreedyParentSetLearner:
    """The greedy search as a `ParentSetLearner` for the permutation FDR estimator."""

    def __init__(self, config: SearchConfig) -> None:
        self.config = config

    def searched_children(self, data: Dataset) -> List[int]:
        return searched_children(data, self.config)

    def learn_parents(self, data: Dataset, node: int) -> Tuple[int, ...]:
        return learn_parent_set(data, node, self.config).parent_set
