# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from coreason_arcfdr.core import Arc

DEFAULT_MAX_CONFIGURATIONS = 2**20
DEFAULT_CPT_MAX_PARENTS = 6


class ScoreFamily(str, Enum):
    """Enumeration of per-node scoring families."""

    BDEU_EXACT = "bdeu"
    BIC_CPT = "bic-cpt"
    BIC_NOISYOR = "bic-noisyor"


class Method(str, Enum):
    """Enumeration of arc-confidence estimators."""

    BAYES = "bayes"
    FDR = "fdr"


class ScoreConfig(BaseModel):
    """Scoring family and hyperparameters of a decomposable structure score."""

    model_config = ConfigDict(frozen=True)

    family: ScoreFamily = ScoreFamily.BDEU_EXACT
    kappa: float = Field(0.01, gt=0.0)  # structure prior p(G) ~ kappa^M
    ess: float = Field(4.0, gt=0.0)  # BDeu equivalent sample size alpha
    max_parents: Optional[int] = Field(None, ge=0)
    max_configurations: int = Field(DEFAULT_MAX_CONFIGURATIONS, ge=1)
    noisyor_tol: float = Field(1e-8, gt=0.0)


class FamilyScore(BaseModel):
    """Per-node contribution to a decomposable score, on the natural-log scale."""

    model_config = ConfigDict(frozen=True)

    node: int = Field(..., ge=0)
    parent_set: Tuple[int, ...]
    log_score: float

    @field_validator("parent_set", mode="after")
    @classmethod
    def _ascending(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if list(v) != sorted(set(v)):
            raise ValueError(f"parent_set must be sorted ascending without duplicates, got {list(v)}")
        return v


class SearchConfig(BaseModel):
    """Parameterisation of the greedy structure search (the search algorithm under study)."""

    model_config = ConfigDict(frozen=True)

    score: ScoreConfig = ScoreConfig()
    ordering: Tuple[int, ...]
    max_parents: Optional[int] = Field(None, ge=0)
    allowed_children: Optional[FrozenSet[int]] = None
    allowed_parents: Optional[Dict[int, Tuple[int, ...]]] = None

    @model_validator(mode="after")
    def _restrictions_follow_ordering(self) -> "SearchConfig":
        n = len(self.ordering)
        if sorted(self.ordering) != list(range(n)):
            raise ValueError(f"ordering {list(self.ordering)} is not a permutation")
        pos = {node: i for i, node in enumerate(self.ordering)}
        for child in self.allowed_children or ():
            if child not in pos:
                raise ValueError(f"allowed child {child} is not a node")
        for child, parents in (self.allowed_parents or {}).items():
            if child not in pos:
                raise ValueError(f"allowed_parents key {child} is not a node")
            for parent in parents:
                if parent not in pos or pos[parent] >= pos[child]:
                    raise ValueError(f"allowed parent {parent} of {child} does not precede it in the ordering")
        return self

    @property
    def effective_max_parents(self) -> Optional[int]:
        """Cap on parent-set size: explicit value, else the score's, else 6 for CPT families."""
        if self.max_parents is not None:
            return self.max_parents
        if self.score.max_parents is not None:
            return self.score.max_parents
        if self.score.family == ScoreFamily.BIC_NOISYOR:
            return None
        return DEFAULT_CPT_MAX_PARENTS

    def with_kappa(self, kappa: float) -> "SearchConfig":
        """Returns a copy with a different structure-prior strength."""
        return self.model_copy(update={"score": self.score.model_copy(update={"kappa": kappa})})


class NoisyOrParams(BaseModel):
    """Leak and link probabilities of one noisy-OR child."""

    model_config = ConfigDict(frozen=True)

    leak_q0: float = Field(..., ge=0.0, le=1.0)
    links: Dict[int, float] = Field(default_factory=dict)

    @field_validator("links", mode="after")
    @classmethod
    def _probabilities(cls, v: Dict[int, float]) -> Dict[int, float]:
        for parent, q in v.items():
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"link probability of parent {parent} is {q}, outside [0, 1]")
        return v


class ParentSetPosterior(BaseModel):
    """Posterior over all parent sets of one node up to a size limit.

    Parent sets are stored as rows of `subsets`, padded with -1, in enumeration order
    (by size, then lexicographic).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    node: int
    candidates: Tuple[int, ...]
    size_limit: int = Field(..., ge=0)
    subsets: np.ndarray
    log_scores: np.ndarray
    probabilities: np.ndarray

    @model_validator(mode="after")
    def _normalised(self) -> "ParentSetPosterior":
        rows = self.subsets.shape[0]
        if self.log_scores.shape != (rows,) or self.probabilities.shape != (rows,):
            raise ValueError("subsets, log_scores and probabilities must have matching lengths")
        total = float(self.probabilities.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"posterior of node {self.node} sums to {total!r}")
        return self

    def parent_set(self, row: int) -> Tuple[int, ...]:
        return tuple(int(p) for p in self.subsets[row] if p >= 0)

    @property
    def entries(self) -> List[Tuple[Tuple[int, ...], float, float]]:
        """(parent_set, log unnormalised score, posterior probability) triples."""
        return [
            (self.parent_set(row), float(self.log_scores[row]), float(self.probabilities[row]))
            for row in range(self.subsets.shape[0])
        ]

    def probability_of(self, parent_set: Tuple[int, ...]) -> float:
        """Posterior probability of one parent set (0 for sets beyond the size limit)."""
        target = tuple(sorted(parent_set))
        for row in range(self.subsets.shape[0]):
            if self.parent_set(row) == target:
                return float(self.probabilities[row])
        return 0.0


class BayesEstimate(BaseModel):
    """Bayesian expected number of true arcs in a given model."""

    model_config = ConfigDict(frozen=True)

    expected_true_arcs: float = Field(..., ge=0.0)
    per_arc_marginals: Dict[Arc, float]
    model_arc_count: int = Field(..., ge=0)
    expected_ppv: Optional[float] = None  # undefined for a model without arcs

    @model_validator(mode="after")
    def _consistent(self) -> "BayesEstimate":
        if self.expected_true_arcs > self.model_arc_count + 1e-9:
            raise ValueError("expected_true_arcs exceeds model_arc_count")
        if self.model_arc_count == 0 and self.expected_ppv is not None:
            raise ValueError("expected_ppv is undefined for a model without arcs")
        return self


class FdrEstimate(BaseModel):
    """Permutation-based False Discovery Rate estimate for one search configuration.

    When no arcs are learned on the real data the rate is undefined: `fdr_raw`,
    `fdr_clamped` and `expected_ppv` are None and `no_discoveries` is True.
    """

    model_config = ConfigDict(frozen=True)

    observed_arcs: int = Field(..., ge=0)
    null_counts: Tuple[int, ...]
    q_permutations: int = Field(..., ge=1)
    fdr_raw: Optional[float] = None
    fdr_clamped: Optional[float] = Field(None, ge=0.0, le=1.0)
    expected_ppv: Optional[float] = Field(None, ge=0.0, le=1.0)
    seed: int

    @model_validator(mode="after")
    def _consistent(self) -> "FdrEstimate":
        if len(self.null_counts) != self.q_permutations:
            raise ValueError(f"{len(self.null_counts)} null counts for Q = {self.q_permutations}")
        if self.observed_arcs == 0 and self.fdr_raw is not None:
            raise ValueError("FDR is undefined without discoveries")
        return self

    @property
    def no_discoveries(self) -> bool:
        return self.observed_arcs == 0


class CalibrationPoint(BaseModel):
    """One (expected, actual) PPV pair of a calibration experiment."""

    model_config = ConfigDict(frozen=True)

    method: Method
    family: ScoreFamily
    kappa: float
    alpha: Optional[float] = None
    n: int = Field(..., ge=1)
    replicate: int = Field(..., ge=0)
    model_arcs: Optional[int] = None
    expected_ppv: Optional[float] = Field(None, ge=0.0, le=1.0)
    actual_ppv: Optional[float] = Field(None, ge=0.0, le=1.0)
    fdr_raw: Optional[float] = None
    seed: int
    threshold: Optional[float] = None
    error: Optional[str] = None

    @property
    def sort_key(self) -> Tuple[str, int, float, float, int, float]:
        # thresholds are descending within a run; -inf sorts greedy-model points first
        alpha = self.alpha if self.alpha is not None else -1.0
        threshold = self.threshold if self.threshold is not None else float("inf")
        return (self.method.value, self.n, self.kappa, alpha, self.replicate, -threshold)


class CalibrationReport(BaseModel):
    """Summary of calibration points against the tolerance bands."""

    model_config = ConfigDict(frozen=True)

    method: Method
    points: int
    high_ppv_points: int
    max_high_ppv_error: Optional[float] = None
    standin_points: int = 0
    max_standin_error: Optional[float] = None
    low_ppv_mean_gap: Optional[float] = None
    mean_gap_above_half: Optional[float] = None
    truncation_change: Optional[float] = None
    failures: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


class RunConfig(BaseModel):
    """Everything a CLI run depends on; embedded in the header of every output file."""

    model_config = ConfigDict(frozen=True)

    command: str
    inputs: Tuple[str, ...] = ()
    seed: int = 0
    family: ScoreFamily = ScoreFamily.BDEU_EXACT
    kappa: float = Field(0.01, gt=0.0)
    ess: float = Field(4.0, gt=0.0)
    k: int = Field(5, ge=0)
    q: int = Field(10, ge=1)
    max_parents: Optional[int] = Field(None, ge=0)
    n: Optional[int] = Field(None, ge=1)
    output: Optional[str] = None
    kappa_grid: Tuple[float, ...] = ()


class ExperimentSpec(BaseModel):
    """A calibration experiment: truth model, grids, replicates and seeds."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    methods: Tuple[Method, ...] = (Method.FDR,)
    truth: str = "alarm"  # "alarm", "hiv-standin" or a network-spec path
    sample_sizes: Tuple[int, ...] = Field((1000,), min_length=1)
    kappa_grid: Tuple[float, ...] = Field((0.01,), min_length=1)
    family: ScoreFamily = ScoreFamily.BDEU_EXACT
    ess: float = Field(4.0, gt=0.0)
    replicates: int = Field(3, ge=1)
    q: int = Field(10, ge=1)
    seed: int = 0
    max_parents: Optional[int] = Field(None, ge=0)
    max_arcs: Optional[int] = Field(None, ge=1)
    bayes_kappas: Tuple[float, ...] = Field((0.1,), min_length=1)
    bayes_ess_grid: Tuple[float, ...] = Field((4.0,), min_length=1)
    size_limit: int = Field(5, ge=0)
    thresholds: Tuple[float, ...] = (0.9, 0.7, 0.5, 0.3, 0.1)

    @field_validator("sample_sizes", mode="after")
    @classmethod
    def _positive_sizes(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(n < 1 for n in v):
            raise ValueError("sample sizes must be positive")
        return v

    @field_validator("kappa_grid", mode="after")
    @classmethod
    def _positive_kappas(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(kappa <= 0.0 for kappa in v):
            raise ValueError("kappa values must be positive")
        return v

    @field_validator("bayes_kappas", "bayes_ess_grid", mode="after")
    @classmethod
    def _positive_hyperparameters(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(value <= 0.0 for value in v):
            raise ValueError("Bayesian kappa and ess values must be positive")
        return v

    @property
    def bayes_settings(self) -> Tuple[Tuple[float, float], ...]:
        """Every (kappa, ess) pair of the Bayesian grids, kappa-major."""
        return tuple((kappa, ess) for kappa in self.bayes_kappas for ess in self.bayes_ess_grid)
