# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Ground-truth models and synthetic data generation.

Two kinds of generating model are supported: CPT networks sampled ancestrally (the bundled
Alarm network among them) and bipartite noisy-OR networks in which each patient carries
three to six distinct HLA alleles and each peptide reacts through a noisy-OR of them.
"""

import math
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from coreason_arcfdr.core import Dag, Dataset, validate_dataset
from coreason_arcfdr.exceptions import NetworkSpecError, StructureError
from coreason_arcfdr.fdr import DEFAULT_Q, fdr_sweep
from coreason_arcfdr.models import NoisyOrParams, ScoreConfig, ScoreFamily, SearchConfig
from coreason_arcfdr.noisyor import fit_noisyor_ml
from coreason_arcfdr.search import learn_structure
from coreason_arcfdr.utils.logger import logger

CPT_SUM_TOL = 1e-12

HLA_COUNT = 70
PEPTIDE_COUNT = 140
PATIENT_COUNT = 102
MIN_ALLELES = 3
MAX_ALLELES = 6

TARGET_FDR = 0.3
DEFAULT_STANDIN_KAPPA = 0.1
STANDIN_KAPPA_GRID = (0.001, 0.01, 0.1, 1.0)

ALARM_RESOURCE = "alarm.net"


class CptNetwork(BaseModel):
    """A discrete Bayesian network with one conditional probability table per node.

    `cpts[i]` has shape (q_i, r_i): row j is the distribution of node i under parent
    configuration j (mixed-radix over the sorted parents, last parent fastest).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dag: Dag
    arities: Tuple[int, ...]
    names: Tuple[str, ...]
    cpts: Tuple[np.ndarray, ...]

    @field_validator("cpts", mode="before")
    @classmethod
    def _as_readonly_tables(cls, v: Sequence[np.ndarray]) -> Tuple[np.ndarray, ...]:
        tables = []
        for table in v:
            array = np.array(table, dtype=np.float64, copy=True)
            array.setflags(write=False)
            tables.append(array)
        return tuple(tables)

    @model_validator(mode="after")
    def _check_tables(self) -> "CptNetwork":
        problems = cpt_violations(self.dag, self.arities, self.names, self.cpts)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def n_nodes(self) -> int:
        return len(self.arities)

    def index_of(self, name: str) -> int:
        return self.names.index(name)


def cpt_violations(
    dag: Dag, arities: Sequence[int], names: Sequence[str], cpts: Sequence[np.ndarray]
) -> List[str]:
    """Lists shape, range and normalisation problems of a set of CPTs."""
    n = dag.n_nodes
    if len(arities) != n or len(names) != n or len(cpts) != n:
        return [f"{n} nodes but {len(arities)} arities, {len(names)} names and {len(cpts)} tables"]
    problems: List[str] = []
    for node, table in enumerate(cpts):
        q = math.prod(arities[p] for p in dag.parents[node])
        if table.shape != (q, arities[node]):
            problems.append(f"node {names[node]}: table shape {table.shape}, expected {(q, arities[node])}")
            continue
        if np.any(table < 0.0) or np.any(table > 1.0):
            problems.append(f"node {names[node]}: probabilities outside [0, 1]")
        for config, total in enumerate(table.sum(axis=1)):
            if abs(total - 1.0) > CPT_SUM_TOL:
                problems.append(f"node {names[node]}, configuration {config}: row sums to {total:.12g}")
    return problems


class NoisyOrNetwork(BaseModel):
    """A bipartite HLA -> peptide noisy-OR network with its patient genotype model.

    Columns 0..hla_count-1 are HLA indicators, the following `peptide_count` columns are
    peptide reactions. `params[j]` describes peptide j; its link keys are HLA indices.
    """

    model_config = ConfigDict(frozen=True)

    hla_count: int = Field(..., ge=1)
    peptide_count: int = Field(..., ge=1)
    params: Tuple[NoisyOrParams, ...]
    allele_frequencies: Tuple[float, ...]
    min_alleles: int = Field(MIN_ALLELES, ge=1)
    max_alleles: int = Field(MAX_ALLELES, ge=1)

    @model_validator(mode="after")
    def _check_bipartite(self) -> "NoisyOrNetwork":
        if len(self.params) != self.peptide_count:
            raise ValueError(f"{len(self.params)} parameter sets for {self.peptide_count} peptides")
        if len(self.allele_frequencies) != self.hla_count:
            raise ValueError(f"{len(self.allele_frequencies)} allele frequencies for {self.hla_count} HLA types")
        freqs = np.asarray(self.allele_frequencies)
        if np.any(freqs < 0.0) or abs(freqs.sum() - 1.0) > 1e-9:
            raise ValueError("allele frequencies must be non-negative and sum to 1")
        if self.min_alleles > self.max_alleles:
            raise ValueError(f"min_alleles {self.min_alleles} exceeds max_alleles {self.max_alleles}")
        if int(np.count_nonzero(freqs)) < self.max_alleles:
            raise ValueError(
                f"cannot draw {self.max_alleles} distinct alleles from {int(np.count_nonzero(freqs))} HLA types"
            )
        for peptide, p in enumerate(self.params):
            outside = [h for h in p.links if not 0 <= h < self.hla_count]
            if outside:
                raise ValueError(f"peptide {peptide} links to non-HLA nodes {sorted(outside)}")
        return self

    @property
    def n_nodes(self) -> int:
        return self.hla_count + self.peptide_count

    @property
    def ordering(self) -> Tuple[int, ...]:
        """HLA columns first, then peptide columns."""
        return tuple(range(self.n_nodes))

    @property
    def names(self) -> Tuple[str, ...]:
        hla = tuple(f"HLA{h}" for h in range(self.hla_count))
        return hla + tuple(f"PEP{j}" for j in range(self.peptide_count))

    @property
    def dag(self) -> Dag:
        """The generating structure: arcs from each linked HLA to its peptide."""
        parents: List[Tuple[int, ...]] = [()] * self.hla_count
        parents.extend(tuple(sorted(p.links)) for p in self.params)
        return Dag(parents=tuple(parents), ordering=self.ordering)


def sample_cpt_network(net: CptNetwork, n: int, rng: np.random.Generator) -> Dataset:
    """Forward-samples `n` rows, visiting nodes in the network's ordering."""
    if n < 1:
        raise ValueError(f"sample size must be at least 1, got {n}")
    values = np.zeros((n, net.n_nodes), dtype=np.int64)
    for node in net.dag.ordering:
        parents = net.dag.parents[node]
        if parents:
            dims = tuple(net.arities[p] for p in parents)
            config = np.ravel_multi_index(tuple(values[:, p] for p in parents), dims)
        else:
            config = np.zeros(n, dtype=np.int64)
        cumulative = np.cumsum(net.cpts[node], axis=1)[config]
        draws = rng.random(n)
        values[:, node] = np.minimum((draws[:, None] >= cumulative).sum(axis=1), net.arities[node] - 1)
    return validate_dataset(values, net.arities, net.dag.ordering, net.names)


def sample_genotypes(net: NoisyOrNetwork, patients: int, rng: np.random.Generator) -> np.ndarray:
    """Per patient, draws an allele count uniformly and that many distinct HLA types."""
    genotypes = np.zeros((patients, net.hla_count), dtype=np.int64)
    freqs = np.asarray(net.allele_frequencies)
    for row in range(patients):
        count = int(rng.integers(net.min_alleles, net.max_alleles + 1))
        genotypes[row, rng.choice(net.hla_count, size=count, replace=False, p=freqs)] = 1
    return genotypes


def sample_noisyor_network(net: NoisyOrNetwork, patients: int, rng: np.random.Generator) -> Dataset:
    """Samples genotypes, then each peptide's reaction from its noisy-OR."""
    if patients < 1:
        raise ValueError(f"patient count must be at least 1, got {patients}")
    genotypes = sample_genotypes(net, patients, rng)
    reactions = np.zeros((patients, net.peptide_count), dtype=np.int64)
    for peptide, params in enumerate(net.params):
        keep = np.full(patients, 1.0 - params.leak_q0)
        for hla, q in params.links.items():
            keep *= np.where(genotypes[:, hla] > 0, 1.0 - q, 1.0)
        reactions[:, peptide] = rng.random(patients) < 1.0 - keep
    values = np.hstack([genotypes, reactions])
    return validate_dataset(values, [2] * net.n_nodes, net.ordering, net.names)


def random_noisyor_network(
    rng: np.random.Generator,
    hla_count: int = HLA_COUNT,
    peptide_count: int = PEPTIDE_COUNT,
    mean_parents: float = 1.0,
    max_parents: int = 4,
    link_range: Tuple[float, float] = (0.3, 0.9),
    leak_range: Tuple[float, float] = (0.0, 0.1),
) -> NoisyOrNetwork:
    """A random bipartite network; parent counts are Poisson, truncated at `max_parents`."""
    params: List[NoisyOrParams] = []
    for _ in range(peptide_count):
        k = min(int(rng.poisson(mean_parents)), max_parents, hla_count)
        hlas = sorted(int(h) for h in rng.choice(hla_count, size=k, replace=False))
        links = {h: float(rng.uniform(*link_range)) for h in hlas}
        params.append(NoisyOrParams(leak_q0=float(rng.uniform(*leak_range)), links=links))
    return NoisyOrNetwork(
        hla_count=hla_count,
        peptide_count=peptide_count,
        params=tuple(params),
        allele_frequencies=tuple([1.0 / hla_count] * hla_count),
    )


def standin_score(kappa: float) -> ScoreConfig:
    return ScoreConfig(family=ScoreFamily.BIC_NOISYOR, kappa=kappa)


def bipartite_search_config(
    hla_count: int, peptide_count: int, score: ScoreConfig, max_parents: Optional[int] = None
) -> SearchConfig:
    """Searches only peptide parents, and only among the HLA columns."""
    hlas = tuple(range(hla_count))
    peptides = range(hla_count, hla_count + peptide_count)
    return SearchConfig(
        score=score,
        ordering=tuple(range(hla_count + peptide_count)),
        max_parents=max_parents,
        allowed_children=frozenset(peptides),
        allowed_parents={child: hlas for child in peptides},
    )


def build_hiv_standin_model(
    data: Dataset,
    config: SearchConfig,
    hla_count: int,
    allele_frequencies: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
) -> NoisyOrNetwork:
    """Learns a bipartite structure on `data` and fits ML noisy-OR parameters to it.

    Raises:
        StructureError: If the learned structure is not HLA -> peptide.
    """
    dag = learn_structure(data, config, workers=workers).dag
    peptide_count = data.n_vars - hla_count
    for child, parents in enumerate(dag.parents):
        if parents and (child < hla_count or max(parents) >= hla_count):
            raise StructureError(f"node {child} has parents {list(parents)}; the search config is not bipartite")
    params = tuple(
        fit_noisyor_ml(data, hla_count + j, dag.parents[hla_count + j], tol=config.score.noisyor_tol)
        for j in range(peptide_count)
    )
    freqs = tuple(allele_frequencies) if allele_frequencies is not None else tuple([1.0 / hla_count] * hla_count)
    net = NoisyOrNetwork(hla_count=hla_count, peptide_count=peptide_count, params=params, allele_frequencies=freqs)
    logger.info(f"Built noisy-OR stand-in: {hla_count} HLA x {peptide_count} peptides, {dag.arc_count} arcs")
    return net


def select_kappa_for_target_fdr(
    data: Dataset,
    config: SearchConfig,
    kappa_grid: Sequence[float] = STANDIN_KAPPA_GRID,
    target: float = TARGET_FDR,
    q_permutations: int = DEFAULT_Q,
    seed: int = 0,
    workers: Optional[int] = None,
) -> float:
    """Returns the kappa whose clamped FDR estimate is closest to `target` (first on ties).

    Raises:
        ValueError: If no grid point produced a defined estimate.
    """
    best: Optional[Tuple[float, float]] = None
    for point in fdr_sweep(data, config, kappa_grid, q_permutations, seed, workers):
        if point.estimate is None or point.estimate.fdr_clamped is None:
            continue
        gap = abs(point.estimate.fdr_clamped - target)
        if best is None or gap < best[1]:
            best = (point.kappa, gap)
    if best is None:
        raise ValueError(f"no kappa in {list(kappa_grid)} yielded an FDR estimate")
    logger.info(f"Selected kappa={best[0]} (|FDR - {target}| = {best[1]:.3f})")
    return best[0]


def default_hiv_standin(
    seed: int = 0,
    kappa: Optional[float] = DEFAULT_STANDIN_KAPPA,
    workers: Optional[int] = None,
) -> NoisyOrNetwork:
    """The synthetic HIV stand-in: 70 HLA x 140 peptides learned from 102 sampled patients.

    A random source network provides the "real" data; the stand-in is the structure the
    greedy BIC noisy-OR search learns from it, with ML parameters. With `kappa=None` the
    structure prior is chosen so that the estimated FDR is closest to 0.3.
    """
    source = random_noisyor_network(np.random.default_rng([seed, 0]))
    data = sample_noisyor_network(source, PATIENT_COUNT, np.random.default_rng([seed, 1]))
    if kappa is None:
        trial = bipartite_search_config(HLA_COUNT, PEPTIDE_COUNT, standin_score(DEFAULT_STANDIN_KAPPA))
        kappa = select_kappa_for_target_fdr(data, trial, seed=seed, workers=workers)
    config = bipartite_search_config(HLA_COUNT, PEPTIDE_COUNT, standin_score(kappa))
    return build_hiv_standin_model(data, config, HLA_COUNT, source.allele_frequencies, workers=workers)


def _config_count(arities: Sequence[int], parents: Sequence[int]) -> int:
    return math.prod(arities[p] for p in parents)


def parse_network_spec(text: str) -> CptNetwork:
    """Parses the line-oriented network-spec format.

    Raises:
        NetworkSpecError: Listing every parse problem (with line numbers) and invariant violation.
    """
    problems: List[Tuple[Optional[int], str]] = []
    index: Dict[str, int] = {}
    arities: List[int] = []
    parent_names: Dict[int, List[str]] = {}
    rows: Dict[Tuple[int, int], List[float]] = {}
    order_names: Optional[List[str]] = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, *args = line.split()
        if keyword == "node":
            if len(args) != 2:
                problems.append((line_no, "expected: node <name> <arity>"))
            elif args[0] in index:
                problems.append((line_no, f"node {args[0]} declared twice"))
            elif not args[1].isdigit() or int(args[1]) < 2:
                problems.append((line_no, f"node {args[0]}: arity must be an integer >= 2, got {args[1]}"))
            else:
                index[args[0]] = len(arities)
                arities.append(int(args[1]))
        elif keyword in ("parents", "cpt"):
            if not args or args[0] not in index:
                problems.append((line_no, f"{keyword} line refers to an undeclared node"))
                continue
            node = index[args[0]]
            if keyword == "parents":
                unknown = [p for p in args[1:] if p not in index]
                if unknown:
                    problems.append((line_no, f"node {args[0]}: unknown parents {unknown}"))
                elif node in parent_names:
                    problems.append((line_no, f"node {args[0]}: parents given twice"))
                else:
                    parent_names[node] = args[1:]
                continue
            try:
                config = int(args[1])
                probs = [float(p) for p in args[2:]]
            except (IndexError, ValueError):
                problems.append((line_no, "expected: cpt <name> <config index> <p0 p1 ...>"))
                continue
            if (node, config) in rows:
                problems.append((line_no, f"node {args[0]}, configuration {config}: row given twice"))
            elif len(probs) != arities[node]:
                problems.append((line_no, f"node {args[0]}: {len(probs)} probabilities for arity {arities[node]}"))
            else:
                rows[(node, config)] = probs
        elif keyword == "order":
            unknown = [name for name in args if name not in index]
            if unknown:
                problems.append((line_no, f"order names undeclared nodes {unknown}"))
            else:
                order_names = args
        else:
            problems.append((line_no, f"unknown keyword {keyword!r}"))

    if problems:
        raise NetworkSpecError(problems)

    names = sorted(index, key=index.__getitem__)
    ordering = [index[name] for name in order_names] if order_names is not None else list(range(len(names)))
    if sorted(ordering) != list(range(len(names))):
        raise NetworkSpecError([(None, "order line must list every node exactly once")])
    parents = [tuple(sorted(index[p] for p in parent_names.get(node, []))) for node in range(len(names))]
    try:
        dag = Dag(parents=tuple(parents), ordering=tuple(ordering))
    except (StructureError, ValueError) as e:
        raise NetworkSpecError([(None, str(e))]) from e

    cpts: List[np.ndarray] = []
    for node, name in enumerate(names):
        q = _config_count(arities, parents[node])
        table = np.zeros((q, arities[node]))
        for config in range(q):
            if (node, config) not in rows:
                problems.append((None, f"node {name}, configuration {config}: missing cpt row"))
                continue
            table[config] = rows[(node, config)]
        extra = [config for (n, config) in rows if n == node and not 0 <= config < q]
        problems.extend((None, f"node {name}: configuration {config} out of range [0, {q})") for config in extra)
        cpts.append(table)
    if not problems:
        problems.extend((None, msg) for msg in cpt_violations(dag, arities, names, cpts))
    if problems:
        raise NetworkSpecError(problems)
    return CptNetwork(dag=dag, arities=tuple(arities), names=tuple(names), cpts=tuple(cpts))


def format_network_spec(net: CptNetwork) -> str:
    """Renders a network in the spec format; parse_network_spec reads it back unchanged."""
    lines = [f"node {name} {arity}" for name, arity in zip(net.names, net.arities, strict=True)]
    for node, parents in enumerate(net.dag.parents):
        if parents:
            lines.append(f"parents {net.names[node]} " + " ".join(net.names[p] for p in parents))
    lines.append("order " + " ".join(net.names[i] for i in net.dag.ordering))
    for node, table in enumerate(net.cpts):
        for config, row in enumerate(table):
            lines.append(f"cpt {net.names[node]} {config} " + " ".join(repr(float(p)) for p in row))
    return "\n".join(lines) + "\n"


def load_network_spec(path: Union[str, Path]) -> CptNetwork:
    """Reads and validates a network-spec file."""
    text = Path(path).read_text(encoding="utf-8")
    net = parse_network_spec(text)
    logger.info(f"Loaded network {path}: {net.n_nodes} nodes, {net.dag.arc_count} arcs")
    return net


def load_alarm() -> CptNetwork:
    """The bundled 37-node, 46-arc Alarm network."""
    text = resources.files("coreason_arcfdr").joinpath("data", ALARM_RESOURCE).read_text(encoding="utf-8")
    return parse_network_spec(text)
