# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Text file formats: dataset CSV, model files, experiment specs and output headers.

All formats are line-oriented; lines starting with "#" are comments. Parse errors name the
line (or the offending keys) so the input can be fixed without guesswork.
"""

import csv
import shlex
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from coreason_arcfdr.core import Dag, Dataset, validate_dataset
from coreason_arcfdr.exceptions import DatasetValidationError, FormatError, StructureError
from coreason_arcfdr.models import ExperimentSpec
from coreason_arcfdr.utils.logger import logger

PathLike = Union[str, Path]

CATEGORIES_DIRECTIVE = "categories"
LIST_KEYS = frozenset({"methods", "sample_sizes", "kappa_grid", "thresholds", "bayes_kappas", "bayes_ess_grid"})


class LabelledDataset(BaseModel):
    """A dataset with the category labels of each column (index i is label labels[col][i])."""

    model_config = ConfigDict(frozen=True)

    data: Dataset
    labels: Tuple[Tuple[str, ...], ...]


class ModelFile(BaseModel):
    """Contents of a model file."""

    model_config = ConfigDict(frozen=True)

    dag: Dag
    names: Tuple[str, ...]
    family_scores: Dict[int, float]


def _label_order(labels: Sequence[str]) -> List[str]:
    """Sorted category labels; numerically when every label is an integer."""
    unique = set(labels)
    try:
        return sorted(unique, key=int)
    except ValueError:
        return sorted(unique)


def output_header(config: BaseModel, seed: int) -> str:
    """Header recording the package version, the full configuration and the seed."""
    from coreason_arcfdr import __version__

    return f"coreason-arcfdr {__version__}\nconfig: {config.model_dump_json()}\nseed: {seed}"


def _write_header(f: TextIO, header: Optional[str]) -> None:
    if header:
        for line in header.splitlines():
            f.write(f"# {line}\n")


def read_dataset_csv(path: PathLike, ordering: Optional[Sequence[str]] = None) -> LabelledDataset:
    """Reads a CSV of category labels whose first non-comment row holds the variable names.

    A comment line `# categories <name> <label> ...` declares the full label set of a column
    (including labels that never occur); its fields follow shell quoting, so a name or label
    containing spaces is written in quotes. Other columns use their observed labels, with a
    second unobserved category added to constant columns.

    Args:
        path: The CSV file.
        ordering: Variable names in ordering order; defaults to column order.

    Raises:
        FormatError: On ragged rows, missing values, undeclared labels or unknown names.
    """
    declared: Dict[str, List[str]] = {}
    header: Optional[List[str]] = None
    rows: List[Tuple[int, List[str]]] = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.split(maxsplit=1)[:1] != [CATEGORIES_DIRECTIVE]:
                continue
            try:
                words = shlex.split(body)
            except ValueError as e:
                raise FormatError(f"line {line_no}: bad {CATEGORIES_DIRECTIVE} line: {e}") from e
            if len(words) < 2:
                raise FormatError(f"line {line_no}: {CATEGORIES_DIRECTIVE} line without a variable name")
            declared[words[1]] = words[2:]
            continue
        cells = [cell.strip() for cell in next(csv.reader([line]))]
        if header is None:
            header = cells
            if len(set(header)) != len(header):
                raise FormatError(f"line {line_no}: duplicate variable names")
            continue
        if len(cells) != len(header):
            raise FormatError(f"line {line_no}: {len(cells)} fields, expected {len(header)}")
        missing = [header[i] for i, cell in enumerate(cells) if not cell]
        if missing:
            raise FormatError(f"line {line_no}: missing values for {missing}")
        rows.append((line_no, cells))
    if header is None:
        raise FormatError(f"{path}: no header row")
    if not rows:
        raise FormatError(f"{path}: no data rows")
    unknown = sorted(set(declared) - set(header))
    if unknown:
        raise FormatError(f"{path}: categories declared for unknown variables {unknown}")

    labels: List[Tuple[str, ...]] = []
    columns = np.zeros((len(rows), len(header)), dtype=np.int64)
    for col, name in enumerate(header):
        if name in declared:
            order = declared[name]
        else:
            order = _label_order([cells[col] for _, cells in rows])
            if len(order) == 1:
                order.append(f"{order[0]}~unobserved")
        index = {label: i for i, label in enumerate(order)}
        for row, (line_no, cells) in enumerate(rows):
            if cells[col] not in index:
                raise FormatError(f"line {line_no}, column {name}: label {cells[col]!r} not in {order}")
            columns[row, col] = index[cells[col]]
        labels.append(tuple(order))

    names = {name: i for i, name in enumerate(header)}
    if ordering is not None:
        missing_names = [name for name in ordering if name not in names]
        if missing_names:
            raise FormatError(f"ordering names unknown variables {missing_names}")
        order_idx: Optional[List[int]] = [names[name] for name in ordering]
    else:
        order_idx = None
    try:
        data = validate_dataset(columns, [len(label_set) for label_set in labels], order_idx, header)
    except DatasetValidationError as e:
        raise FormatError(str(e)) from e
    logger.info(f"Read dataset {path}: {data.n_rows} rows x {data.n_vars} variables")
    return LabelledDataset(data=data, labels=tuple(labels))


def write_dataset_csv(
    data: Dataset,
    path: PathLike,
    labels: Optional[Sequence[Sequence[str]]] = None,
    header: Optional[str] = None,
) -> None:
    """Writes a dataset with its category declarations; labels default to the indices."""
    names = list(data.names)
    if labels is not None:
        label_sets = [list(label_set) for label_set in labels]
    else:
        label_sets = [[str(i) for i in range(arity)] for arity in data.arities]
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        _write_header(f, header)
        for name, label_set in zip(names, label_sets, strict=True):
            f.write(f"# {CATEGORIES_DIRECTIVE} {shlex.join([name, *label_set])}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(names)
        for row in data.values:
            writer.writerow([label_sets[col][int(v)] for col, v in enumerate(row)])


def write_model_file(
    dag: Dag,
    names: Sequence[str],
    path: PathLike,
    family_scores: Optional[Dict[int, float]] = None,
    header: Optional[str] = None,
) -> None:
    """Writes a structure as `node`, `order`, `arc` and optional `score` lines."""
    if len(names) != dag.n_nodes:
        raise StructureError(f"{len(names)} names for {dag.n_nodes} nodes")
    with Path(path).open("w", encoding="utf-8") as f:
        _write_header(f, header)
        for i, name in enumerate(names):
            f.write(f"node {i} {name}\n")
        f.write("order " + " ".join(str(i) for i in dag.ordering) + "\n")
        for parent, child in dag.arcs.sorted():
            f.write(f"arc {parent} {child}\n")
        for node, value in sorted((family_scores or {}).items()):
            f.write(f"score {node} {value!r}\n")


def read_model_file(path: PathLike) -> ModelFile:
    """Reads a model file back into the structure, node names and family scores.

    Raises:
        FormatError: On unknown keywords, bad fields or a structure violating the ordering.
    """
    names: Dict[int, str] = {}
    ordering: Optional[List[int]] = None
    arcs: List[Tuple[int, int]] = []
    scores: Dict[int, float] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, *args = line.split()
        try:
            if keyword == "node" and len(args) >= 2:
                # the name is the rest of the line and may contain spaces
                _, index, name = line.split(maxsplit=2)
                names[int(index)] = name
            elif keyword == "order":
                ordering = [int(a) for a in args]
            elif keyword == "arc" and len(args) == 2:
                arcs.append((int(args[0]), int(args[1])))
            elif keyword == "score" and len(args) == 2:
                scores[int(args[0])] = float(args[1])
            else:
                raise FormatError(f"line {line_no}: cannot parse {line!r}")
        except ValueError as e:
            raise FormatError(f"line {line_no}: cannot parse {line!r}") from e
    if sorted(names) != list(range(len(names))):
        raise FormatError(f"{path}: node indices must be 0..{len(names) - 1}")
    try:
        dag = Dag.from_arcs(len(names), arcs, ordering)
    except (StructureError, ValidationError) as e:
        raise FormatError(f"{path}: {e}") from e
    return ModelFile(dag=dag, names=tuple(names[i] for i in range(len(names))), family_scores=scores)


def read_experiment_spec(path: PathLike) -> ExperimentSpec:
    """Reads `key = value` lines; list-valued keys take comma-separated values.

    Raises:
        FormatError: Listing duplicate, unknown or invalid keys.
    """
    values: Dict[str, object] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise FormatError(f"line {line_no}: key {key!r} given twice")
        if key in LIST_KEYS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value if value else None
    try:
        return ExperimentSpec.model_validate(values)
    except ValidationError as e:
        offending = sorted({".".join(str(part) for part in err["loc"][:1]) for err in e.errors()})
        raise FormatError(f"{path}: invalid experiment spec keys {offending}: {e}") from e
