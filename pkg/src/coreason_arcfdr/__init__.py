# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Coreason ArcFDR Package.

Confidence in the arcs of Bayesian network structures learned under a known variable
ordering: an exact Bayesian expected number of true arcs and a permutation-based False
Discovery Rate for the greedy search, with synthetic calibration experiments.
"""

__version__ = "0.1.0"
__author__ = "Gowtham A Rao"
__email__ = "gowtham.rao@coreason.ai"

from .bayes import expected_true_arcs, posterior_arc_marginals
from .core import Dag, Dataset, validate_dataset
from .fdr import estimate_fdr
from .models import ScoreConfig, ScoreFamily, SearchConfig
from .search import learn_structure

__all__ = [
    "Dag",
    "Dataset",
    "ScoreConfig",
    "ScoreFamily",
    "SearchConfig",
    "estimate_fdr",
    "expected_true_arcs",
    "learn_structure",
    "posterior_arc_marginals",
    "validate_dataset",
]
