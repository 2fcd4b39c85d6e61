# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Exception hierarchy shared by every module of the package."""

from typing import List, Optional, Tuple

import numpy as np


class ArcFdrError(Exception):
    """Base class for all errors raised by coreason-arcfdr."""


class StructureError(ArcFdrError, ValueError):
    """Raised when graphs, orderings or arc sets are structurally incompatible."""


class DatasetValidationError(ArcFdrError, ValueError):
    """Raised when a raw table cannot be turned into a Dataset.

    Attributes:
        violations: Every invariant violation found, one message each.
    """

    def __init__(self, violations: List[str]) -> None:
        self.violations = list(violations)
        super().__init__("Invalid dataset:\n  " + "\n  ".join(self.violations))


class CapacityError(ArcFdrError, RuntimeError):
    """Raised when a configuration space or subset enumeration exceeds its cap."""


class NoisyOrTypeError(ArcFdrError, TypeError):
    """Raised when a noisy-OR family contains a non-binary variable."""


class InfiniteGradientError(ArcFdrError, ArithmeticError):
    """Raised when the noisy-OR gradient is requested at eta = 0 with an observed reaction."""


class ConvergenceError(ArcFdrError, RuntimeError):
    """Raised when the noisy-OR fitter exhausts its iteration budget.

    Attributes:
        best_theta: The best iterate found (transformed parameters).
        gradient_norm: Projected-gradient infinity norm at `best_theta`.
    """

    def __init__(self, message: str, best_theta: np.ndarray, gradient_norm: float) -> None:
        self.best_theta = best_theta
        self.gradient_norm = gradient_norm
        super().__init__(f"{message} (projected gradient norm {gradient_norm:.3e})")


class NetworkSpecError(ArcFdrError, ValueError):
    """Raised when a network-spec file cannot be parsed or violates model invariants.

    Attributes:
        problems: (line number or None, message) pairs.
    """

    def __init__(self, problems: List[Tuple[Optional[int], str]]) -> None:
        self.problems = list(problems)
        lines = [f"line {ln}: {msg}" if ln is not None else msg for ln, msg in self.problems]
        super().__init__("Invalid network spec:\n  " + "\n  ".join(lines))


class FormatError(ArcFdrError, ValueError):
    """Raised when a dataset CSV, model file or experiment spec is malformed."""
