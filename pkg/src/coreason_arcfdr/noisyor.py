# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

"""Noisy-OR conditional distributions for binary children.

A child y with binary parents is off with probability (1 - q0) * prod_{active i} (1 - q_i).
Fitting works in the transformed space theta_i = -ln(1 - q_i) in [0, THETA_MAX], where the
negative log likelihood is convex: with eta = theta_0 + sum_{active} theta_i, a row with
y = 0 contributes eta and a row with y = 1 contributes -ln(1 - exp(-eta)).
"""

import math
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from coreason_arcfdr.core import Dataset
from coreason_arcfdr.exceptions import ConvergenceError, InfiniteGradientError, NoisyOrTypeError, StructureError
from coreason_arcfdr.models import NoisyOrParams
from coreason_arcfdr.utils.logger import logger

THETA_MAX = 30.0
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
ARMIJO_FRACTION = 1e-4
MAX_BACKTRACKS = 60
LM_INITIAL = 1e-3
LM_MIN = 1e-10
LM_MAX = 1e10


def _binary_family(data: Dataset, node: int, parents: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Design matrix (leak column first, then parents) and boolean child column.

    Rows come back in a canonical order, so every sum over them is independent of the row
    order of `data`.
    """
    for variable in (node, *parents):
        if data.arities[variable] != 2:
            raise NoisyOrTypeError(f"variable {variable} has arity {data.arities[variable]}; noisy-OR needs binary")
    family = data.values[:, [node, *parents]]
    family = family[np.lexsort(family.T[::-1])]
    columns = [np.ones(data.n_rows)] + [family[:, i].astype(float) for i in range(1, family.shape[1])]
    design = np.column_stack(columns)
    return design, family[:, 0] == 1


def theta_from_params(params: NoisyOrParams, parents: Sequence[int]) -> np.ndarray:
    """Maps probabilities to theta = -ln(1 - q), capped at THETA_MAX."""
    q = np.array([params.leak_q0] + [params.links[p] for p in parents])
    with np.errstate(divide="ignore"):
        theta = -np.log1p(-q)
    return np.minimum(theta, THETA_MAX)


def params_from_theta(theta: np.ndarray, parents: Sequence[int]) -> NoisyOrParams:
    """Maps theta back to probabilities q = 1 - exp(-theta)."""
    q = -np.expm1(-np.asarray(theta, dtype=float))
    return NoisyOrParams(leak_q0=float(q[0]), links={int(p): float(v) for p, v in zip(parents, q[1:], strict=True)})


def noisyor_prob_active(params: NoisyOrParams, active_parents: Iterable[int]) -> float:
    """Probability that the child is on given the set of active parents.

    Raises:
        StructureError: If an active parent has no link probability.
    """
    p_off = 1.0 - params.leak_q0
    for parent in active_parents:
        if parent not in params.links:
            raise StructureError(f"parent {parent} is not part of this noisy-OR family")
        p_off *= 1.0 - params.links[parent]
    return 1.0 - p_off


def noisyor_loglik(params: NoisyOrParams, data: Dataset, node: int, parents: Sequence[int]) -> float:
    """Sum over rows of ln p(y | active parents); may be -inf for impossible observations."""
    if set(params.links) != set(parents):
        raise StructureError(f"links {sorted(params.links)} do not match parents {sorted(parents)}")
    design, y = _binary_family(data, node, parents)
    q = np.array([params.leak_q0] + [params.links[p] for p in parents])
    with np.errstate(divide="ignore", invalid="ignore"):
        log_keep = np.log1p(-q)  # -inf where q == 1
        log_off = np.where(design > 0, log_keep, 0.0).sum(axis=1)
        log_on = np.log(-np.expm1(log_off))  # -inf where log_off == 0
    return float(log_off[~y].sum() + log_on[y].sum())


def _objective(theta: np.ndarray, design: np.ndarray, y: np.ndarray) -> float:
    eta = design @ theta
    eta_on = eta[y]
    if np.any(eta_on <= 0):
        return math.inf
    return float(eta[~y].sum() - np.log(-np.expm1(-eta_on)).sum())


def _gradient(theta: np.ndarray, design: np.ndarray, y: np.ndarray) -> np.ndarray:
    eta_on = design[y] @ theta
    if np.any(eta_on <= 0):
        raise InfiniteGradientError("eta = 0 on a row with an observed reaction")
    weight = 1.0 / np.expm1(eta_on)  # exp(-eta) / (1 - exp(-eta))
    return design[~y].sum(axis=0) - design[y].T @ weight


def _hessian(theta: np.ndarray, design: np.ndarray, y: np.ndarray) -> np.ndarray:
    on = design[y]
    weight = 1.0 / np.expm1(on @ theta)
    return on.T @ (on * (weight * (1.0 + weight))[:, None])


def _check_theta(theta: np.ndarray, size: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (size,):
        raise ValueError(f"theta must have {size} entries (leak first), got shape {theta.shape}")
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    return theta


def noisyor_negative_loglik(theta: np.ndarray, data: Dataset, node: int, parents: Sequence[int]) -> float:
    """Convex objective in theta-space (leak first, then parents in the given order)."""
    design, y = _binary_family(data, node, parents)
    return _objective(_check_theta(theta, design.shape[1]), design, y)


def noisyor_gradient(theta: np.ndarray, data: Dataset, node: int, parents: Sequence[int]) -> np.ndarray:
    """Analytic gradient of the negative log likelihood in theta-space.

    Raises:
        InfiniteGradientError: If eta = 0 on a row where the child is on.
    """
    design, y = _binary_family(data, node, parents)
    return _gradient(_check_theta(theta, design.shape[1]), design, y)


def noisyor_hessian(theta: np.ndarray, data: Dataset, node: int, parents: Sequence[int]) -> np.ndarray:
    """Analytic Hessian of the negative log likelihood in theta-space."""
    design, y = _binary_family(data, node, parents)
    return _hessian(_check_theta(theta, design.shape[1]), design, y)


def _projected(theta: np.ndarray, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns the free-coordinate mask and the projected gradient."""
    fixed = ((theta <= 0.0) & (grad > 0.0)) | ((theta >= THETA_MAX) & (grad < 0.0))
    return ~fixed, np.where(fixed, 0.0, grad)


def _line_search(
    theta: np.ndarray, f: float, grad: np.ndarray, direction: np.ndarray, design: np.ndarray, y: np.ndarray
) -> Optional[Tuple[np.ndarray, float]]:
    """Armijo backtracking along the projected arc; None if no step decreases the objective."""
    step = 1.0
    slack = 1e-12 * max(1.0, abs(f))
    for _ in range(MAX_BACKTRACKS):
        candidate = np.clip(theta + step * direction, 0.0, THETA_MAX)
        predicted = float(grad @ (candidate - theta))
        if predicted < 0.0:
            f_candidate = _objective(candidate, design, y)
            if f_candidate <= f + ARMIJO_FRACTION * predicted + slack:
                return candidate, f_candidate
        step *= 0.5
    return None


def _fit_theta(
    design: np.ndarray, y: np.ndarray, tol: float, max_iter: int
) -> Tuple[np.ndarray, float, float, int]:
    """Projected Levenberg-Marquardt Newton on the box [0, THETA_MAX].

    The damping is lam * |projected gradient|, so steps stay bounded when the free Hessian
    block is singular (fewer reactions than parameters) and approach pure Newton steps near
    the optimum. lam grows tenfold after every failed line search; past LM_MAX the iteration
    takes a projected-gradient step instead.
    """
    rate = float(np.clip(y.mean(), 0.05, 0.95)) if y.size else 0.5
    theta = np.full(design.shape[1], 0.1)
    theta[0] = -math.log1p(-rate)
    f = _objective(theta, design, y)
    pg_norm = math.inf
    lam = LM_INITIAL

    for iteration in range(max_iter):
        grad = _gradient(theta, design, y)
        free, pg = _projected(theta, grad)
        pg_norm = float(np.max(np.abs(pg))) if pg.size else 0.0
        if pg_norm <= tol:
            return theta, f, pg_norm, iteration

        hess = _hessian(theta, design, y)[np.ix_(free, free)]
        identity = np.eye(hess.shape[0])
        accepted = None
        while accepted is None and lam <= LM_MAX:
            direction = np.zeros_like(theta)
            try:
                direction[free] = scipy.linalg.solve(hess + lam * pg_norm * identity, -grad[free], assume_a="pos")
            except (np.linalg.LinAlgError, ValueError):
                lam *= 10.0
                continue
            accepted = _line_search(theta, f, grad, direction, design, y)
            if accepted is None:
                lam *= 10.0

        if accepted is None:
            accepted = _line_search(theta, f, grad, -pg, design, y)
            lam = LM_INITIAL
            if accepted is None:
                raise ConvergenceError("line search failed to decrease the objective", theta, pg_norm)
        else:
            lam = max(LM_MIN, lam / 10.0)
        theta, f = accepted

    raise ConvergenceError(f"no convergence after {max_iter} iterations", theta, pg_norm)


def fit_noisyor_ml(
    data: Dataset,
    node: int,
    parents: Sequence[int],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> NoisyOrParams:
    """Maximum-likelihood leak and link probabilities for one noisy-OR family.

    The returned fit satisfies the projected-gradient certificate: every coordinate strictly
    inside [0, THETA_MAX] has |gradient| <= tol.

    Raises:
        NoisyOrTypeError: If the node or a parent is not binary.
        ConvergenceError: If the certificate is not reached within `max_iter` iterations.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    design, y = _binary_family(data, node, parents)
    theta, _, pg_norm, iterations = _fit_theta(design, y, tol, max_iter)
    logger.debug(f"Noisy-OR fit of node {node} <- {list(parents)}: {iterations} iterations, |pg| = {pg_norm:.2e}")
    return params_from_theta(theta, parents)


def noisyor_bic_family(
    data: Dataset, node: int, parents: Sequence[int], tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> float:
    """ML log likelihood of the noisy-OR family minus (d/2) ln n, with d = |parents| + 1."""
    design, y = _binary_family(data, node, parents)
    _, f, _, _ = _fit_theta(design, y, tol, max_iter)
    return -f - 0.5 * (len(parents) + 1) * math.log(data.n_rows)
