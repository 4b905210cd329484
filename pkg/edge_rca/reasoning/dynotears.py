"""
Masked time-lagged structure learning (lag 1).

    min  1/(2n) ||Y - Y W - Z A||_F^2 + lam_w ||W o W_mask||_1 + lam_a ||A o A_mask||_1
    s.t. h(W) = tr(exp(W o W)) - d = 0

Y are rows 1..m-1 of the standardized count matrix, Z rows 0..m-2.
Solved with an augmented Lagrangian outer loop and proximal gradient inner
steps; the weighted L1 term is handled exactly by soft-thresholding.
"""
import logging
from typing import List, Tuple, Union

import numpy as np
import scipy.linalg as slin
from pydantic import BaseModel, ConfigDict, Field

from edge_rca.utils.config import SolveConfig
from edge_rca.utils.errors import DimensionMismatch, InsufficientWindows
from edge_rca.utils.specs import EventMatrix, PriorMasks

logger = logging.getLogger(__name__)

MatrixLike = Union[EventMatrix, np.ndarray]


class SolveResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    W: np.ndarray
    A: np.ndarray
    h: float
    rho: float
    loss: float
    outer_iterations: int
    inner_iterations: int
    converged: bool
    flags: List[str] = Field(default_factory=list)


def standardize(counts: np.ndarray, variance_floor: float = 1e-8) -> np.ndarray:
    """Columns to mean 0 / variance 1; constant columns are divided by sqrt(floor)."""
    X = np.asarray(counts, dtype=np.float64)
    centered = X - X.mean(axis=0, keepdims=True)
    var = np.maximum(centered.var(axis=0, keepdims=True), variance_floor)
    return centered / np.sqrt(var)


def lagged(X: MatrixLike, variance_floor: float = 1e-8) -> Tuple[np.ndarray, np.ndarray]:
    counts = X.counts if isinstance(X, EventMatrix) else np.asarray(X, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] < 2:
        raise InsufficientWindows(f"insufficient windows: need >= 2 rows for a lag, got {counts.shape[0]}")
    Xs = standardize(counts, variance_floor)
    return Xs[1:], Xs[:-1]


def _fit(Y: np.ndarray, Z: np.ndarray, W: np.ndarray, A: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    n = Y.shape[0]
    R = Y - Y @ W - Z @ A
    loss = 0.5 / n * float(np.sum(R * R))
    return loss, -(Y.T @ R) / n, -(Z.T @ R) / n


def loss_and_grad(X: MatrixLike, W: np.ndarray, A: np.ndarray,
                  variance_floor: float = 1e-8) -> Tuple[float, np.ndarray, np.ndarray]:
    """Least-squares fit term and its exact gradients with respect to W and A."""
    Y, Z = lagged(X, variance_floor)
    d = Y.shape[1]
    if W.shape != (d, d) or A.shape != (d, d):
        raise DimensionMismatch(f"W and A must be {d}x{d}")
    return _fit(Y, Z, W, A)


def acyclicity(W: np.ndarray) -> Tuple[float, np.ndarray]:
    """h(W) = tr(exp(W o W)) - d and its gradient exp(W o W)^T o 2W."""
    E = slin.expm(W * W)
    h = float(np.trace(E)) - W.shape[0]
    return h, E.T * W * 2.0


def soft_threshold(M: np.ndarray, thresh: np.ndarray) -> np.ndarray:
    return np.sign(M) * np.maximum(np.abs(M) - thresh, 0.0)


def _penalty(W: np.ndarray, A: np.ndarray, masks: PriorMasks, cfg: SolveConfig) -> float:
    return (cfg.lambda_w * float(np.sum(np.abs(W) * masks.w_mask))
            + cfg.lambda_a * float(np.sum(np.abs(A) * masks.a_mask)))


def _inner(Y, Z, W, A, masks: PriorMasks, cfg: SolveConfig, rho: float, alpha: float) -> Tuple[np.ndarray, np.ndarray, int, bool]:
    """Proximal gradient with backtracking on the augmented Lagrangian."""

    def smooth(Wc, Ac):
        loss, gW, gA = _fit(Y, Z, Wc, Ac)
        h, gh = acyclicity(Wc)
        value = loss + 0.5 * rho * h * h + alpha * h
        return value, gW + (rho * h + alpha) * gh, gA

    thr_w = cfg.lambda_w * masks.w_mask
    thr_a = cfg.lambda_a * masks.a_mask
    step = 1.0
    f, gW, gA = smooth(W, A)
    for it in range(1, cfg.max_inner + 1):
        while True:
            # prox step; no self-loops in W
            W_new = soft_threshold(W - step * gW, step * thr_w)
            np.fill_diagonal(W_new, 0.0)
            A_new = soft_threshold(A - step * gA, step * thr_a)
            dW, dA = W_new - W, A_new - A
            f_new, gW_new, gA_new = smooth(W_new, A_new)
            bound = f + float(np.sum(gW * dW) + np.sum(gA * dA)) + (np.sum(dW * dW) + np.sum(dA * dA)) / (2 * step)
            # Backtrack until the quadratic upper bound holds
            if f_new <= bound + 1e-12 or step < 1e-14:
                break
            step *= 0.5
        delta = max(float(np.abs(dW).max(initial=0.0)), float(np.abs(dA).max(initial=0.0)))
        W, A, f, gW, gA = W_new, A_new, f_new, gW_new, gA_new
        if delta < cfg.inner_tol:
            return W, A, it, True
        step = min(step * 2.0, 1.0)
    return W, A, cfg.max_inner, False


def solve(X: MatrixLike, masks: PriorMasks, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    """
    Augmented Lagrangian on h(W) = 0. rho grows by cfg.rho_mult whenever h
    fails to drop below cfg.h_progress of its previous value. Stops when
    h <= cfg.h_tol or rho reaches cfg.rho_max; returns the last iterate.
    """
    Y, Z = lagged(X, cfg.variance_floor)
    d = Y.shape[1]
    if masks.w_mask.shape != (d, d) or masks.a_mask.shape != (d, d):
        raise DimensionMismatch(f"masks must be {d}x{d} to match the event matrix")
    if isinstance(X, EventMatrix) and list(masks.event_order) != list(X.event_order):
        raise DimensionMismatch("mask event order differs from the matrix event order")

    W = np.zeros((d, d))
    A = np.zeros((d, d))
    rho, alpha = cfg.rho_init, 0.0
    h_prev = np.inf
    h = 0.0
    inner_total = 0
    inner_capped = 0
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        while True:
            # Inner solve at this rho; bump rho until h actually drops
            W_new, A_new, n_inner, ok = _inner(Y, Z, W, A, masks, cfg, rho, alpha)
            inner_total += n_inner
            inner_capped += int(not ok)
            h, _ = acyclicity(W_new)
            if h > cfg.h_progress * h_prev and rho < cfg.rho_max:
                rho *= cfg.rho_mult
            else:
                break
        W, A, h_prev = W_new, A_new, h
        alpha += rho * h
        # Done, or rho is as big as we allow
        if h <= cfg.h_tol or rho >= cfg.rho_max:
            break

    flags = []
    converged = h <= cfg.h_tol
    if not converged:
        flags.append("rho_cap" if rho >= cfg.rho_max else "iteration_cap")
        logger.warning("solver stopped with h=%.3e (rho=%.1e, %d outer)", h, rho, outer)
    if inner_capped:
        flags.append("inner_cap")
    loss, _, _ = _fit(Y, Z, W, A)
    return SolveResult(W=W, A=A, h=h, rho=rho, loss=loss + _penalty(W, A, masks, cfg),
                       outer_iterations=outer, inner_iterations=inner_total,
                       converged=converged, flags=flags)
