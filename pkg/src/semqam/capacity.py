"""Mutual information and capacity of a discrete memoryless channel.

The capacity-achieving input distribution is computed with the
Blahut-Arimoto fixed point.  It is the target that the transport
regularizer aligns codeword usage against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import validate_transition_matrix

_LN2 = math.log(2.0)
# support floor applied after every update, keeps log arguments away from 0
_P_FLOOR = 1e-15


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; .gap carries the last bound gap."""

    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


def validate_distribution(p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"distribution must be a vector, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("distribution has negative entries")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"distribution sums to {p.sum()!r}, not 1 within {tol:.1g}")
    return p


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in bits, with 0 log 0 := 0."""
    p = validate_distribution(p)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def mutual_information(p: np.ndarray, w: np.ndarray) -> float:
    """I(X;Y) in bits for input distribution p and transition matrix w.

    I = sum_i p_i sum_j w_ij log2(w_ij / q_j) with q = p @ w and
    0 log(0/.) := 0.
    """
    p = validate_distribution(p)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != p.size:
        raise ValueError(f"dimension mismatch: p has {p.size} entries, w has shape {w.shape}")
    q = p @ w
    mask = (w > 0) & (p[:, None] > 0)
    terms = np.zeros_like(w)
    terms[mask] = w[mask] * np.log2(w[mask] / np.broadcast_to(q, w.shape)[mask])
    return float(p @ terms.sum(axis=1))


def _row_divergences(w: np.ndarray, q: np.ndarray) -> np.ndarray:
    """d_i = KL(w_i || q) in nats; rows of w may contain zeros."""
    mask = w > 0
    terms = np.zeros_like(w)
    terms[mask] = w[mask] * np.log(w[mask] / np.broadcast_to(q, w.shape)[mask])
    return terms.sum(axis=1)


@dataclass
class CapacityResult:
    input_dist: np.ndarray
    capacity_bits: float
    iterations: int
    gap: float
    # per-iteration lower bounds I(p^t) in bits, for monotonicity diagnostics
    lower_bounds: list[float] = field(default_factory=list)


def blahut_arimoto(w: np.ndarray, tol: float = 1e-8, max_iter: int = 10000) -> CapacityResult:
    """Capacity and capacity-achieving input distribution of a DMC.

    Iterates p <- p * exp(d) / Z with d_i = KL(w_i || p @ w), stopping when
    the standard bound gap max_i d_i - sum_i p_i d_i drops below tol (in
    bits).  Returns the lower bound I(p) as capacity_bits together with the
    input distribution that attains it.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = np.asarray(w, dtype=np.float64)
    validate_transition_matrix(w)
    k = w.shape[0]
    p = np.full(k, 1.0 / k)
    lower_bounds: list[float] = []
    gap = math.inf
    for it in range(max_iter + 1):
        d = _row_divergences(w, p @ w)
        ub = float(d.max())
        lb = float(p @ d)
        gap = (ub - lb) / _LN2
        lower_bounds.append(lb / _LN2)
        if gap <= tol:
            return CapacityResult(p, lb / _LN2, it, gap, lower_bounds)
        if it == max_iter:
            break
        p = p * np.exp(d - ub)
        p = np.maximum(p / p.sum(), _P_FLOOR)
        p /= p.sum()
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (gap {gap:.3e} bits)", gap
    )
