"""Discrete optimal transport between distributions over codebook indices.

Two solvers: an exact one (transportation linear program, used as the
oracle) and a log-domain Sinkhorn iteration whose dual potential doubles as
the gradient of the entropic cost with respect to the source marginal, which
is what lets the usage regularizer reach the encoder during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .capacity import ConvergenceError, validate_distribution
from .constellation import Constellation

_MARGINAL_TOL = 1e-9


def _logsumexp(mat: np.ndarray, axis: int) -> np.ndarray:
    """Stabilized log-sum-exp along one axis; rows must contain a finite entry.

    Hand-rolled (scipy's wrapper dominates the Sinkhorn loop at K <= 256).
    """
    mx = mat.max(axis=axis, keepdims=True)
    return mx.squeeze(axis) + np.log(np.exp(mat - mx).sum(axis=axis))


def qam_ground_cost(c: Constellation) -> np.ndarray:
    """Ground cost C[i,j] = |s_i - s_j|, Euclidean distance in the complex plane."""
    diff = c.points[:, None] - c.points[None, :]
    return np.abs(diff)


def validate_cost_matrix(cost: np.ndarray) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise ValueError("cost matrix entries must be finite and nonnegative")
    return cost


@dataclass
class TransportPlan:
    matrix: np.ndarray   # (K, K) nonnegative
    source: np.ndarray   # row marginals
    target: np.ndarray   # column marginals

    def marginal_violation(self) -> float:
        """Worst L1 deviation of the plan's marginals from (source, target)."""
        row = np.abs(self.matrix.sum(axis=1) - self.source).sum()
        col = np.abs(self.matrix.sum(axis=0) - self.target).sum()
        return float(max(row, col))


@dataclass
class SinkhornResult:
    cost_eps: float           # <C, plan>, transport part only
    plan: TransportPlan
    dual_f: np.ndarray        # source potential, mean-centered
    dual_g: np.ndarray
    iterations: int
    converged: bool = True

    def regularized_value(self) -> float:
        """Dual objective f.p + g.q, the quantity whose p-gradient is dual_f."""
        return float(self.dual_f @ self.plan.source + self.dual_g @ self.plan.target)


def wasserstein_exact(p, q, cost) -> tuple[float, TransportPlan]:
    """Optimal value and plan of min_pi <C, pi> subject to marginals (p, q).

    Solved with HiGHS; exact up to LP feasibility tolerance (1e-10).
    """
    p = validate_distribution(p)
    q = validate_distribution(q)
    cost = validate_cost_matrix(cost)
    k = p.size
    if q.size != k or cost.shape != (k, k):
        raise ValueError(
            f"dimension mismatch: p {p.size}, q {q.size}, cost {cost.shape}"
        )
    if abs(p.sum() - q.sum()) > _MARGINAL_TOL:
        raise ValueError("infeasible marginals: masses differ beyond tolerance")
    q = q * (p.sum() / q.sum())

    # equality constraints: row sums = p, column sums = q
    a_eq = np.zeros((2 * k, k * k))
    for i in range(k):
        a_eq[i, i * k : (i + 1) * k] = 1.0
        a_eq[k + i, i :: k] = 1.0
    b_eq = np.concatenate([p, q])
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = TransportPlan(res.x.reshape(k, k), p, q)
    return float(res.fun), plan


def sinkhorn(
    p,
    q,
    cost,
    eps: float = 1e-2,
    tol: float = 1e-9,
    max_iter: int = 100000,
    init=None,
    omega: float = 1.0,
    strict: bool = True,
) -> SinkhornResult:
    """Entropic OT via log-domain alternating potential updates.

    Solves min_pi <C, pi> + eps KL(pi || p x q) over plans with marginals
    (p, q); stops when the L1 row-marginal violation drops below tol (the
    column marginals are exact after each g-update).  `init` may carry
    (dual_f, dual_g) from a previous solve to warm-start the iteration.

    omega > 1 over-relaxes the potential updates (same fixed point, much
    faster at small eps); should over-relaxation ever produce non-finite
    potentials, the iteration restarts once with plain updates.

    With strict=False an exhausted iteration budget returns the best-effort
    result flagged converged=False instead of raising (inner-loop use, where
    a slightly infeasible plan still yields a serviceable gradient).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0.0 < omega < 2.0:
        raise ValueError("omega must be in (0, 2)")
    p = validate_distribution(p)
    q = validate_distribution(q)
    cost = validate_cost_matrix(cost)
    k = p.size
    if q.size != k or cost.shape != (k, k):
        raise ValueError(
            f"dimension mismatch: p {p.size}, q {q.size}, cost {cost.shape}"
        )

    with np.errstate(divide="ignore"):
        lp = np.log(p)
        lq = np.log(q)
    m = -cost / eps
    if init is not None:
        phi0 = np.asarray(init[0], dtype=np.float64) / eps
        gam0 = np.asarray(init[1], dtype=np.float64) / eps
    else:
        phi0 = np.zeros(k)
        gam0 = np.zeros(k)

    phi, gam = phi0, gam0
    violation = math.inf
    checkpoint = math.inf
    it = 0
    while it < max_iter:
        it += 1
        phi = (1.0 - omega) * phi - omega * _logsumexp(m + (lq + gam)[None, :], axis=1)
        gam = (1.0 - omega) * gam - omega * _logsumexp(m + (lp + phi)[:, None], axis=0)
        gam = np.where(q > 0, gam, 0.0)  # zero-mass columns contribute nothing
        log_plan = (lp + phi)[:, None] + (lq + gam)[None, :] + m
        plan = np.exp(log_plan)
        violation = float(np.abs(plan.sum(axis=1) - p).sum())
        if not math.isfinite(violation):
            if omega == 1.0:
                break
            omega = 1.0  # safeguard: restart with plain updates
            phi, gam = phi0, gam0
            continue
        if omega != 1.0 and it % 1000 == 0:
            # over-relaxation can cycle near the fixed point; fall back when
            # a whole window makes less than 10% progress
            if violation > 0.9 * checkpoint:
                omega = 1.0
            checkpoint = violation
        if violation <= tol or (it >= max_iter and not strict):
            f = eps * phi
            g = eps * gam
            shift = float(f.mean())
            return SinkhornResult(
                cost_eps=float((cost * plan).sum()),
                plan=TransportPlan(plan, p, q),
                dual_f=f - shift,
                dual_g=g + shift,
                iterations=it,
                converged=violation <= tol,
            )
    raise ConvergenceError(
        f"sinkhorn: no convergence after {max_iter} iterations "
        f"(marginal violation {violation:.3e})",
        violation,
    )


def grad_wrt_source(res: SinkhornResult) -> np.ndarray:
    """Gradient of the entropic transport cost with respect to the source marginal.

    By the envelope argument this is the optimal source potential; the mean
    centering fixes the additive gauge so the gradient lives in the simplex
    tangent space.
    """
    return res.dual_f.copy()
