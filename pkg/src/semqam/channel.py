"""AWGN symbol transport, hard detection, and the induced discrete channel.

SNR convention (used everywhere in this package): snr_db is Es/N0 in decibels
with unit average symbol energy, so N0 = 10**(-snr_db/10) and each noise
component has variance N0/2.  snr_db = +inf is the supported noiseless limit.

Noise is drawn from numpy's PCG64 bit generator via Generator.standard_normal
(ziggurat sampling), real block first, then imaginary; a fixed seed therefore
fixes the output stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .constellation import SUPPORTED_ORDERS, Constellation, detect


def _qfunc(x) -> np.ndarray:
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


@dataclass(frozen=True)
class AwgnChannel:
    """Complex AWGN link at a fixed Es/N0."""

    snr_db: float
    noise_var_per_component: float = field(init=False)

    def __post_init__(self):
        n0 = 0.0 if math.isinf(self.snr_db) else 10.0 ** (-self.snr_db / 10.0)
        object.__setattr__(self, "noise_var_per_component", n0 / 2.0)


def _add_noise(symbols: np.ndarray, ch: AwgnChannel, rng: np.random.Generator) -> np.ndarray:
    s = np.asarray(symbols, dtype=np.complex128)
    if ch.noise_var_per_component == 0.0:
        return s.copy()
    std = math.sqrt(ch.noise_var_per_component)
    return s + std * rng.standard_normal(s.size) + 1j * std * rng.standard_normal(s.size)


def transmit(symbols, ch: AwgnChannel, seed: int) -> np.ndarray:
    """y = s + n with circularly-symmetric Gaussian n, deterministic given seed."""
    return _add_noise(np.asarray(symbols), ch, np.random.default_rng(seed))


def analytic_ser(k: int, snr_db: float) -> float:
    """Exact hard-decision symbol error rate of square K-QAM on AWGN.

    P_s = 1 - (1 - 2(1 - 1/sqrt(K)) Q(sqrt(3/(K-1) * Es/N0)))^2
    """
    if k not in SUPPORTED_ORDERS:
        raise ValueError(
            f"unsupported order {k}: square QAM supports K in {SUPPORTED_ORDERS}"
        )
    if math.isinf(snr_db):
        return 0.0
    es_n0 = 10.0 ** (snr_db / 10.0)
    p_axis = 2.0 * (1.0 - 1.0 / math.sqrt(k)) * float(_qfunc(math.sqrt(3.0 / (k - 1) * es_n0)))
    return 1.0 - (1.0 - p_axis) ** 2


def mc_ser(c: Constellation, ch: AwgnChannel, n: int, seed: int) -> float:
    """Monte-Carlo SER: uniform indices -> transmit -> nearest-point detection."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, c.order, size=n)
    y = _add_noise(c.points[idx], ch, rng)
    return float(np.mean(detect(c, y) != idx))


def dmc_analytic(c: Constellation, ch: AwgnChannel) -> np.ndarray:
    """Transition matrix P[i,j] = Pr(detect j | sent i) of the hard-detected link.

    Detection on a square grid separates per axis, so P is the Kronecker
    product of the per-axis PAM transition matrices, whose entries are
    Q-function differences at the midpoint decision boundaries.  Rows are
    renormalized only to absorb floating-point residue.
    """
    levels = c.axis_levels
    side = levels.size
    if ch.noise_var_per_component == 0.0:
        return np.eye(c.order)
    sigma = math.sqrt(ch.noise_var_per_component)
    edges = np.concatenate(([-np.inf], (levels[1:] + levels[:-1]) / 2.0, [np.inf]))
    # P_ax[u, v] = Q((edges[v] - a_u)/sigma) - Q((edges[v+1] - a_u)/sigma)
    z = (edges[None, :] - levels[:, None]) / sigma
    q = _qfunc(z)
    p_ax = q[:, :-1] - q[:, 1:]
    p = np.kron(p_ax, p_ax)
    return p / p.sum(axis=1, keepdims=True)


def dmc_monte_carlo(c: Constellation, ch: AwgnChannel, n_per_row: int, seed: int) -> np.ndarray:
    """Empirical transition matrix, n_per_row transmissions of each symbol."""
    if n_per_row < 1:
        raise ValueError("n_per_row must be >= 1")
    rng = np.random.default_rng(seed)
    k = c.order
    p = np.empty((k, k))
    for i in range(k):
        y = _add_noise(np.full(n_per_row, c.points[i]), ch, rng)
        counts = np.bincount(detect(c, y), minlength=k)
        p[i] = counts / n_per_row
    return p


def validate_transition_matrix(p: np.ndarray, tol: float = 1e-9) -> None:
    """Raise unless p is a row-stochastic square matrix within tol."""
    p = np.asarray(p)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("transition matrix has negative entries")
    err = np.max(np.abs(p.sum(axis=1) - 1.0))
    if err > tol:
        raise ValueError(f"transition matrix rows sum to 1 +- {err:.3g} (> {tol:.1g})")
