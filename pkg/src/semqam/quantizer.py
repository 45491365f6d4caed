"""Discrete bottleneck: codebook, nearest-neighbor assignment, estimators.

The two training estimators share the same hard index stream (what actually
goes on the air) but differ in how gradients cross the discretization:
straight-through passes the task gradient to the encoder unchanged, the
Gumbel path relaxes selection into a temperature-controlled soft mixture.
Soft assignment rows are exposed on both paths so the usage distribution
stays differentiable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .capacity import entropy

INIT_SCHEMES = ("uniform", "gaussian")

_CODEBOOK_FORMAT = "semqam-codebook-v1"
_GUMBEL_EPS = 1e-12


@dataclass
class Codebook:
    k: int
    d: int
    embeddings: Tensor  # (K, D), requires_grad during training


@dataclass
class QuantizerOutput:
    indices: np.ndarray    # (T,) selected codeword per token
    quantized: Tensor      # (T, D) values fed downstream
    soft_assign: Tensor    # (T, K) rows on the simplex
    estimator: str         # "ste" or "gumbel"


def init_codebook(k: int, d: int, scheme: str = "uniform", seed: int = 0) -> Codebook:
    """Seeded codebook init: uniform(-1/K, 1/K) or unit-gaussian/sqrt(D)."""
    if k < 1 or d < 1:
        raise ValueError("codebook needs k >= 1 and d >= 1")
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}, expected one of {INIT_SCHEMES}")
    rng = np.random.default_rng(seed)
    if scheme == "uniform":
        emb = rng.uniform(-1.0 / k, 1.0 / k, size=(k, d))
    else:
        emb = rng.standard_normal((k, d)) / np.sqrt(d)
    return Codebook(k=k, d=d, embeddings=Tensor(emb, requires_grad=True))


def assign_nearest(cb: Codebook, z: np.ndarray) -> np.ndarray:
    """Hard selection: argmin squared distance per token, lowest index on ties."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != cb.d:
        raise ValueError(f"expected tokens of dimension {cb.d}, got shape {z.shape}")
    e = cb.embeddings.value
    d2 = (z**2).sum(axis=1)[:, None] - 2.0 * z @ e.T + (e**2).sum(axis=1)[None, :]
    return d2.argmin(axis=1)


def quantize_ste(cb: Codebook, z: Tensor, tau_soft: float = 1.0) -> QuantizerOutput:
    """Hard selection forward, identity gradient backward.

    The quantized value is the nearest embedding; the backward pass routes
    d(loss)/d(quantized) straight to z.  soft_assign (softmax of scaled
    negative squared distances) is carried for usage statistics and keeps
    the usage distribution differentiable on this path too.
    """
    indices = assign_nearest(cb, z.value)
    e = ad.gather(cb.embeddings, indices)
    # value is exactly the hard lookup (z - detach(z) == 0 elementwise), the
    # gradient w.r.t. z is the identity
    quantized = ad.add(ad.detach(e), ad.sub(z, ad.detach(z)))
    d2 = ad.squared_distance_pairwise(z, cb.embeddings)
    soft_assign = ad.softmax(ad.mul(d2, -1.0 / tau_soft), axis=1)
    return QuantizerOutput(indices, quantized, soft_assign, "ste")


def quantize_gumbel(
    cb: Codebook,
    z: Tensor,
    tau: float,
    seed: int,
    hard_eval: bool = False,
) -> QuantizerOutput:
    """Gumbel-softmax relaxation of codeword selection.

    Logits are negative squared distances to the codewords; seeded Gumbel
    noise perturbs them and a temperature controls the smoothness of the
    resulting soft mixture.  With hard_eval the argmax index is looked up
    directly (evaluation path, no relaxation).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    d2 = ad.squared_distance_pairwise(z, cb.embeddings)
    logits = ad.mul(d2, -1.0)
    rng = np.random.default_rng(seed)
    u = rng.random(logits.value.shape)
    u = np.clip(u, _GUMBEL_EPS, 1.0 - _GUMBEL_EPS)
    noise = -np.log(-np.log(u))
    indices = (logits.value + noise).argmax(axis=1)
    y = ad.softmax(ad.mul(ad.add(logits, ad.constant(noise)), 1.0 / tau), axis=1)
    if hard_eval:
        quantized = ad.gather(cb.embeddings, indices)
    else:
        quantized = ad.matmul(y, cb.embeddings)
    return QuantizerOutput(indices, quantized, y, "gumbel")


def vq_losses(z: Tensor, cb: Codebook, indices: np.ndarray) -> tuple[Tensor, Tensor]:
    """Codebook and commitment losses, mean squared token-to-codeword distance.

    Stop-gradients route the codebook loss into the embeddings only and the
    commitment loss into the encoder only.
    """
    e = ad.gather(cb.embeddings, indices)
    diff_cb = ad.sub(ad.detach(z), e)
    codebook_loss = ad.mean(ad.sum_(ad.mul(diff_cb, diff_cb), axis=1))
    diff_commit = ad.sub(z, ad.detach(e))
    commitment_loss = ad.mean(ad.sum_(ad.mul(diff_commit, diff_commit), axis=1))
    return codebook_loss, commitment_loss


def usage_distribution(soft_assign: Tensor) -> Tensor:
    """Mean soft assignment over all tokens; differentiable, sums to 1."""
    if soft_assign.value.ndim != 2 or soft_assign.value.shape[0] == 0:
        raise ValueError("usage_distribution needs a nonempty batch of assignment rows")
    return ad.mean(soft_assign, axis=0)


def hard_usage_histogram(indices: np.ndarray, k: int) -> np.ndarray:
    """Normalized histogram of hard indices (diagnostic counterpart of soft usage)."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValueError("empty index batch")
    return np.bincount(indices, minlength=k) / indices.size


def perplexity(p: np.ndarray) -> float:
    """Effective number of active codewords, 2**entropy."""
    return float(2.0 ** entropy(p))


def save_codebook_csv(cb: Codebook, path) -> None:
    """Versioned CSV: format tag, K,D header, then row-major embeddings."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([_CODEBOOK_FORMAT])
        w.writerow([cb.k, cb.d])
        for row in cb.embeddings.value:
            w.writerow([repr(float(x)) for x in row])


def load_codebook_csv(path) -> Codebook:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != [_CODEBOOK_FORMAT]:
        raise ValueError(f"not a {_CODEBOOK_FORMAT} file: {path}")
    k, d = (int(x) for x in rows[1])
    emb = np.array([[float(x) for x in row] for row in rows[2:]], dtype=np.float64)
    if emb.shape != (k, d):
        raise ValueError(f"codebook body {emb.shape} does not match header ({k}, {d})")
    return Codebook(k=k, d=d, embeddings=Tensor(emb, requires_grad=True))
