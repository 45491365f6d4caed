"""Dataset ingestion and generation for classification experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes (R,G,B planes)


@dataclass
class Dataset:
    features: np.ndarray  # (N, F) float64, finite
    labels: np.ndarray    # (N,) int64 class indices
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError(
                f"inconsistent dataset shapes {self.features.shape} / {self.labels.shape}"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError("dataset features contain non-finite values")

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def gen_blobs(classes: int, dim: int, per_class: int, spread: float, seed: int) -> Dataset:
    """Gaussian clusters with class means drawn on the unit sphere; deterministic."""
    if classes < 1 or dim < 1 or per_class < 1 or spread < 0:
        raise ValueError("classes, dim, per_class must be positive and spread >= 0")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    labels = np.repeat(np.arange(classes), per_class)
    features = means[labels] + spread * rng.standard_normal((labels.size, dim))
    meta = {
        "name": "blobs",
        "seed": seed,
        "classes": classes,
        "dim": dim,
        "per_class": per_class,
        "spread": spread,
        "normalization": "none",
    }
    return Dataset(features, labels, meta)


def read_cifar_binary(path, subset: int | None = None) -> Dataset:
    """Read a CIFAR-10 style binary file: 3073-byte records, pixels scaled to [0,1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % _CIFAR_RECORD_BYTES != 0:
        raise ValueError(
            f"truncated file: {len(raw)} bytes is not a multiple of {_CIFAR_RECORD_BYTES}"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD_BYTES)
    if subset is not None:
        records = records[:subset]
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise ValueError(f"label byte {labels.max()} out of range 0-9")
    features = records[:, 1:].astype(np.float64) / 255.0
    meta = {"name": "cifar10", "path": str(path), "normalization": "pixels/255"}
    return Dataset(features, labels, meta)


def write_cifar_binary(path, dataset: Dataset) -> None:
    """Inverse of read_cifar_binary for fixtures; features must be n/255 grid values."""
    pixels = np.round(dataset.features * 255.0).astype(np.uint8)
    records = np.concatenate(
        [dataset.labels.astype(np.uint8)[:, None], pixels], axis=1
    )
    if records.shape[1] != _CIFAR_RECORD_BYTES:
        raise ValueError(f"features must have {_CIFAR_RECORD_BYTES - 1} columns")
    with open(path, "wb") as fh:
        fh.write(records.tobytes())
