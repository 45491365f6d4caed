"""Experiment orchestration: specs, multi-seed runs, CSV and manifest output.

Specs are flat key=value text with typed parsing; unknown keys fail fast.
A run writes, per seed, the per-epoch and per-SNR metric CSVs plus a
checkpoint, then a median-aggregated per-SNR CSV and a manifest echoing the
full configuration.  Metric CSVs are byte-stable across reruns of the same
spec; the manifest additionally records wall time and so is not.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import Dataset, gen_blobs, read_cifar_binary
from .pipeline import Metrics, Model, TrainConfig, evaluate_sweep, train


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


@dataclass
class ExperimentSpec:
    config: TrainConfig = field(default_factory=TrainConfig)
    dataset: str = "blobs"
    # blobs parameters (ignored for cifar)
    classes: int = 10
    dim: int = 16
    per_class: int = 500
    spread: float = 0.35
    data_seed: int = 7
    # cifar parameters
    data_path: str = ""
    subset: int = 0
    # protocol
    seeds: tuple[int, ...] = (0, 1, 2)
    test_fraction: float = 0.2
    n_draws_eval: int = 5
    eval_seed: int = 1000

    def validate(self) -> None:
        self.config.validate()
        if self.dataset not in ("blobs", "cifar"):
            raise ValueError("dataset must be 'blobs' or 'cifar'")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be nonempty and distinct")
        if min(self.seeds) < 0 or self.eval_seed < 0 or self.data_seed < 0:
            raise ValueError("seeds must be non-negative")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.n_draws_eval < 1:
            raise ValueError("n_draws_eval must be >= 1")


# spec file key -> (target, attribute, parser); target "config" nests into TrainConfig
_SPEC_SCHEMA = {
    "k": ("config", "k", int),
    "d": ("config", "d", int),
    "m": ("config", "m", int),
    "snr_train_db": ("config", "snr_train_db", float),
    "snr_eval_grid": ("config", "snr_eval_grid", _parse_float_list),
    "estimator": ("config", "estimator", str),
    "tau_start": ("config", "tau_start", float),
    "tau_end": ("config", "tau_end", float),
    "tau_decay": ("config", "tau_decay", float),
    "tau_soft": ("config", "tau_soft", float),
    "lambda_wass": ("config", "lambda_wass", float),
    "beta_commit": ("config", "beta_commit", float),
    "target_dist": ("config", "target_dist", str),
    "eps_sinkhorn": ("config", "eps_sinkhorn", float),
    "sinkhorn_tol": ("config", "sinkhorn_tol", float),
    "sinkhorn_max_iter": ("config", "sinkhorn_max_iter", int),
    "sinkhorn_omega": ("config", "sinkhorn_omega", float),
    "encoder_hidden": ("config", "encoder_hidden", _parse_int_list),
    "encoder_out_gain": ("config", "encoder_out_gain", float),
    "decoder_hidden": ("config", "decoder_hidden", _parse_int_list),
    "codebook_init": ("config", "codebook_init", str),
    "channel_grad": ("config", "channel_grad", str),
    "optimizer": ("config", "optimizer", str),
    "lr": ("config", "lr", float),
    "lr_decay": ("config", "lr_decay", float),
    "momentum": ("config", "momentum", float),
    "epochs": ("config", "epochs", int),
    "batch": ("config", "batch", int),
    "collapse_threshold": ("config", "collapse_threshold", float),
    "dataset": ("spec", "dataset", str),
    "classes": ("spec", "classes", int),
    "dim": ("spec", "dim", int),
    "per_class": ("spec", "per_class", int),
    "spread": ("spec", "spread", float),
    "data_seed": ("spec", "data_seed", int),
    "data_path": ("spec", "data_path", str),
    "subset": ("spec", "subset", int),
    "seeds": ("spec", "seeds", _parse_int_list),
    "test_fraction": ("spec", "test_fraction", float),
    "n_draws_eval": ("spec", "n_draws_eval", int),
    "eval_seed": ("spec", "eval_seed", int),
}


def parse_spec(text: str) -> ExperimentSpec:
    """Parse flat key=value text; blank lines and # comments are skipped."""
    spec = ExperimentSpec()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SPEC_SCHEMA:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        target, attr, parser = _SPEC_SCHEMA[key]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: cannot parse {key}={value!r}: {exc}") from None
        if target == "config":
            setattr(spec.config, attr, parsed)
        else:
            setattr(spec, attr, parsed)
    spec.validate()
    return spec


def load_spec(path) -> ExperimentSpec:
    return parse_spec(Path(path).read_text())


def build_dataset(spec: ExperimentSpec) -> Dataset:
    if spec.dataset == "blobs":
        return gen_blobs(spec.classes, spec.dim, spec.per_class, spec.spread, spec.data_seed)
    return read_cifar_binary(spec.data_path, subset=spec.subset or None)


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split; normalization metadata is shared."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, ds.features.shape[0]]))
    order = rng.permutation(ds.features.shape[0])
    n_test = max(1, int(round(test_fraction * order.size)))
    test, tr = order[:n_test], order[n_test:]
    meta = dict(ds.metadata)
    return (
        Dataset(ds.features[tr], ds.labels[tr], {**meta, "split": "train"}),
        Dataset(ds.features[test], ds.labels[test], {**meta, "split": "test"}),
    )


def _fmt(x) -> str:
    return repr(float(x))


def write_epoch_csv(path, metrics: Metrics, k: int) -> None:
    """Per-epoch schema plus appended soft/hard usage histogram columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["epoch", "task_loss", "commit_loss", "wass", "perplexity"]
            + [f"usage_{i}" for i in range(k)]
            + [f"hard_usage_{i}" for i in range(k)]
        )
        for row in metrics.per_epoch:
            w.writerow(
                [row["epoch"]]
                + [_fmt(row[c]) for c in ("task_loss", "commit_loss", "wass", "perplexity")]
                + [_fmt(u) for u in row["usage"]]
                + [_fmt(u) for u in row["hard_usage"]]
            )


def write_snr_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snr_db", "accuracy", "ser_observed", "n_draws"])
        for row in rows:
            w.writerow(
                [_fmt(row["snr_db"]), _fmt(row["accuracy"]),
                 _fmt(row["ser_observed"]), row["n_draws"]]
            )


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def aggregate_median(per_seed_rows: list[list[dict]]) -> list[dict]:
    """Per-SNR-point medians of accuracy and observed SER across seeds."""
    out = []
    for point in zip(*per_seed_rows):
        snrs = {row["snr_db"] for row in point}
        if len(snrs) != 1:
            raise ValueError(f"misaligned SNR grids across seeds: {sorted(snrs)}")
        out.append(
            {
                "snr_db": point[0]["snr_db"],
                "accuracy": float(np.median([row["accuracy"] for row in point])),
                "ser_observed": float(np.median([row["ser_observed"] for row in point])),
                "n_draws": point[0]["n_draws"],
            }
        )
    return out


def run_experiment(spec: ExperimentSpec, outdir) -> dict:
    """Train per seed, evaluate the SNR sweep, and write all report files.

    Returns the manifest dict.  On a per-seed failure the manifest is still
    written with status "partial" before the error propagates.
    """
    spec.validate()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    full = build_dataset(spec)
    train_ds, test_ds = split_dataset(full, spec.test_fraction, spec.config.seed)

    manifest = {
        "tool": "semqam",
        "version": __version__,
        "spec": _spec_dict(spec),
        "dataset_meta": {k: v for k, v in full.metadata.items()},
        "n_train": int(train_ds.features.shape[0]),
        "n_test": int(test_ds.features.shape[0]),
        "files": [],
        "events": [],
        "status": "partial",
    }
    per_seed_rows = []
    try:
        for seed in spec.seeds:
            cfg = dataclasses.replace(spec.config, seed=seed)
            ckpt = outdir / f"seed_{seed}_checkpoint.npz"
            model, metrics = train(cfg, train_ds, checkpoint_path=ckpt)
            rows = evaluate_sweep(
                model, cfg.snr_eval_grid, test_ds, spec.n_draws_eval, spec.eval_seed
            )
            metrics.per_snr = rows
            epoch_csv = outdir / f"seed_{seed}_epochs.csv"
            snr_csv = outdir / f"seed_{seed}_snr.csv"
            write_epoch_csv(epoch_csv, metrics, cfg.k)
            write_snr_csv(snr_csv, rows)
            per_seed_rows.append(rows)
            manifest["files"] += [ckpt.name, epoch_csv.name, snr_csv.name]
            manifest["events"] += [f"seed {seed}: {e}" for e in metrics.events]
        agg = aggregate_median(per_seed_rows)
        agg_csv = outdir / "aggregate_snr.csv"
        write_snr_csv(agg_csv, agg)
        manifest["files"].append(agg_csv.name)
        manifest["status"] = "complete"
    finally:
        manifest["wall_time_s"] = time.monotonic() - t0
        with open(outdir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return manifest


def _spec_dict(spec: ExperimentSpec) -> dict:
    out = dataclasses.asdict(spec)
    out["config"] = dataclasses.asdict(spec.config)
    return out
