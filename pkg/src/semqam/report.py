"""Render experiment figures from a run directory's CSV output.

Reads only the delimited files (plus the manifest for configuration echo)
and writes PNG figures next to them: accuracy and observed SER versus SNR,
training curves, and the final usage distribution against its target.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .channel import analytic_ser
from .experiment import read_csv_rows
from .pipeline import TrainConfig, build_target_distribution


def _load_run(rundir: Path):
    manifest = json.loads((rundir / "manifest.json").read_text())
    seeds = manifest["spec"]["seeds"]
    per_seed_snr = {s: read_csv_rows(rundir / f"seed_{s}_snr.csv") for s in seeds}
    per_seed_epochs = {s: read_csv_rows(rundir / f"seed_{s}_epochs.csv") for s in seeds}
    aggregate = read_csv_rows(rundir / "aggregate_snr.csv")
    return manifest, per_seed_snr, per_seed_epochs, aggregate


def _col(rows, name):
    return np.array([float(r[name]) for r in rows])


def render_report(rundir) -> list[Path]:
    """Write all figures for one run directory; returns the created paths."""
    rundir = Path(rundir)
    manifest, per_seed_snr, per_seed_epochs, aggregate = _load_run(rundir)
    cfg = manifest["spec"]["config"]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for seed, rows in per_seed_snr.items():
        ax.plot(_col(rows, "snr_db"), _col(rows, "accuracy"),
                color="0.7", lw=1, label=f"seed {seed}" if seed == list(per_seed_snr)[0] else None)
    ax.plot(_col(aggregate, "snr_db"), _col(aggregate, "accuracy"),
            "o-", color="tab:blue", lw=2, label="median")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax.grid(True, ls="--", lw=0.5)
    ax.legend()
    ax.set_title(f"K={cfg['k']}, D={cfg['d']}, m={cfg['m']}, "
                 f"$\\lambda$={cfg['lambda_wass']}, {cfg['estimator']}")
    written.append(_save(fig, rundir / "accuracy_vs_snr.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    snrs = _col(aggregate, "snr_db")
    ax.semilogy(snrs, np.maximum(_col(aggregate, "ser_observed"), 1e-7),
                "o-", label="observed (median)")
    ax.semilogy(snrs, np.maximum([analytic_ser(cfg["k"], s) for s in snrs], 1e-7),
                "--", label="analytic")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("symbol error rate")
    ax.grid(True, which="both", ls="--", lw=0.5)
    ax.legend()
    written.append(_save(fig, rundir / "ser_vs_snr.png"))

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for seed, rows in per_seed_epochs.items():
        epochs = _col(rows, "epoch")
        axes[0].plot(epochs, _col(rows, "task_loss"), label=f"seed {seed}")
        axes[1].plot(epochs, _col(rows, "wass"))
        axes[2].plot(epochs, _col(rows, "perplexity"))
    axes[0].set_ylabel("task loss")
    axes[1].set_ylabel("transport cost to target")
    axes[2].set_ylabel("perplexity")
    for ax in axes:
        ax.set_xlabel("epoch")
        ax.grid(True, ls="--", lw=0.5)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    written.append(_save(fig, rundir / "training_curves.png"))

    k = int(cfg["k"])
    first_seed = list(per_seed_epochs)[0]
    last = per_seed_epochs[first_seed][-1]
    usage = np.array([float(last[f"usage_{i}"]) for i in range(k)])
    train_cfg = TrainConfig(k=k, snr_train_db=float(cfg["snr_train_db"]),
                            target_dist=cfg["target_dist"])
    target = build_target_distribution(train_cfg)
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(k)
    ax.bar(x - 0.2, usage, width=0.4, label=f"usage (seed {first_seed}, final epoch)")
    ax.bar(x + 0.2, target, width=0.4, label="target")
    ax.set_xlabel("codeword index")
    ax.set_ylabel("probability")
    ax.grid(True, axis="y", ls="--", lw=0.5)
    ax.legend()
    written.append(_save(fig, rundir / "usage_vs_target.png"))
    return written


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path
