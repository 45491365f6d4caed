"""Command-line interface: capacity, ser-sweep, ot, train, eval, sweep, report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .capacity import blahut_arimoto
from .channel import AwgnChannel, analytic_ser, dmc_analytic, mc_ser
from .constellation import make_qam
from .experiment import (
    build_dataset,
    load_spec,
    run_experiment,
    split_dataset,
    write_epoch_csv,
    write_snr_csv,
)
from .pipeline import evaluate_sweep, load_checkpoint, train
from .transport import qam_ground_cost, sinkhorn, wasserstein_exact


def _fmt(x) -> str:
    return repr(float(x))


def _write_distribution_csv(path, probs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "prob"])
        for i, value in enumerate(probs):
            w.writerow([i, _fmt(value)])


def _read_distribution_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    probs = np.zeros(len(rows))
    for row in rows:
        probs[int(row["index"])] = float(row["prob"])
    return probs


def _cmd_capacity(args) -> int:
    w = dmc_analytic(make_qam(args.k), AwgnChannel(args.snr_db))
    res = blahut_arimoto(w, tol=args.tol)
    print(f"capacity_bits={res.capacity_bits!r} iterations={res.iterations} gap={res.gap!r}")
    _write_distribution_csv(args.out, res.input_dist)
    print(f"wrote {args.out}")
    return 0


def _cmd_ser_sweep(args) -> int:
    c = make_qam(args.k)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snr_db", "analytic_ser", "mc_ser", "stderr"])
        snr = args.snr_start
        i = 0
        while snr <= args.snr_stop + 1e-9:
            est = mc_ser(c, AwgnChannel(snr), args.samples, args.seed + i)
            stderr = float(np.sqrt(est * (1.0 - est) / args.samples))
            w.writerow([_fmt(snr), _fmt(analytic_ser(args.k, snr)), _fmt(est), _fmt(stderr)])
            snr += args.snr_step
            i += 1
    print(f"wrote {args.out}")
    return 0


def _cmd_ot(args) -> int:
    p = _read_distribution_csv(args.p)
    q = _read_distribution_csv(args.q)
    if args.cost:
        cost = np.loadtxt(args.cost, delimiter=",")
    elif args.k:
        cost = qam_ground_cost(make_qam(args.k))
    else:
        raise ValueError("provide --cost CSV or --k to build the QAM ground cost")
    exact, _ = wasserstein_exact(p, q, cost)
    res = sinkhorn(p, q, cost, eps=args.eps)
    print(f"exact={exact!r}")
    print(f"entropic={res.cost_eps!r} (eps={args.eps}, iterations={res.iterations})")
    return 0


def _cmd_train(args) -> int:
    spec = load_spec(args.config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.seed is not None:
        spec.config = dataclasses.replace(spec.config, seed=args.seed)
    full = build_dataset(spec)
    train_ds, _ = split_dataset(full, spec.test_fraction, spec.config.seed)
    ckpt = outdir / f"seed_{spec.config.seed}_checkpoint.npz"
    _, metrics = train(spec.config, train_ds, checkpoint_path=ckpt)
    epoch_csv = outdir / f"seed_{spec.config.seed}_epochs.csv"
    write_epoch_csv(epoch_csv, metrics, spec.config.k)
    print(f"wrote {ckpt}")
    print(f"wrote {epoch_csv}")
    for event in metrics.events:
        print(f"event: {event}", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    spec = load_spec(args.config)
    full = build_dataset(spec)
    _, test_ds = split_dataset(full, spec.test_fraction, spec.config.seed)
    grid = [float(x) for x in args.snr_grid.split(",")]
    rows = evaluate_sweep(model, grid, test_ds, args.n_draws, args.seed)
    write_snr_csv(args.out, rows)
    for row in rows:
        print(
            f"snr_db={row['snr_db']:g} accuracy={row['accuracy']:.4f} "
            f"ser_observed={row['ser_observed']:.4f}"
        )
    print(f"wrote {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    spec = load_spec(args.config)
    manifest = run_experiment(spec, args.out)
    print(f"status={manifest['status']} files={len(manifest['files'])} out={args.out}")
    return 0


def _cmd_report(args) -> int:
    from .report import render_report

    for path in render_report(args.run):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semqam",
        description="Channel-aware discrete semantic coding toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacity", help="Blahut-Arimoto capacity of the QAM/AWGN DMC")
    p.add_argument("--k", type=int, required=True, help="QAM order (4, 16, 64, 256)")
    p.add_argument("--snr-db", type=float, required=True, help="Es/N0 in dB")
    p.add_argument("--tol", type=float, default=1e-8, help="bound-gap tolerance in bits")
    p.add_argument("--out", default="capacity_input_dist.csv",
                   help="CSV (index,prob) for the optimal input distribution")
    p.set_defaults(func=_cmd_capacity)

    p = sub.add_parser("ser-sweep", help="analytic vs Monte-Carlo SER over an SNR grid")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--snr-start", type=float, required=True)
    p.add_argument("--snr-stop", type=float, required=True)
    p.add_argument("--snr-step", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="ser_sweep.csv")
    p.set_defaults(func=_cmd_ser_sweep)

    p = sub.add_parser("ot", help="exact and entropic transport cost between distributions")
    p.add_argument("--p", required=True, help="source distribution CSV (index,prob)")
    p.add_argument("--q", required=True, help="target distribution CSV (index,prob)")
    p.add_argument("--cost", help="K x K cost matrix CSV")
    p.add_argument("--k", type=int, help="build the K-QAM ground cost instead")
    p.add_argument("--eps", type=float, default=1e-2)
    p.set_defaults(func=_cmd_ot)

    p = sub.add_parser("train", help="train one model from a spec file")
    p.add_argument("--config", required=True, help="key=value spec file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint across an SNR grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True, help="spec file (for the dataset)")
    p.add_argument("--snr-grid", default="4,8,12,16,20", help="comma-separated dB values")
    p.add_argument("--n-draws", type=int, default=5)
    p.add_argument("--seed", type=int, default=1000)
    p.add_argument("--out", default="eval_snr.csv")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="full multi-seed experiment with aggregation")
    p.add_argument("--config", required=True, help="key=value spec file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="render figures from a run directory")
    p.add_argument("--run", required=True, help="directory written by `sweep`")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
