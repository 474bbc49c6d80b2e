"""Command-line pipeline: simulate or load data, train, emit the causal
score matrix, evaluate against truth, and sweep lambda/seeds.

Configuration is a JSON document with flat dotted-key overrides, e.g.
    grngc run --out results --set train.lam=1e-2 --set run.seeds=[0,1,2]
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from .core import GcMatrix, TrainConfig, TrainError, train
from .datagen import (AdjacencyTruth, DataError, Lorenz96Config, SimulationError,
                      TimeSeries, load_csv, random_sparse_var1, save_csv,
                      simulate_lorenz96, simulate_var)
from .metrics import FULL, MetricError, evaluate, write_metrics

DEFAULT_CONFIG = {
    "data": {
        "source": "lorenz96",      # lorenz96 | var | csv
        "seed": 0,
        # lorenz96
        "p": 10, "forcing": 10.0, "T": 1000, "dt": 0.05,
        "burn_in": 1000, "obs_noise_sigma": 0.0,
        # var
        "density": 0.3, "noise_sigma": 0.1, "radius": 0.45,
        # csv
        "series": None, "truth": None, "has_header": True, "delimiter": ",",
    },
    "train": {
        "lag": 5, "lam": 1e-3, "lr": 1e-3, "epochs": 100, "batch_size": 256,
        "backbone": "kan", "hidden": [128], "degree": 3, "grid_size": 5,
        "patience": 15, "val_fraction": 0.1,
    },
    "eval": {"mode": FULL},
    "run": {"seeds": [0, 1, 2], "lams": None},
}


class CliError(Exception):
    pass


def load_config(path: str | None, overrides) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            _merge(cfg, json.load(fh))
    for item in overrides or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return cfg


def _merge(base: dict, update: dict) -> None:
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v


def train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        lag=t["lag"], lam=t["lam"], lr=t["lr"], epochs=t["epochs"],
        batch_size=t["batch_size"], seed=seed, backbone=t["backbone"],
        hidden=tuple(t["hidden"]), degree=t["degree"], grid_size=t["grid_size"],
        patience=t["patience"], val_fraction=t["val_fraction"],
    )


def make_data(cfg: dict, seed: int) -> tuple[TimeSeries, AdjacencyTruth | None]:
    d = cfg["data"]
    src = d["source"]
    if src == "lorenz96":
        l96 = Lorenz96Config(p=d["p"], forcing=d["forcing"], T=d["T"], dt=d["dt"],
                             burn_in=d["burn_in"], seed=seed,
                             obs_noise_sigma=d["obs_noise_sigma"])
        return simulate_lorenz96(l96)
    if src == "var":
        coeffs = random_sparse_var1(d["p"], d["density"], seed, d["radius"])
        return simulate_var([coeffs], d["T"], d["noise_sigma"], seed)
    if src == "csv":
        if not d["series"]:
            raise CliError("data.source=csv requires data.series")
        series = load_csv(d["series"], d["has_header"], d["delimiter"])
        truth = None
        if d["truth"]:
            raw = np.loadtxt(d["truth"], delimiter=d["delimiter"], ndmin=2)
            truth = AdjacencyTruth(raw != 0)
        return series, truth
    raise CliError(f"unknown data source {src!r}")


def _truth_csv(truth: AdjacencyTruth, path) -> None:
    with open(path, "w") as fh:
        for row in truth.matrix:
            fh.write(",".join("1" if v else "0" for v in row) + "\n")


def cmd_simulate(cfg: dict, out: Path, seed: int) -> int:
    series, truth = make_data(cfg, seed)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(series, out / "series.csv")
    if truth is not None:
        _truth_csv(truth, out / "truth.csv")
    print(f"wrote {out / 'series.csv'} ({series.T} rows, {series.p} columns)")
    return 0


def cmd_infer(cfg: dict, out: Path, seed: int) -> int:
    d = cfg["data"]
    if d["source"] == "csv" or d["series"]:
        series = load_csv(d["series"], d["has_header"], d["delimiter"])
    else:
        series, _ = make_data(cfg, seed)
    report = train(series, train_config(cfg, seed))
    out.mkdir(parents=True, exist_ok=True)
    report.gc.to_csv(out / "gc_matrix.csv")
    report.to_json(out / "train_report.json")
    print(f"wrote {out / 'gc_matrix.csv'} "
          f"({report.epochs_run} epochs, {report.seconds:.1f}s)")
    return 0


def cmd_eval(gc_path, truth_path, mode: str, out: Path | None) -> int:
    gc = GcMatrix.from_csv(gc_path)
    truth = np.loadtxt(truth_path, delimiter=",", ndmin=2)
    if gc.scores.shape != truth.shape:
        raise CliError(f"shape mismatch: scores {gc.scores.shape}, truth {truth.shape}")
    metrics = evaluate(gc.scores, truth != 0, mode)
    print(json.dumps(metrics, indent=2))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(metrics, out / "metrics.json")
    return 0


def cmd_run(cfg: dict, out: Path) -> int:
    seeds = cfg["run"]["seeds"]
    lams = cfg["run"]["lams"] or [cfg["train"]["lam"]]
    mode = cfg["eval"]["mode"]
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for lam in lams:
        for seed in seeds:
            sub = out / f"lam{lam}_seed{seed}"
            sub.mkdir(parents=True, exist_ok=True)
            series, truth = make_data(cfg, seed)
            save_csv(series, sub / "series.csv")
            if truth is not None:
                _truth_csv(truth, sub / "truth.csv")
            tcfg = train_config(cfg, seed)
            tcfg.lam = lam
            report = train(series, tcfg)
            report.gc.to_csv(sub / "gc_matrix.csv")
            report.to_json(sub / "train_report.json")
            if truth is None:
                raise CliError("run needs ground truth (simulator source or data.truth)")
            metrics = evaluate(report.gc.scores, truth.matrix, mode)
            write_metrics(metrics, sub / "metrics.json")
            results.append({"lam": lam, "seed": seed, **metrics,
                            "seconds": report.seconds, "epochs": report.epochs_run})
            print(f"lam={lam:g} seed={seed}: auroc={metrics['auroc']:.3f} "
                  f"auprc={metrics['auprc']:.3f} ({report.seconds:.1f}s)")
    summary = {"config": cfg, "runs": results}
    for lam in lams:
        rows = [r for r in results if r["lam"] == lam]
        au = np.array([r["auroc"] for r in rows])
        ap = np.array([r["auprc"] for r in rows])
        summary[f"lam_{lam}"] = {
            "auroc_mean": float(au.mean()), "auroc_std": float(au.std()),
            "auprc_mean": float(ap.mean()), "auprc_std": float(ap.std()),
        }
        print(f"lam={lam:g}: AUROC {au.mean():.3f}+-{au.std():.3f}  "
              f"AUPRC {ap.mean():.3f}+-{ap.std():.3f}")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grngc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key config override, repeatable")

    common(sub.add_parser("simulate", help="write series.csv and truth.csv"))
    common(sub.add_parser("infer", help="train and write gc_matrix.csv"))
    common(sub.add_parser("run", help="simulate, infer per seed, evaluate, summarize"))

    pe = sub.add_parser("eval", help="score a gc matrix against a truth file")
    pe.add_argument("gc_matrix")
    pe.add_argument("truth")
    pe.add_argument("--mode", default=FULL, choices=[FULL, "off_diagonal"])
    pe.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            out = Path(args.out) if args.out else None
            return cmd_eval(args.gc_matrix, args.truth, args.mode, out)
        cfg = load_config(args.config, args.set)
        seed = args.seed if args.seed is not None else cfg["data"]["seed"]
        out = Path(args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, seed)
        if args.command == "infer":
            return cmd_infer(cfg, out, seed)
        return cmd_run(cfg, out)
    except (CliError, DataError, SimulationError, TrainError, MetricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
