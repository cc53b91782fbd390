"""Command-line entry point.

Subcommands cover the whole workflow: generate the synthetic ensemble,
train a single surrogate, run the asynchronous hyperparameter search,
roll a trained surrogate forward autoregressively, and turn a search log
into plot-ready CSV files. Every command that writes artifacts also
writes a manifest.json with SHA-256 checksums of its outputs.

Exit codes: 0 success, 1 bad arguments or configuration, 2 missing or
unreadable input files.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import ocean
from .executor import make_training_evaluate, read_log, run_search
from .fno import checkpoint
from .ocean import GenConfig, OceanError, generate_ensemble, load_ensemble
from .search import pareto_front
from .space import SpaceError, default_space
from .training import (StopperConfig, TrainJob, TrainingError,
                       quantile_transform, rollout, train)

BASELINE_CONFIG = {
    "padding": False, "padding_type": "constant", "coord_feat": False,
    "lift_act": "gelu", "num_FNO": 4, "num_latent_feat": 32, "num_modes": 16,
    "num_proj_layers": 2, "proj_size": 16, "proj_act": "silu", "alpha": 0.5,
    "optimizer": "Adam", "lr": 1e-3, "weight_decay": 0.0, "batch_size": 8,
}

SPLIT_RATIOS = (2 / 3, 1 / 6, 1 / 6)


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# manifest

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, outputs: list[Path],
                   extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": [{"path": p.name, "sha256": _sha256(p),
                     "bytes": p.stat().st_size} for p in outputs],
    }
    if extra:
        manifest.update(extra)
    target = out_dir / "manifest.json"
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest-")
    with os.fdopen(fd, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, target)  # atomic publish
    return target


# ---------------------------------------------------------------------------
# shared data prep

def _load_data(path: str):
    p = Path(path)
    if not p.exists():
        raise CliError(f"data file not found: {p}", code=2)
    try:
        return load_ensemble(p)
    except OceanError as exc:
        raise CliError(f"cannot read {p}: {exc}", code=2)


def _prepare_dataset(ensemble, split_seed: int):
    ds = ocean.make_pairs(ensemble)
    ds = ocean.split(ds, SPLIT_RATIOS, seed=split_seed)
    stats = ocean.normalize_fit(ds)
    return ocean.normalize_apply(ds, stats), stats


def _validate_config(config: dict) -> dict:
    space = default_space()
    try:
        space.validate(config)
    except SpaceError as exc:
        raise CliError(f"invalid configuration: {exc}")
    return config


def _stats_to_json(stats) -> dict:
    return {"mean": stats.mean.tolist(), "std": stats.std.tolist(),
            "kappa_lo": stats.kappa_lo, "kappa_hi": stats.kappa_hi,
            "passthrough": stats.passthrough.tolist()}


def _stats_from_json(d) -> ocean.NormStats:
    return ocean.NormStats(mean=np.array(d["mean"]), std=np.array(d["std"]),
                           kappa_lo=d["kappa_lo"], kappa_hi=d["kappa_hi"],
                           passthrough=np.array(d["passthrough"], dtype=bool))


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args) -> int:
    if args.days < 2:
        raise CliError("--days must be >= 2: single-frame simulations "
                       "cannot form input/target pairs")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    gen = GenConfig(n_sims=args.sims, timesteps_out=args.days,
                    grid=args.grid, seed=args.seed)
    ensemble = generate_ensemble(gen)
    ocean.save_ensemble(ensemble, out)
    sidecar = out.with_name(out.name + ".json")
    write_manifest(out.parent, "gen-data", [out, sidecar],
                   {"sims": args.sims, "days": args.days, "grid": args.grid,
                    "seed": args.seed})
    print(f"wrote {out} ({ensemble.n_sims} simulations, "
          f"{ensemble.timesteps} daily frames, grid {args.grid})")
    return 0


def _read_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}", code=2)
    config = dict(BASELINE_CONFIG)
    config.update(json.loads(p.read_text()))
    return config


def cmd_train(args) -> int:
    ensemble = _load_data(args.data)
    config = _read_config_file(args.config) if args.config else dict(BASELINE_CONFIG)
    if args.alpha is not None:
        config["alpha"] = args.alpha
    _validate_config(config)
    dataset, stats = _prepare_dataset(ensemble, args.split_seed)

    job = TrainJob(hyperparams=config, dataset=dataset, epochs=args.epochs,
                   seed=args.seed,
                   stoppers=StopperConfig(grace_epochs=args.grace_epochs,
                                          epoch_time_limit=args.epoch_time_limit))
    try:
        result = train(job)
    except TrainingError as exc:
        raise CliError(str(exc))
    if result.objectives is None:
        reason = result.failure or f"stopped by {result.stopper}"
        print(f"training did not produce a model: {reason}", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    extra = {
        "stats": _stats_to_json(stats),
        "climatology": dataset.climatology.tolist(),
        "grid": ensemble.gen.grid,
        "split_seed": args.split_seed,
        "hyperparams": config,
        "objectives": list(result.objectives),
        "best_epoch": result.best_epoch,
        "epochs_run": result.epochs_run,
    }
    checkpoint.save(out, result.config, result.params, seed=args.seed,
                    extra=extra)
    history_path = out.with_suffix(".history.csv")
    with open(history_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_mse", "val_acc",
                    "seconds"])
        for h in result.history:
            w.writerow([h.epoch, h.train_loss, h.val_loss, h.val_mse,
                        h.val_acc, h.seconds])
    write_manifest(out.parent, "train", [out, history_path],
                   {"objectives": list(result.objectives),
                    "best_epoch": result.best_epoch})
    neg_mse, acc = result.objectives
    print(f"best epoch {result.best_epoch}: val MSE {-neg_mse:.6g}, "
          f"val ACC {acc:.6g}; checkpoint {out}")
    return 0


def _best_trial(trials):
    """Successful trial maximizing the equal-weight sum of quantile-scaled
    objectives."""
    ok = [t for t in trials if t.ok]
    if not ok:
        return None
    neg_mse = quantile_transform(np.array([t.objectives.neg_mse for t in ok]))
    acc = quantile_transform(np.array([t.objectives.acc for t in ok]))
    return ok[int(np.argmax(neg_mse + acc))]


def cmd_search(args) -> int:
    ensemble = _load_data(args.data)
    dataset, _ = _prepare_dataset(ensemble, args.split_seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "results.jsonl"
    if log_path.exists() and not args.resume:
        raise CliError(f"{log_path} exists; pass --resume to continue it")

    space = default_space()
    evaluate = make_training_evaluate(
        dataset, epochs=args.epochs,
        stoppers=StopperConfig(grace_epochs=args.grace_epochs,
                               epoch_time_limit=args.epoch_time_limit))
    run = run_search(space, evaluate, budget=args.budget,
                     workers=args.workers, run_seed=args.seed,
                     log_path=log_path, backend=args.backend,
                     resume=args.resume)

    front = pareto_front(run.trials)
    pareto_path = out_dir / "pareto.csv"
    with open(pareto_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id", "neg_mse", "acc"]
                   + list(space.names))
        for t in front:
            w.writerow([t.trial_id, t.objectives.neg_mse, t.objectives.acc]
                       + [t.config[n] for n in space.names])

    outputs = [log_path, pareto_path]
    best = _best_trial(run.trials)
    if best is not None:
        best_path = out_dir / "best.json"
        best_path.write_text(json.dumps({
            "trial_id": best.trial_id, "config": best.config,
            "objectives": {"neg_mse": best.objectives.neg_mse,
                           "acc": best.objectives.acc},
            "seed": best.seed,
        }, indent=2) + "\n")
        outputs.append(best_path)
    write_manifest(out_dir, "search", outputs,
                   {"budget": args.budget, "completed": run.completed,
                    "pareto_size": len(front)})
    print(f"{run.completed} trials done; pareto front has {len(front)} "
          f"points; artifacts in {out_dir}")
    return 0


def cmd_rollout(args) -> int:
    ck_path = Path(args.checkpoint)
    if not ck_path.exists():
        raise CliError(f"checkpoint not found: {ck_path}", code=2)
    try:
        config, params, header = checkpoint.load(ck_path)
    except checkpoint.CheckpointError as exc:
        raise CliError(f"cannot read {ck_path}: {exc}", code=2)
    extra = header.get("extra", {})
    for key in ("stats", "climatology", "grid"):
        if key not in extra:
            raise CliError(f"checkpoint lacks rollout metadata ({key!r})")
    stats = _stats_from_json(extra["stats"])
    clim = np.array(extra["climatology"])
    mask = ocean.basin_mask(int(extra["grid"]))

    ensemble = _load_data(args.data)
    if not 0 <= args.sim < ensemble.n_sims:
        raise CliError(f"--sim must be in [0, {ensemble.n_sims})")
    frames = ensemble.states[args.sim]
    steps, exhausted = rollout(config, params, frames,
                               float(ensemble.kappas[args.sim]), stats, mask,
                               clim, steps=args.steps)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "variable", "log_rse", "log_one_minus_acc"])
        for st in steps:
            if st.metrics is None:
                continue
            for name, m in st.metrics.items():
                w.writerow([st.step, name, m["log_rse"],
                            m["log_one_minus_acc"]])
    write_manifest(out.parent, "rollout", [out],
                   {"sim": args.sim, "steps": args.steps,
                    "truth_exhausted": exhausted})
    scored = sum(1 for st in steps if st.metrics is not None)
    note = " (truth exhausted before the full horizon)" if exhausted else ""
    print(f"rolled {len(steps)} steps, {scored} scored against truth{note}; "
          f"wrote {out}")
    return 0


def cmd_report(args) -> int:
    results = Path(args.results)
    if not results.exists():
        raise CliError(f"results log not found: {results}", code=2)
    _, trials = read_log(results)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    space = default_space()
    ok = [t for t in trials if t.ok]

    # parallel coordinates: unit-encoded hyperparameters plus objectives
    pc_path = out_dir / "parallel_coords.csv"
    with open(pc_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id"] + list(space.names) + ["neg_mse", "acc"])
        for t in ok:
            enc = space.encode(t.config)
            w.writerow([t.trial_id] + [f"{v:.10g}" for v in enc]
                       + [t.objectives.neg_mse, t.objectives.acc])

    front_ids = {t.trial_id for t in pareto_front(trials)}
    sc_path = out_dir / "scatter.csv"
    with open(sc_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id", "neg_mse", "acc", "pareto"])
        for t in ok:
            w.writerow([t.trial_id, t.objectives.neg_mse, t.objectives.acc,
                        int(t.trial_id in front_ids)])

    write_manifest(out_dir, "report", [pc_path, sc_path],
                   {"trials": len(trials), "successful": len(ok),
                    "pareto_size": len(front_ids)})
    print(f"{len(ok)}/{len(trials)} successful trials; wrote {pc_path.name} "
          f"and {sc_path.name} in {out_dir}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gyrebo",
        description="Surrogate training and multiobjective hyperparameter "
                    "search for a synthetic ocean ensemble.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the simulation ensemble")
    p.add_argument("--out", default="data/ensemble.bin")
    p.add_argument("--sims", type=int, default=12)
    p.add_argument("--days", type=int, default=10)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one surrogate")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON file overriding the baseline "
                                    "configuration")
    p.add_argument("--alpha", type=float, help="loss blend override")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--epoch-time-limit", type=float, default=10.0)
    p.add_argument("--grace-epochs", type=int, default=10)
    p.add_argument("--out", default="artifacts/model.ckpt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", help="run the hyperparameter search")
    p.add_argument("--data", required=True)
    p.add_argument("--budget", type=int, default=64)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--epoch-time-limit", type=float, default=10.0)
    p.add_argument("--grace-epochs", type=int, default=10)
    p.add_argument("--backend", choices=["process", "thread"],
                   default="process")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--out-dir", default="artifacts/search")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("rollout", help="autoregressive rollout of a "
                                       "trained surrogate")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sim", type=int, default=0)
    p.add_argument("--steps", type=int, default=29)
    p.add_argument("--out", default="artifacts/rollout.csv")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("report", help="summarize a search log as CSVs")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", default="artifacts/report")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OceanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
