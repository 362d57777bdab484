"""Command-line entry point: ``tilmil <command> [flags]``.

Exit status is 0 on success, 1 when inputs or flags are invalid, and 2 on
runtime failures.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as tio
from .baseline import read_detections, tb_til_percent
from .core import BagValidationError, TileGeometry, UndefinedMetricError
from .crossval import run_cv, summarize, summary_table
from .grid import GRID_SUBSAMPLE, DEFAULT_LEARNING_RATES, DEFAULT_REGS, GridSpec, run_grid, select_best
from .heatmap import render, write_ppm
from .metrics import DEFAULT_THRESHOLD, evaluate, report_from_scores
from .model import HeadKind, forward
from .splits import SplitError, SplitPlan, materialize, patients_of, stratified_kfold
from .synth import SynthConfig, generate
from .train import TrainConfig, TrainingError, train_fold


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _strata(text: str) -> tuple[tuple[str, float], ...]:
    out = []
    for item in text.split(","):
        name, _, prop = item.partition(":")
        if not prop:
            raise argparse.ArgumentTypeError(f"stratum {item!r} must look like NAME:PROPORTION")
        out.append((name, float(prop)))
    return tuple(out)


def _threshold(text: str) -> str | float:
    if text == "median":
        return text
    return float(text)


def _add_data(p):
    p.add_argument("--manifest", required=True, help="label manifest CSV (patient_id,slide_id,stil_fraction,stratum)")
    p.add_argument("--bags", required=True, help="directory holding <slide_id>.wksb bag files")


def _add_training(p, subsample_default):
    p.add_argument("--head", default="linear", choices=[k.value for k in HeadKind], help="head architecture (default: linear)")
    p.add_argument("--lr", type=float, default=5e-3, help="Adam learning rate (default: 5e-3)")
    p.add_argument("--l2", type=float, default=1e-4, help="L2 strength on all parameters (default: 1e-4)")
    p.add_argument("--epochs", type=int, default=50, help="training epochs (default: 50)")
    p.add_argument("--subsample", type=int, default=subsample_default,
                   help=f"tiles drawn per slide per step (default: {subsample_default or 'all tiles'})")
    p.add_argument("--threshold", type=_threshold, default=DEFAULT_THRESHOLD,
                   help="TILs-high cut-off, or 'median' for the dataset's median label (default: 0.2)")
    p.add_argument("--hidden", type=int, default=128, help="hidden width of MLP heads (default: 128)")
    p.add_argument("--decoupled-l2", action="store_true", help="AdamW-style decay instead of L2 in the gradient")
    p.add_argument("--plan", help="split plan CSV; computed from the manifest with --seed when absent")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tilmil", description="Weak-label MIL regression of stromal TIL scores.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset with a planted head")
    p.add_argument("--num-bags", type=_positive_int, default=200, help="number of slides (default: 200)")
    p.add_argument("--tiles-min", type=_positive_int, default=100, help="min tiles per bag (default: 100)")
    p.add_argument("--tiles-max", type=_positive_int, default=400, help="max tiles per bag (default: 400)")
    p.add_argument("--h-dim", type=_positive_int, default=32, help="feature dimension (default: 32)")
    p.add_argument("--noise", type=float, default=0.02, help="label noise sd (default: 0.02)")
    p.add_argument("--strata", type=_strata, default=(("A", 0.5), ("B", 0.5)), help="NAME:P,... (default: A:0.5,B:0.5)")
    p.add_argument("--planted", default="linear", choices=["linear", "two_linear_tanh"], help="planted head (default: linear)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("split", help="write a stratified patient-level split plan")
    p.add_argument("--manifest", required=True, help="label manifest CSV")
    p.add_argument("--k", type=int, default=5, help="number of folds (default: 5)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("train", help="train one fold; writes checkpoint.wksm and train.log")
    _add_data(p)
    _add_training(p, None)
    p.add_argument("--fold", type=int, default=0, help="fold index (default: 0)")
    p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("cv", help="train and test all folds; writes per-fold reports and a summary")
    _add_data(p)
    _add_training(p, None)
    p.add_argument("--jobs", type=_positive_int, default=1, help="folds trained in parallel (default: 1)")
    p.add_argument("--sem", action="store_true", help="report standard error instead of std across folds")
    p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("grid", help="learning-rate x L2 grid search on validation AUC")
    _add_data(p)
    _add_training(p, GRID_SUBSAMPLE)
    p.add_argument("--lrs", type=_float_list, default=DEFAULT_LEARNING_RATES, help="comma-separated, decreasing (default: 5e-2 down to 1e-5, 8 values)")
    p.add_argument("--regs", type=_float_list, default=DEFAULT_REGS, help="comma-separated, decreasing (default: 5e-3 down to 1e-5, 6 values)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="work units in parallel (default: 1)")
    p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    _add_data(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.wksm)")
    p.add_argument("--threshold", type=_threshold, default=DEFAULT_THRESHOLD, help="TILs-high cut-off or 'median' (default: 0.2)")
    p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("baseline", help="evaluate TIL-count detections as tumor-bed TIL fractions")
    p.add_argument("--detections", required=True, help="CSV slide_id,num_tils,num_tb_tiles")
    p.add_argument("--manifest", required=True, help="label manifest CSV")
    p.add_argument("--threshold", type=_threshold, default=DEFAULT_THRESHOLD, help="TILs-high cut-off or 'median' (default: 0.2)")
    p.add_argument("--tile-px", type=float, default=512, help="tile side in pixels (default: 512)")
    p.add_argument("--mpp", type=float, default=0.5, help="microns per pixel (default: 0.5)")
    p.add_argument("--til-radius", type=float, default=4.0, help="lymphocyte radius in microns (default: 4)")
    p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("heatmap", help="render tile-score heatmaps as PPM")
    _add_data(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.wksm)")
    p.add_argument("--slides", help="comma-separated slide ids (default: all)")
    p.add_argument("--scale", type=_positive_int, default=1, help="pixels per tile side (default: 1)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    return parser


def _resolve_threshold(value, labels) -> float:
    if value == "median":
        return float(np.median(labels))
    return float(value)


def _train_config(args, bags) -> TrainConfig:
    threshold = _resolve_threshold(args.threshold, [b.label for b in bags])
    return TrainConfig(head_kind=args.head, lr=args.lr, l2=args.l2, epochs=args.epochs,
                       subsample=args.subsample, binarize_threshold=threshold, seed=args.seed,
                       hidden=args.hidden, decoupled_l2=args.decoupled_l2)


def _plan(args, bags) -> SplitPlan:
    if args.plan:
        path = Path(args.plan)
        if not path.exists():
            raise UsageError(f"--plan: no such file {args.plan}")
        return SplitPlan.from_csv(path.read_text())
    return stratified_kfold(patients_of(bags), 5, args.seed)


def _validate_training_flags(args):
    if args.epochs < 1:
        raise UsageError("epochs must be ≥ 1")
    if args.subsample is not None and args.subsample < 1:
        raise UsageError("subsample must be ≥ 1")
    if not args.lr > 0:
        raise UsageError("lr must be > 0")
    if not args.l2 >= 0:
        raise UsageError("l2 must be ≥ 0")
    if args.hidden < 1:
        raise UsageError("hidden must be ≥ 1")


def _cmd_synth(args) -> int:
    config = SynthConfig(num_bags=args.num_bags, tiles_per_bag_range=(args.tiles_min, args.tiles_max),
                         h_dim=args.h_dim, label_noise_sd=args.noise, strata=args.strata,
                         planted_kind=args.planted, seed=args.seed)
    bags, planted = generate(config)
    out = Path(args.out)
    tio.save_dataset(bags, out / "manifest.csv", out / "bags")
    tio.write_checkpoint(planted, out / "planted.wksm")
    print(f"wrote {len(bags)} bags to {out}")
    return 0


def _cmd_split(args) -> int:
    rows = tio.read_manifest(args.manifest)
    plan = stratified_kfold([(r.patient_id, r.stratum) for r in rows], args.k, args.seed)
    tio.atomic_write(Path(args.out) / "split_plan.csv", plan.to_csv())
    print(f"wrote split plan for {len(plan.patients)} patients")
    return 0


def _write_report(report, directory: Path) -> None:
    tio.atomic_write(directory / "predictions.csv", tio.predictions_csv(report))
    tio.atomic_write(directory / "metrics.csv", tio.summary_csv(report))


def _log_text(result) -> str:
    return "".join(h.log_line() + "\n" for h in result.history)


def _cmd_train(args) -> int:
    _validate_training_flags(args)
    bags = tio.load_dataset(args.manifest, args.bags)
    config = _train_config(args, bags)
    plan = _plan(args, bags)
    train_bags, val_bags, _ = materialize(plan, args.fold, bags)
    result = train_fold(train_bags, val_bags, config)
    out = Path(args.out)
    tio.write_checkpoint(result.best_head, out / "checkpoint.wksm")
    tio.atomic_write(out / "train.log", _log_text(result))
    print(f"best epoch {result.best_epoch}: val AUC {result.best_val_auc:.4f}")
    return 0


def _cmd_cv(args) -> int:
    _validate_training_flags(args)
    bags = tio.load_dataset(args.manifest, args.bags)
    config = _train_config(args, bags)
    plan = _plan(args, bags)
    outcomes = run_cv(plan, bags, config, jobs=args.jobs)
    out = Path(args.out)
    all_records = []
    for o in outcomes:
        fold_dir = out / f"fold{o.fold}"
        tio.write_checkpoint(o.train.best_head, fold_dir / "checkpoint.wksm")
        tio.atomic_write(fold_dir / "train.log", _log_text(o.train))
        _write_report(o.test, fold_dir)
        all_records.extend(o.test.records)
    pooled = report_from_scores([r.slide_id for r in all_records], [r.true_label for r in all_records],
                                [r.predicted for r in all_records], config.binarize_threshold)
    tio.atomic_write(out / "predictions.csv", tio.predictions_csv(pooled))
    summary = summarize(outcomes, sem=args.sem)
    spread = "sem" if args.sem else "std"
    lines = [f"metric,mean,{spread}"]
    for name, (mean, sd) in summary.items():
        lines.append(f"{name},{'' if mean is None else repr(mean)},{'' if sd is None else repr(sd)}")
    tio.atomic_write(out / "summary.csv", "\n".join(lines) + "\n")
    table = summary_table(summary, label=f"TILMIL ({config.head_kind.value})")
    tio.atomic_write(out / "summary.txt", table)
    print(table, end="")
    return 0


def _cmd_grid(args) -> int:
    _validate_training_flags(args)
    bags = tio.load_dataset(args.manifest, args.bags)
    base = _train_config(args, bags)
    spec = GridSpec(args.lrs, args.regs, base)
    plan = _plan(args, bags)
    report = run_grid(spec, plan, bags, jobs=args.jobs)
    out = Path(args.out)
    tio.atomic_write(out / "grid_report.csv", report.to_csv())
    text = report.to_text()
    try:
        lr, reg = select_best(report)
        text += f"selected lr={lr!r} reg={reg!r}\n"
    except ValueError as exc:
        text += f"no selection: {exc}\n"
    tio.atomic_write(out / "grid_report.txt", text)
    print(text, end="")
    failed = [c for c in report.cells if c.errors]
    for c in failed:
        print(f"cell lr={c.lr!r} reg={c.reg!r} failed: {'; '.join(c.errors)}", file=sys.stderr)
    return 0 if len(failed) < len(report.cells) else 2


def _cmd_eval(args) -> int:
    head = tio.read_checkpoint(args.checkpoint)
    bags = tio.load_dataset(args.manifest, args.bags)
    threshold = _resolve_threshold(args.threshold, [b.label for b in bags])
    report = evaluate(head, bags, threshold)
    _write_report(report, Path(args.out))
    print(tio.summary_csv(report), end="")
    return 0


def _cmd_baseline(args) -> int:
    geometry = TileGeometry(args.tile_px, args.mpp, args.til_radius)
    detections = {d.slide_id: d for d in read_detections(args.detections, geometry)}
    rows = tio.read_manifest(args.manifest)
    missing = [r.slide_id for r in rows if r.slide_id not in detections]
    if missing:
        raise UsageError(f"no detections for slide(s): {', '.join(missing)}")
    preds = [tb_til_percent(detections[r.slide_id]) for r in rows]
    threshold = _resolve_threshold(args.threshold, [r.label for r in rows])
    report = report_from_scores([r.slide_id for r in rows], [r.label for r in rows], preds, threshold)
    _write_report(report, Path(args.out))
    print(tio.summary_csv(report), end="")
    return 0


def _cmd_heatmap(args) -> int:
    head = tio.read_checkpoint(args.checkpoint)
    bags = tio.load_dataset(args.manifest, args.bags)
    by_id = {b.slide_id: b for b in bags}
    wanted = [s for s in args.slides.split(",") if s] if args.slides else list(by_id)
    unknown = [s for s in wanted if s not in by_id]
    if unknown:
        raise UsageError(f"unknown slide(s): {', '.join(unknown)}")
    for sid in wanted:
        pred = forward(head, by_id[sid])
        write_ppm(render(by_id[sid], pred.tile_scores, args.scale), Path(args.out) / f"{sid}.ppm")
    print(f"wrote {len(wanted)} heatmap(s)")
    return 0


COMMANDS = {
    "synth": _cmd_synth, "split": _cmd_split, "train": _cmd_train, "cv": _cmd_cv,
    "grid": _cmd_grid, "eval": _cmd_eval, "baseline": _cmd_baseline, "heatmap": _cmd_heatmap,
}

_VALIDATION_ERRORS = (UsageError, tio.DatasetError, tio.FormatError, SplitError,
                      BagValidationError, UndefinedMetricError, ValueError, FileNotFoundError)


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, Exception) as exc:  # noqa: BLE001 - never a traceback
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
