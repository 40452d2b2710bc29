"""Command-line entry point: ``plastinet {gen-data,pretrain,train,eval,report}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as C
from . import metrics
from .data import IngestionError, generate, generate_pretext, load_directory, stack, write_split
from .model import HybridModel
from .plasticity import NumericalAbort, TrainConfigError, pretrain_backbone, predict, read_log, train, write_log
from .sampler import SamplerError
from .tensorcore import DimensionError

log = logging.getLogger("plastinet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _resolve_config(args) -> C.RunConfig:
    cfg = C.load(args.config) if args.config else C.RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed).validate()
    return cfg


def _load_split(data_dir, split):
    path = os.path.join(data_dir, split)
    if not os.path.isdir(path):
        raise UsageError(f"dataset split not found: {path}")
    return load_directory(path)


# --- verbs ---------------------------------------------------------------------

def cmd_gen_data(cfg: C.RunConfig, out: str) -> None:
    splits = generate(cfg.dataset_spec())
    for name, samples in zip(("train", "val", "test"), splits):
        write_split(os.path.join(out, name), samples)
    C.save(os.path.join(out, "config.txt"), cfg)
    log.info("wrote %d/%d/%d images to %s", len(splits.train), len(splits.val), len(splits.test), out)


def _pretrain(model: HybridModel, cfg: C.RunConfig):
    pretext = generate_pretext(cfg.pretext_n, cfg.seed)
    return pretrain_backbone(model, pretext, cfg.pretrain_epochs, max_lr=cfg.pretrain_lr, batch_size=cfg.batch_size,
                             momentum=cfg.momentum, weight_decay=cfg.weight_decay, seed=cfg.seed)


def cmd_pretrain(cfg: C.RunConfig, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    model = HybridModel(cfg.model_config(), seed=cfg.seed)
    res = _pretrain(model, cfg)
    with open(os.path.join(out, "pretrain.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "accuracy", "loss"])
        for i, (acc, loss) in enumerate(zip(res.accuracies, res.losses), start=1):
            w.writerow([i, f"{acc:.6f}", f"{loss:.6f}"])
    model.save(os.path.join(out, "pretrained.ckpt"), cfg.digest())
    C.save(os.path.join(out, "config.txt"), cfg)


def cmd_train(cfg: C.RunConfig, out: str, data_dir: str | None = None, pretrain: bool = True,
              epochs: int | None = None, pretrained: str | None = None) -> None:
    os.makedirs(out, exist_ok=True)
    C.save(os.path.join(out, "config.txt"), cfg)
    if data_dir is not None:
        train_set, val_set = _load_split(data_dir, "train"), _load_split(data_dir, "val")
    else:
        splits = generate(cfg.dataset_spec())
        train_set, val_set = splits.train, splits.val
    tcfg = cfg.train_config(max_epochs=epochs)
    t0 = time.perf_counter()
    model = HybridModel(cfg.model_config(), seed=cfg.seed)
    digest = cfg.digest()
    model.save(os.path.join(out, "init.ckpt"), digest)
    if pretrained is not None:
        source = HybridModel.load(pretrained)
        if source.config != model.config:
            raise UsageError(f"{pretrained}: model geometry differs from the run config")
        model.load_state({k: v for k, v in source.state().items() if not k.startswith("head.")})
    elif pretrain and cfg.pretrain_epochs > 0:
        _pretrain(model, cfg)
        model.save(os.path.join(out, "pretrained.ckpt"), digest)
    t1 = time.perf_counter()
    res = train(model, train_set, val_set, tcfg)
    t2 = time.perf_counter()
    write_log(os.path.join(out, "log.csv"), res.rows)
    model.save(os.path.join(out, "final.ckpt"), digest)
    best = HybridModel(model.config)
    best.load_state(res.best_state)
    best.save(os.path.join(out, "best.ckpt"), digest)
    # wall-clock lives apart from log.csv so the log stays byte-reproducible
    with open(os.path.join(out, "timing.txt"), "w") as fh:
        fh.write(f"pretrain_seconds = {t1 - t0:.3f}\ntrain_seconds = {t2 - t1:.3f}\n")


def _write_predictions(path, ids, labels, probs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "prob"])
        for i, y, p in zip(ids, labels, probs):
            w.writerow([i, int(y), repr(float(p))])


def _read_predictions(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return np.array([int(r["label"]) for r in rows]), np.array([float(r["prob"]) for r in rows])
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"{path}: unreadable predictions file ({exc})") from exc


def cmd_eval(out: str, checkpoint: str | None = None, data_dir: str | None = None, split: str = "test",
             predictions: str | None = None) -> metrics.EvalReport:
    os.makedirs(out, exist_ok=True)
    if predictions is not None:
        labels, probs = _read_predictions(predictions)
    else:
        if checkpoint is None or data_dir is None:
            raise UsageError("eval needs --checkpoint and --data, or --predictions")
        model = HybridModel.load(checkpoint)
        samples = _load_split(data_dir, split)
        x, labels = stack(samples)
        probs = predict(model, x)
        _write_predictions(os.path.join(out, "predictions.csv"), [s.id for s in samples], labels, probs)
    report = metrics.evaluate(labels, probs)
    metrics.write_report(os.path.join(out, "report.txt"), report)
    metrics.write_confusion_csv(os.path.join(out, "confusion.csv"), report.cm)
    with open(os.path.join(out, "roc.svg"), "w") as fh:
        fh.write(metrics.roc_svg(metrics.roc_points(labels, probs), report.auc))
    return report


def cmd_report(run_dir: str) -> str:
    path = os.path.join(run_dir, "log.csv")
    if not os.path.exists(path):
        raise UsageError(f"no run log at {path}")
    rows = read_log(path)
    if not rows:
        raise UsageError(f"{path} has no epochs")
    epochs = [r.epoch for r in rows]
    series = {k: [getattr(r, k) for r in rows] for k in ("train_acc", "val_acc", "val_auc", "lr")}
    with open(os.path.join(run_dir, "curves.svg"), "w") as fh:
        fh.write(metrics.curves_svg(series, epochs))
    aucs = [r.val_auc if np.isfinite(r.val_auc) else -np.inf for r in rows]
    best = rows[int(np.argmax(aucs))]
    last = rows[-1]
    lines = [
        f"epochs = {len(rows)}",
        f"stages = {' -> '.join(dict.fromkeys(r.stage.value for r in rows))}",
        f"best_epoch = {best.epoch}",
        f"best_val_auc = {best.val_auc:.6f}",
        f"final_train_acc = {last.train_acc:.6f}",
        f"final_val_acc = {last.val_acc:.6f}",
        f"final_val_auc = {last.val_auc:.6f}",
        f"final_loss = {last.loss:.6f}",
    ]
    timing = os.path.join(run_dir, "timing.txt")
    if os.path.exists(timing):
        with open(timing) as fh:
            lines += [ln.strip() for ln in fh if ln.strip()]
    text = "\n".join(lines) + "\n"
    with open(os.path.join(run_dir, "summary.txt"), "w") as fh:
        fh.write(text)
    return text


# --- argument handling -----------------------------------------------------------

def parse_seed_range(text: str) -> list[int]:
    lo, sep, hi = text.partition("..")
    try:
        a, b = int(lo), int(hi if sep else lo)
    except ValueError as exc:
        raise UsageError(f"--seeds expects a..b, got {text!r}") from exc
    if b < a:
        raise UsageError(f"--seeds range is empty: {text!r}")
    return list(range(a, b + 1))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="plastinet", parents=[common], description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset as PGM + manifests")
    sub.add_parser("pretrain", parents=[common], help="surrogate rotation pretraining of the backbone")
    t = sub.add_parser("train", parents=[common], help="staged training run")
    t.add_argument("--data", help="dataset directory from gen-data (default: generate in memory)")
    t.add_argument("--no-pretrain", action="store_true")
    t.add_argument("--pretrained", help="checkpoint whose backbone initialises the run")
    t.add_argument("--epochs", type=int, help="cap on total training epochs across stages")
    t.add_argument("--seeds", help="a..b: run each seed into <out>/seed-N")
    t.add_argument("--workers", type=int, default=None)
    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or a predictions CSV")
    e.add_argument("--checkpoint")
    e.add_argument("--data")
    e.add_argument("--split", default="test")
    e.add_argument("--predictions", help="CSV with id,label,prob columns")
    r = sub.add_parser("report", parents=[common], help="curves SVG and summary for a run directory")
    r.add_argument("run_dir", nargs="?", help="defaults to --out")
    return p


def _train_one(cfg_text: str, out: str, data_dir, pretrain, epochs, pretrained) -> int:
    try:
        cmd_train(C.parse(cfg_text), out, data_dir, pretrain, epochs, pretrained)
    except NumericalAbort as exc:
        log.error("%s: %s", out, exc)
        return EXIT_NUMERIC
    return EXIT_OK


def _dispatch(args) -> int:
    cfg = _resolve_config(args) if args.verb != "report" else None
    if args.verb == "gen-data":
        cmd_gen_data(cfg, args.out)
    elif args.verb == "pretrain":
        cmd_pretrain(cfg, args.out)
    elif args.verb == "train":
        if args.epochs is not None and args.epochs < 0:
            raise UsageError("--epochs must be >= 0")
        if not args.seeds:
            cmd_train(cfg, args.out, args.data, not args.no_pretrain, args.epochs, args.pretrained)
            return EXIT_OK
        seeds = parse_seed_range(args.seeds)
        jobs = [(cfg.replace(seed=s).to_text(), os.path.join(args.out, f"seed-{s}"), args.data,
                 not args.no_pretrain, args.epochs, args.pretrained) for s in seeds]
        workers = args.workers or min(len(jobs), os.cpu_count() or 1)
        if workers <= 1:
            codes = [_train_one(*j) for j in jobs]
        else:
            with ProcessPoolExecutor(workers) as pool:
                codes = list(pool.map(_train_one, *zip(*jobs)))
        return max(codes)
    elif args.verb == "eval":
        rep = cmd_eval(args.out, args.checkpoint, args.data, args.split, args.predictions)
        print(f"auc = {metrics._fmt(rep.auc)}  accuracy = {metrics._fmt(rep.accuracy)}")
    elif args.verb == "report":
        print(cmd_report(args.run_dir or args.out), end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, IngestionError, DimensionError, TrainConfigError, SamplerError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
