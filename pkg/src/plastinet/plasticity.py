"""Two-stage selective-plasticity training.

Stage one (warmup) trains only the logistic head on frozen features.  Once
validation loss stops improving, stage two unfreezes the high-level conv
blocks alongside the head; the low-level blocks stay frozen for the whole
run.  The module also holds the SGD optimizer and the rotation-pretext
pretraining used to give the backbone non-random starting features.
"""

from __future__ import annotations

import csv
import enum
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import loss as losses
from . import metrics
from . import schedule as sched
from .data import Sample, stack
from .model import HybridModel, Level
from .rng import stream
from .sampler import SamplerState, build_weights, draw_epoch, uniform_epoch
from .tensorcore import GradPair

log = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "stage", "train_acc", "val_acc", "val_auc", "lr", "loss", "val_loss", "frozen_checksums"]


class Stage(str, enum.Enum):
    WARMUP = "Warmup"
    FINETUNE = "SelectiveFineTune"
    FULL = "FullTrain"  # single-stage baseline, every group trainable


class NumericalAbort(RuntimeError):
    pass


class TrainConfigError(ValueError):
    pass


_FROZEN = {
    Stage.WARMUP: {Level.LOW: True, Level.HIGH: True, Level.HEAD: False},
    Stage.FINETUNE: {Level.LOW: True, Level.HIGH: False, Level.HEAD: False},
    Stage.FULL: {Level.LOW: False, Level.HIGH: False, Level.HEAD: False},
}


def apply_stage(model: HybridModel, stage) -> None:
    try:
        mask = _FROZEN[Stage(stage)]
    except ValueError as exc:
        raise ValueError(f"unknown stage {stage!r}") from exc
    for g in model.groups:
        g.frozen = mask[g.level]


@dataclass(frozen=True)
class StagePlan:
    warmup_max_epochs: int = 5
    patience: int = 2
    min_delta: float = 1e-3
    finetune_epochs: int = 35

    def __post_init__(self):
        if self.warmup_max_epochs < 1 or self.patience < 1 or self.min_delta < 0 or self.finetune_epochs < 0:
            raise TrainConfigError("need warmup_max_epochs >= 1, patience >= 1, min_delta >= 0, finetune_epochs >= 0")


@dataclass
class TrainLogRow:
    epoch: int
    stage: Stage
    train_acc: float
    val_acc: float
    val_auc: float
    lr: float
    loss: float
    val_loss: float
    frozen_checksums: dict[str, int]

    def to_csv(self) -> list[str]:
        sums = ";".join(f"{k}={v:016x}" for k, v in self.frozen_checksums.items())
        return [str(self.epoch), Stage(self.stage).value] + [
            f"{getattr(self, k):.6f}" for k in ("train_acc", "val_acc", "val_auc", "lr", "loss", "val_loss")
        ] + [sums]

    @classmethod
    def from_csv(cls, row: dict) -> "TrainLogRow":
        sums = {}
        if row["frozen_checksums"]:
            for item in row["frozen_checksums"].split(";"):
                k, v = item.split("=")
                sums[k] = int(v, 16)
        return cls(int(row["epoch"]), Stage(row["stage"]), *(float(row[k]) for k in
                   ("train_acc", "val_acc", "val_auc", "lr", "loss", "val_loss")), sums)


def write_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow(r.to_csv())


def read_log(path) -> list[TrainLogRow]:
    with open(path, newline="") as fh:
        return [TrainLogRow.from_csv(r) for r in csv.DictReader(fh)]


def should_transition(history, plan: StagePlan) -> bool:
    """Patience on validation loss, or the warmup epoch cap."""
    if not history:
        raise ValueError("empty history")
    if len(history) >= plan.warmup_max_epochs:
        return True
    best = history[0].val_loss
    stale = 0
    for row in history[1:]:
        if best - row.val_loss >= plan.min_delta:
            best = row.val_loss
            stale = 0
        else:
            stale += 1
            best = min(best, row.val_loss)
    return stale >= plan.patience


# --- optimizer -------------------------------------------------------------------

def sgd_step(params, lr: float, momentum: float = 0.0, weight_decay: float = 0.0, velocity=None) -> None:
    """``v <- mu v + g + lambda theta; theta <- theta - lr v``, then zero the grads."""
    for p in params:
        g = p.grad + weight_decay * p.value if weight_decay else p.grad
        if momentum:
            v = velocity.setdefault(p.name, np.zeros_like(p.value))
            v *= momentum
            v += g
            g = v
        p.value -= lr * g
        p.zero_grad()


@dataclass
class SGD:
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params, lr: float) -> None:
        sgd_step(params, lr, self.momentum, self.weight_decay, self.velocity)

    def reset(self) -> None:
        self.velocity.clear()

    def buffers_zero(self) -> bool:
        return all(not np.any(v) for v in self.velocity.values())


# --- training ------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    plan: StagePlan = StagePlan()
    staged: bool = True
    loss: str = "focal"  # focal | bce
    alpha: float | None = None  # None -> negative-class fraction of the training labels
    gamma: float = 2.0
    epsilon: float = 0.1
    sampler: str = "balanced"  # balanced | uniform
    schedule: str = "onecycle"  # onecycle | cosine | constant
    max_lr: float = 0.1
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    eta_min: float = 0.0
    cosine_t0_epochs: float = 2.0
    cosine_t_mult: float = 2.0
    batch_size: int = 32
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    max_epochs: int | None = None  # hard cap on total epochs across stages

    def __post_init__(self):
        if self.loss not in ("focal", "bce"):
            raise TrainConfigError(f"unknown loss {self.loss!r}")
        if self.sampler not in ("balanced", "uniform"):
            raise TrainConfigError(f"unknown sampler {self.sampler!r}")
        if self.schedule not in ("onecycle", "cosine", "constant"):
            raise TrainConfigError(f"unknown schedule {self.schedule!r}")
        if self.batch_size < 1:
            raise TrainConfigError("batch_size must be >= 1")


@dataclass
class TrainResult:
    rows: list[TrainLogRow]
    best_state: dict[str, np.ndarray]
    best_epoch: int
    best_auc: float
    loss_config: losses.LossConfig | None


def predict(model: HybridModel, images: np.ndarray, batch: int = 256) -> np.ndarray:
    if len(images) == 0:
        return np.zeros(0)
    return np.concatenate([model.forward(images[i:i + batch]) for i in range(0, len(images), batch)])


def _schedule_params(cfg: TrainConfig, steps_per_epoch: int, epochs: int):
    if cfg.schedule == "constant":
        return sched.Constant(cfg.max_lr)
    if cfg.schedule == "cosine":
        return sched.CosineWarmRestarts(cfg.eta_min, cfg.max_lr, cfg.cosine_t0_epochs * steps_per_epoch, cfg.cosine_t_mult)
    return sched.OneCycle(cfg.max_lr, max(2, steps_per_epoch * epochs), cfg.pct_start, cfg.div_factor,
                          cfg.final_div_factor)


def train(model: HybridModel, train_set: list[Sample], val_set: list[Sample], cfg: TrainConfig = TrainConfig(),
          on_stage_start: Callable | None = None) -> TrainResult:
    """Run warmup then selective fine-tuning (or one full-training stage when ``cfg.staged`` is off)."""
    if not train_set or not val_set:
        raise TrainConfigError("train and validation splits must be non-empty")
    x_tr, y_tr = stack(train_set)
    x_val, y_val = stack(val_set)
    plan = cfg.plan
    alpha = cfg.alpha if cfg.alpha is not None else losses.balanced_alpha(y_tr)
    alpha = min(max(alpha, 1e-6), 1 - 1e-6)
    loss_cfg = losses.LossConfig(alpha=alpha, gamma=cfg.gamma, epsilon=cfg.epsilon)
    per_sample = losses.joint_loss if cfg.loss == "focal" else losses.bce_loss

    rng = stream(cfg.seed, "sampler")
    sampler = SamplerState.create(build_weights(y_tr), rng=rng) if cfg.sampler == "balanced" else None
    n = len(train_set)
    steps_per_epoch = -(-n // cfg.batch_size)
    budget = plan.warmup_max_epochs + plan.finetune_epochs
    if cfg.max_epochs is not None:
        budget = min(budget, cfg.max_epochs)
    optim = SGD(cfg.momentum, cfg.weight_decay)
    sched_params = _schedule_params(cfg, steps_per_epoch, plan.warmup_max_epochs + plan.finetune_epochs)
    sstate = sched.start(sched_params)

    stage = Stage.WARMUP if cfg.staged else Stage.FULL
    rows: list[TrainLogRow] = []
    stage_rows: list[TrainLogRow] = []
    finetune_done = 0
    best_state, best_epoch, best_auc = model.state(), 0, -np.inf

    def enter(new_stage):
        nonlocal sstate
        apply_stage(model, new_stage)
        model.zero_grad()
        optim.reset()
        if cfg.schedule == "cosine":
            sstate = sched.start(sched_params)
        if on_stage_start is not None:
            on_stage_start(new_stage, model, optim)

    if budget > 0:
        enter(stage)
    for epoch in range(1, budget + 1):
        order = draw_epoch(sampler, n) if sampler is not None else uniform_epoch(n, rng)
        params = model.trainable_parameters()
        total_loss, correct, lr = 0.0, 0, 0.0
        for b, start_ in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start_:start_ + cfg.batch_size]
            probs = model.forward(x_tr[idx])
            batch_loss, dlogit = losses.batch_loss(y_tr[idx], probs, loss_cfg, per_sample)
            if not np.isfinite(batch_loss):
                raise NumericalAbort(f"non-finite loss at epoch {epoch}, batch {b} ({stage.value})")
            model.backward_logits(dlogit)
            lr = sched.lr_at(sstate)
            optim.step(params, lr)
            sstate = sched.advance(sstate)
            total_loss += batch_loss * len(idx)
            correct += int(np.sum((probs >= 0.5) == (y_tr[idx] == 1)))
        val_probs = predict(model, x_val)
        val_loss, _ = losses.batch_loss(y_val, val_probs, loss_cfg, per_sample)
        try:
            val_auc = metrics.auc_roc(y_val, val_probs)
        except metrics.UndefinedMetricError:
            val_auc = float("nan")
        row = TrainLogRow(
            epoch=epoch, stage=stage, train_acc=correct / n,
            val_acc=float(np.mean((val_probs >= 0.5) == (y_val == 1))), val_auc=val_auc, lr=lr,
            loss=total_loss / n, val_loss=val_loss, frozen_checksums=model.checksums(),
        )
        rows.append(row)
        stage_rows.append(row)
        log.info("epoch %d %s loss=%.4f val_auc=%.4f lr=%.2e", epoch, stage.value, row.loss, val_auc, lr)
        if val_auc > best_auc:
            best_state, best_epoch, best_auc = model.state(), epoch, val_auc
        if stage is Stage.WARMUP and should_transition(stage_rows, plan):
            stage = Stage.FINETUNE
            stage_rows = []
            enter(stage)
        elif stage is Stage.FINETUNE:
            finetune_done += 1
            if finetune_done >= plan.finetune_epochs:
                break
    return TrainResult(rows, best_state, best_epoch, float(best_auc), loss_cfg)


# --- pretext pretraining -------------------------------------------------------

@dataclass
class PretrainResult:
    accuracies: list[float]
    losses: list[float]

    @property
    def final_accuracy(self) -> float:
        return self.accuracies[-1] if self.accuracies else float("nan")


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def pretrain_backbone(model: HybridModel, pretext, epochs: int, max_lr: float = 0.02, batch_size: int = 32,
                      momentum: float = 0.9, weight_decay: float = 1e-4, seed: int = 0) -> PretrainResult:
    """Train all backbone blocks on a 4-way rotation task through a throwaway linear head."""
    result = PretrainResult([], [])
    if epochs <= 0:
        return result
    images = np.stack([img for img, _ in pretext])
    labels = np.array([k for _, k in pretext], dtype=int)
    n, d = len(labels), model.feature_dim
    rng = stream(seed, "pretrain")
    head_w = GradPair("pretext.w", rng.normal(0.0, np.sqrt(2.0 / d), size=(d, 4)))
    head_b = GradPair("pretext.b", np.zeros(4))
    saved = {g.name: g.frozen for g in model.groups}
    model.set_frozen(low=False, high=False, head=True)
    params = [p for g in model.groups if g.level is not Level.HEAD for p in g.params] + [head_w, head_b]
    optim = SGD(momentum, weight_decay)
    steps = -(-n // batch_size)
    sstate = sched.start(sched.OneCycle(max_lr, max(2, steps * epochs)))
    try:
        for _ in range(epochs):
            order = rng.permutation(n)
            correct, total = 0, 0.0
            for s in range(0, n, batch_size):
                idx = order[s:s + batch_size]
                z = model.features(images[idx])
                probs = _softmax(z @ head_w.value + head_b.value)
                m = len(idx)
                total += -np.log(np.maximum(probs[np.arange(m), labels[idx]], 1e-300)).sum()
                correct += int(np.sum(probs.argmax(1) == labels[idx]))
                dlogits = probs.copy()
                dlogits[np.arange(m), labels[idx]] -= 1.0
                dlogits /= m
                head_w.grad += z.T @ dlogits
                head_b.grad += dlogits.sum(0)
                model.backward_features(dlogits @ head_w.value.T)
                optim.step(params, sched.lr_at(sstate))
                sstate = sched.advance(sstate)
            if not np.isfinite(total):
                raise NumericalAbort("non-finite pretext loss")
            result.accuracies.append(correct / n)
            result.losses.append(total / n)
            log.info("pretext epoch acc=%.4f loss=%.4f", correct / n, total / n)
    finally:
        for name, flag in saved.items():
            model.group(name).frozen = flag
        model.zero_grad()
    return result
