"""Flat ``key = value`` run configuration.

Every knob a command needs lives in one namespace.  Unknown keys are
rejected with the line they appeared on, and the persisted copy always
carries every default so that a run directory describes itself.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields

from .data import DatasetSpec, Difficulty
from .model import ModelConfig
from .plasticity import StagePlan, TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path or '<config>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_alpha(text: str):
    return None if text.lower() == "auto" else float(text)


def _parse_opt_int(text: str):
    return None if text.lower() in ("none", "auto") else int(text)


@dataclass(frozen=True)
class RunConfig:
    # data
    n_train: int = 2000
    n_val: int = 400
    n_test: int = 120
    positive_fraction: float = 0.5
    label_noise: float = 0.0
    difficulty: str = "hard"
    # model
    n_high: int | None = None
    # surrogate pretraining
    pretrain_epochs: int = 5
    pretext_n: int = 2000
    pretrain_lr: float = 0.02
    # loss
    loss: str = "focal"
    alpha: float | None = None
    gamma: float = 2.0
    epsilon: float = 0.1
    # sampling and stages
    sampler: str = "balanced"
    staged: bool = True
    warmup_max_epochs: int = 5
    patience: int = 2
    min_delta: float = 1e-3
    finetune_epochs: int = 35
    # schedule and optimizer
    schedule: str = "onecycle"
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

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(self.n_train, self.n_val, self.n_test, self.positive_fraction, self.label_noise,
                           Difficulty(self.difficulty), self.seed)

    def model_config(self) -> ModelConfig:
        return ModelConfig(n_high=self.n_high)

    def train_config(self, max_epochs: int | None = None) -> TrainConfig:
        plan = StagePlan(self.warmup_max_epochs, self.patience, self.min_delta, self.finetune_epochs)
        return TrainConfig(
            plan=plan, staged=self.staged, loss=self.loss, alpha=self.alpha, gamma=self.gamma, epsilon=self.epsilon,
            sampler=self.sampler, schedule=self.schedule, max_lr=self.max_lr, pct_start=self.pct_start,
            div_factor=self.div_factor, final_div_factor=self.final_div_factor, eta_min=self.eta_min,
            cosine_t0_epochs=self.cosine_t0_epochs, cosine_t_mult=self.cosine_t_mult, batch_size=self.batch_size,
            momentum=self.momentum, weight_decay=self.weight_decay, seed=self.seed, max_epochs=max_epochs,
        )

    def validate(self) -> "RunConfig":
        """Build every derived object once so bad values fail before any work starts."""
        self.dataset_spec()
        self.model_config()
        self.train_config()
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "auto"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.blake2b(self.to_text().encode(), digest_size=8).hexdigest()


_PARSERS = {}
for _f in fields(RunConfig):
    _t = str(_f.type)
    if _f.name == "alpha":
        _PARSERS[_f.name] = _parse_alpha
    elif _t.startswith("int | None"):
        _PARSERS[_f.name] = _parse_opt_int
    elif _t == "bool":
        _PARSERS[_f.name] = _parse_bool
    elif _t == "int":
        _PARSERS[_f.name] = int
    elif _t == "float":
        _PARSERS[_f.name] = float
    else:
        _PARSERS[_f.name] = str


def parse(text: str, base: RunConfig | None = None, path=None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, path) from exc
    try:
        return dataclasses.replace(base or RunConfig(), **values).validate()
    except ValueError as exc:
        raise ConfigError(str(exc), None, path) from exc


def load(path) -> RunConfig:
    with open(path) as fh:
        return parse(fh.read(), path=path)


def save(path, cfg: RunConfig) -> None:
    with open(path, "w") as fh:
        fh.write(cfg.to_text())
