"""Per-step learning-rate schedules as immutable state values.

``lr_at(state)`` reads the rate for the current step and ``advance(state)``
returns the state for the next one.  Warm-restart bookkeeping (start and
length of the current cycle) is carried in the state rather than recomputed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace


class ScheduleKind(str, enum.Enum):
    COSINE_WARM_RESTARTS = "cosine"
    ONE_CYCLE = "onecycle"
    CONSTANT = "constant"


class ScheduleExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class CosineWarmRestarts:
    eta_min: float
    eta_max: float
    T_0: float
    T_mult: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta_min <= self.eta_max:
            raise ValueError("need 0 <= eta_min <= eta_max")
        if self.T_0 <= 0 or self.T_mult < 1.0:
            raise ValueError("need T_0 > 0 and T_mult >= 1")


@dataclass(frozen=True)
class OneCycle:
    max_lr: float
    total_steps: int
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if self.total_steps < 2:
            raise ValueError("one-cycle needs total_steps >= 2")
        if not 0.0 < self.pct_start < 1.0:
            raise ValueError("pct_start must lie in (0, 1)")
        if self.div_factor <= 1.0 or self.final_div_factor <= 1.0:
            raise ValueError("div factors must exceed 1")
        if not self.pct_start * self.total_steps < self.total_steps - 1:
            raise ValueError("warmup fraction leaves no decay steps")

    @property
    def peak_step(self) -> float:
        return self.pct_start * self.total_steps


@dataclass(frozen=True)
class Constant:
    lr: float


@dataclass(frozen=True)
class ScheduleState:
    params: CosineWarmRestarts | OneCycle | Constant
    step: int = 0
    cycle_start: float = 0.0
    cycle_len: float = 0.0

    @property
    def kind(self) -> ScheduleKind:
        return {
            CosineWarmRestarts: ScheduleKind.COSINE_WARM_RESTARTS,
            OneCycle: ScheduleKind.ONE_CYCLE,
            Constant: ScheduleKind.CONSTANT,
        }[type(self.params)]


def start(params) -> ScheduleState:
    if isinstance(params, CosineWarmRestarts):
        return ScheduleState(params, 0, 0.0, float(params.T_0))
    return ScheduleState(params)


def _cos_anneal(lo: float, hi: float, frac: float) -> float:
    """Half-cosine from ``hi`` at frac=0 down to ``lo`` at frac=1."""
    return lo + 0.5 * (hi - lo) * (1.0 + math.cos(math.pi * frac))


def lr_at(state: ScheduleState) -> float:
    p = state.params
    if isinstance(p, Constant):
        return p.lr
    if isinstance(p, CosineWarmRestarts):
        t_cur = state.step - state.cycle_start
        return _cos_anneal(p.eta_min, p.eta_max, t_cur / state.cycle_len)
    if state.step >= p.total_steps:
        raise ScheduleExhausted(f"one-cycle schedule has {p.total_steps} steps; step {state.step} requested")
    initial = p.max_lr / p.div_factor
    final = p.max_lr / p.final_div_factor
    peak = p.peak_step
    if state.step <= peak:
        return _cos_anneal(p.max_lr, initial, state.step / peak)
    return _cos_anneal(final, p.max_lr, (state.step - peak) / (p.total_steps - 1 - peak))


def advance(state: ScheduleState) -> ScheduleState:
    nxt = replace(state, step=state.step + 1)
    p = state.params
    if isinstance(p, CosineWarmRestarts):
        start_, length = state.cycle_start, state.cycle_len
        while nxt.step >= start_ + length:
            start_ += length
            length *= p.T_mult
        nxt = replace(nxt, cycle_start=start_, cycle_len=length)
    return nxt


def at_step(params, step: int) -> ScheduleState:
    state = start(params)
    for _ in range(step):
        state = advance(state)
    return state
