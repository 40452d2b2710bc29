"""Inverse-frequency weighted sampling with replacement.

Each sample of class ``c`` gets weight ``N / (2 N_c)`` so both classes carry
exactly half of the total mass.  Draws use a prefix-sum table and a binary
search over uniforms from the sampler's own PCG64 stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import stream


class SamplerError(ValueError):
    pass


def build_weights(labels) -> np.ndarray:
    labels = np.asarray(labels).astype(int)
    n = labels.size
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != n:
        raise SamplerError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise SamplerError("imbalance-aware weights need both classes present; use uniform sampling instead")
    return np.where(labels == 1, n / (2.0 * n_pos), n / (2.0 * n_neg))


def class_mass(weights, labels) -> dict[int, float]:
    weights = np.asarray(weights, dtype=np.float64)
    labels = np.asarray(labels)
    total = weights.sum()
    return {c: float(weights[labels == c].sum() / total) for c in (0, 1)}


@dataclass
class SamplerState:
    weights: np.ndarray
    cumulative: np.ndarray
    rng: np.random.Generator

    @classmethod
    def create(cls, weights, rng: np.random.Generator | None = None, seed: int = 0) -> "SamplerState":
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0 or np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise SamplerError("weights must be a non-empty vector of positive finite reals")
        return cls(weights, np.cumsum(weights), rng if rng is not None else stream(seed, "sampler"))

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])


def draw_epoch(state: SamplerState, epoch_len: int) -> np.ndarray:
    if epoch_len < 1:
        raise SamplerError("epoch_len must be >= 1")
    u = state.rng.random(epoch_len) * state.total
    idx = np.searchsorted(state.cumulative, u, side="right")
    # guards against u rounding up to exactly the total
    return np.minimum(idx, state.weights.size - 1)


def uniform_epoch(n: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffled pass over all indices, the no-reweighting baseline."""
    return rng.permutation(n)
