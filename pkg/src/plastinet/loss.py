"""Focal loss with label smoothing, and its analytic gradient.

All functions accept scalars or numpy arrays and broadcast elementwise.
Probabilities are clamped to ``[floor, 1 - floor]`` before any logarithm;
the clamp is part of the loss, so the returned logit gradient is the exact
derivative of the clamped composition (zero where the clamp is active).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorcore import sigmoid


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.5
    gamma: float = 2.0
    epsilon: float = 0.1
    prob_floor: float = 1e-7

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.prob_floor < 0.5:
            raise ValueError(f"prob_floor must lie in (0, 0.5), got {self.prob_floor}")


def balanced_alpha(labels) -> float:
    """Negative-class fraction, used as the default positive-class weight."""
    labels = np.asarray(labels)
    return float((labels == 0).sum() / labels.size)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _clamp(yhat, floor):
    return np.clip(np.asarray(yhat, dtype=np.float64), floor, 1.0 - floor)


def bce(y, yhat, prob_floor: float = 1e-7):
    p = _clamp(yhat, prob_floor)
    y = np.asarray(y, dtype=np.float64)
    return _out(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def p_t(y, yhat):
    y = np.asarray(y)
    yhat = np.asarray(yhat, dtype=np.float64)
    return _out(np.where(y == 1, yhat, 1.0 - yhat))


def focal(y, yhat, cfg: LossConfig):
    """Single-alpha focal loss on hard labels: ``-alpha (1-p_t)^gamma ln p_t``."""
    pt = np.asarray(p_t(y, _clamp(yhat, cfg.prob_floor)))
    return _out(-cfg.alpha * (1.0 - pt) ** cfg.gamma * np.log(pt))


def smooth_label(y, epsilon: float):
    return _out(np.asarray(y, dtype=np.float64) * (1.0 - epsilon) + epsilon / 2.0)


def _soft_focal(t, p, cfg: LossConfig):
    a, g = cfg.alpha, cfg.gamma
    return -(t * a * (1.0 - p) ** g * np.log(p) + (1.0 - t) * (1.0 - a) * p ** g * np.log1p(-p))


def _soft_focal_dlogit(t, p, cfg: LossConfig):
    # d/dz with dp/dz = p(1-p) folded in, so no negative powers appear
    a, g = cfg.alpha, cfg.gamma
    q = 1.0 - p
    pos = t * a * (q ** (g + 1.0) - g * p * q ** g * np.log(p))
    neg = (1.0 - t) * (1.0 - a) * (g * q * p ** g * np.log(q) - p ** (g + 1.0))
    return -(pos + neg)


def joint_loss(y, yhat, cfg: LossConfig):
    """Focal loss against the smoothed target; returns ``(loss, dloss_dlogit)``.

    ``yhat`` is a sigmoid output.  The positive term carries ``alpha`` and the
    negative term ``1 - alpha``.
    """
    t = np.asarray(smooth_label(y, cfg.epsilon))
    raw = np.asarray(yhat, dtype=np.float64)
    p = _clamp(raw, cfg.prob_floor)
    loss = _soft_focal(t, p, cfg)
    inside = (raw > cfg.prob_floor) & (raw < 1.0 - cfg.prob_floor)
    grad = np.where(inside, _soft_focal_dlogit(t, p, cfg), 0.0)
    return _out(loss), _out(grad)


def joint_loss_from_logit(y, logit, cfg: LossConfig):
    return joint_loss(y, sigmoid(np.asarray(logit, dtype=np.float64)), cfg)


def bce_loss(y, yhat, cfg: LossConfig | None = None):
    """Plain BCE with its logit gradient, the ablation counterpart of :func:`joint_loss`."""
    floor = cfg.prob_floor if cfg is not None else 1e-7
    raw = np.asarray(yhat, dtype=np.float64)
    loss = bce(y, raw, floor)
    inside = (raw > floor) & (raw < 1.0 - floor)
    grad = np.where(inside, raw - np.asarray(y, dtype=np.float64), 0.0)
    return loss, _out(grad)


def batch_loss(ys, yhats, cfg: LossConfig, per_sample=joint_loss):
    """Mean loss over the batch and the per-sample logit gradients scaled by 1/N."""
    ys = np.asarray(ys, dtype=np.float64).ravel()
    yhats = np.asarray(yhats, dtype=np.float64).ravel()
    if ys.size == 0:
        raise ValueError("batch_loss needs at least one sample")
    if ys.size != yhats.size:
        raise ValueError(f"label/prediction length mismatch: {ys.size} vs {yhats.size}")
    losses, grads = per_sample(ys, yhats, cfg)
    n = ys.size
    return float(np.mean(losses)), np.asarray(grads) / n
