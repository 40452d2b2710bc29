"""Staged-plasticity training of a small CNN classifier, written against numpy.

Focal loss with label smoothing, an imbalance-aware sampler, one-cycle and
warm-restart schedules, and a Warmup / SelectiveFineTune freezing policy.
The convolution kernels come from a compiled extension when it is built
and from a numpy fallback otherwise (see :mod:`plastinet.kernels`).
"""

from .kernels import BACKEND
from .loss import LossConfig, batch_loss, focal, joint_loss, smooth_label
from .metrics import ConfusionMatrix, EvalReport, auc_roc, evaluate
from .model import HybridModel, Level, ModelConfig
from .plasticity import Stage, StagePlan, TrainConfig, pretrain_backbone, train
from .sampler import SamplerState, build_weights, draw_epoch

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "LossConfig", "batch_loss", "focal", "joint_loss", "smooth_label",
    "ConfusionMatrix", "EvalReport", "auc_roc", "evaluate",
    "HybridModel", "Level", "ModelConfig",
    "Stage", "StagePlan", "TrainConfig", "pretrain_backbone", "train",
    "SamplerState", "build_weights", "draw_epoch",
]
