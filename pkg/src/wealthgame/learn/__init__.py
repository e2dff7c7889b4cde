"""Trainable function approximators, reverse-mode gradients, Adam, and the
two-stage training scheme (return estimation, deep FBSDE solve)."""

from .adam import AdamState, adam_step
from .autodiff import Var, gradient
from .nets import MlpParams, RnnParams, init_mlp, init_rnn, mlp_forward, rnn_forward
from .training import (
    Stage1Result,
    Stage2Result,
    TrainConfig,
    ensemble_estimate,
    train_stage1,
    train_stage2,
)

__all__ = [
    "AdamState",
    "adam_step",
    "Var",
    "gradient",
    "MlpParams",
    "RnnParams",
    "init_mlp",
    "init_rnn",
    "mlp_forward",
    "rnn_forward",
    "TrainConfig",
    "Stage1Result",
    "Stage2Result",
    "train_stage1",
    "train_stage2",
    "ensemble_estimate",
]
