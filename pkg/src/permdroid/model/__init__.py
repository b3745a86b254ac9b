from .checkpoint import load_checkpoint, save_checkpoint
from .config import LAST_HIDDEN_MEAN, POOLER, ModelConfig, TrainConfig, load_configs
from .encoder import backward, cross_entropy, forward, init_params, value_and_grad
from .optim import AdamWState, adamw_step, lr_schedule
from .training import (
    Prediction,
    PretrainResult,
    TrainResult,
    evaluate,
    predict,
    predict_proba,
    pretrain_mlm,
    train,
)


def loss(logits, labels) -> float:
    """Mean cross-entropy of ``logits`` against integer ``labels``."""
    return cross_entropy(logits, labels)[0]


__all__ = [
    "LAST_HIDDEN_MEAN",
    "POOLER",
    "AdamWState",
    "ModelConfig",
    "Prediction",
    "PretrainResult",
    "TrainConfig",
    "TrainResult",
    "adamw_step",
    "backward",
    "evaluate",
    "forward",
    "init_params",
    "load_checkpoint",
    "load_configs",
    "loss",
    "lr_schedule",
    "predict",
    "predict_proba",
    "pretrain_mlm",
    "save_checkpoint",
    "train",
    "value_and_grad",
]
