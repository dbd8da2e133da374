"""From-scratch CNN stack: layers, Adam, schedule, model and training loop."""

from .layers import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    leaky_relu,
    maxpool_backward,
    maxpool_forward,
    softmax_xent,
    softmax_xent_batch,
)
from .model import Architecture, Model, ModelConfig, load_checkpoint, save_checkpoint
from .optim import AdamState, TrainSchedule, adam_init, adam_step, scheduled_lr
from .training import FrameDataset, predict_scores, train_model

__all__ = [
    "conv2d_backward", "conv2d_forward", "dense_backward", "dense_forward", "leaky_relu",
    "maxpool_backward", "maxpool_forward", "softmax_xent", "softmax_xent_batch",
    "Architecture", "Model", "ModelConfig", "load_checkpoint", "save_checkpoint",
    "AdamState", "TrainSchedule", "adam_init", "adam_step", "scheduled_lr",
    "FrameDataset", "predict_scores", "train_model",
]
