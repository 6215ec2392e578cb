"""Small CPU neural-network toolkit: layers, ResNet/MLP, AdamW, training loop."""

from .checkpoint import (load_checkpoint, read_training_log, save_checkpoint, state_from_bytes,
                         state_to_bytes, write_training_log)
from .layers import (BatchNorm2d, Conv2d, GlobalAvgPool, Linear, ReLU, Sequential, cross_entropy,
                     softmax)
from .models import MLP, ResidualBlock, ResNet, ResNetSpec, count_params
from .optim import AdamWConfig, PlateauScheduler, adamw_step, plateau_schedule
from .params import ParamStore
from .train import EpochRecord, TrainConfig, TrainResult, accuracy, train

__all__ = [
    "AdamWConfig", "BatchNorm2d", "Conv2d", "EpochRecord", "GlobalAvgPool", "Linear", "MLP",
    "ParamStore", "PlateauScheduler", "ReLU", "ResNet", "ResNetSpec", "ResidualBlock", "Sequential",
    "TrainConfig", "TrainResult", "accuracy", "adamw_step", "count_params", "cross_entropy",
    "load_checkpoint", "plateau_schedule", "read_training_log", "save_checkpoint", "softmax",
    "state_from_bytes", "state_to_bytes", "train", "write_training_log",
]
