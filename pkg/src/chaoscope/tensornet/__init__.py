"""A small numpy network engine: conv / pool / dense layers, Adam, checkpoints."""
from .checkpoint import CheckpointError, dumps_model, load_model, loads_model, save_model
from .layers import (
    Conv2D,
    Dense,
    GlobalMaxPool,
    ReLU,
    conv2d_backward,
    conv2d_forward,
    cross_entropy,
    dense_forward,
    global_max_pool,
    relu,
    sigmoid,
)
from .model import Model, ModelSpec, backward, build_preset, forward
from .optim import AdamState, adam_update
from .train import TrainingCollapsedError, TrainingConfig, TrainingDivergedError, fit_model

__all__ = [
    "AdamState", "CheckpointError", "Conv2D", "Dense", "GlobalMaxPool", "Model", "ModelSpec",
    "ReLU", "TrainingCollapsedError", "TrainingConfig", "TrainingDivergedError", "adam_update", "backward",
    "build_preset", "conv2d_backward", "conv2d_forward", "cross_entropy", "dense_forward",
    "dumps_model", "fit_model", "forward", "global_max_pool", "load_model", "loads_model",
    "relu", "save_model", "sigmoid",
]
