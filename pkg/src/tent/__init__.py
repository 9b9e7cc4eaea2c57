"""Tensorized Encoder Transformer for multi-station temperature forecasting."""

from .model import ModelConfig, forward, init_params, multi_head, positional_encoding
from .training import TrainConfig, train

__all__ = [
    "ModelConfig",
    "TrainConfig",
    "forward",
    "init_params",
    "multi_head",
    "positional_encoding",
    "train",
]
__version__ = "0.1.0"
