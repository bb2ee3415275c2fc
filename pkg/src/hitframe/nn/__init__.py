from .autograd import ShapeError, Tensor, softmax, relu, layer_norm, dropout
from .gradcheck import grad_check
from .layers import (
    ConfigError,
    MissingRunningStatsError,
    affine,
    conv_block,
    encoder_layer,
    multi_head_attention,
)
from .losses import EmptyMaskError, LabelError, masked_cross_entropy, softmax_cross_entropy
from .optim import AdamState, LrSchedule, adam_step

__all__ = [
    "AdamState",
    "ConfigError",
    "EmptyMaskError",
    "LabelError",
    "LrSchedule",
    "MissingRunningStatsError",
    "ShapeError",
    "Tensor",
    "adam_step",
    "affine",
    "conv_block",
    "dropout",
    "encoder_layer",
    "grad_check",
    "layer_norm",
    "masked_cross_entropy",
    "multi_head_attention",
    "relu",
    "softmax",
    "softmax_cross_entropy",
]
