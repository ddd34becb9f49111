from .init import conv_fan_in, he_init
from .layers import (
    BN_EPSILON,
    BN_MOMENTUM,
    BatchNormParams,
    ConvParams,
    avg_pool,
    batch_norm,
    concat_channels,
    conv2d,
    conv_output_size,
    global_avg_pool,
    linear,
    max_pool,
    relu,
    slice_channels,
)
from .module import FeatureModel, Mode, Module, Parameter, check_mode

__all__ = [
    "BN_EPSILON",
    "BN_MOMENTUM",
    "BatchNormParams",
    "ConvParams",
    "FeatureModel",
    "Mode",
    "Module",
    "Parameter",
    "avg_pool",
    "batch_norm",
    "check_mode",
    "concat_channels",
    "conv2d",
    "conv_fan_in",
    "conv_output_size",
    "global_avg_pool",
    "he_init",
    "linear",
    "max_pool",
    "relu",
    "slice_channels",
]
