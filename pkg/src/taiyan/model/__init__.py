"""Decoder-only transformer: configuration, parameters, forward/backward,
and greedy decoding."""

from .alibi import alibi_bias, alibi_slopes
from .config import BadConfig, ModelConfig, default_d_ff, desk_config, param_count, full_scale_config
from .generate import EmptyMask, EmptyPrompt, generate
from .net import (
    DecodeSession,
    SequenceTooLong,
    backward_batch,
    forward,
    forward_batch,
    rmsnorm,
    swiglu,
)
from .params import (
    BadParameters,
    Parameters,
    init_parameters,
    param_shapes,
    validate_parameters,
    zeros_parameters,
)

__all__ = [
    "ModelConfig",
    "BadConfig",
    "default_d_ff",
    "desk_config",
    "full_scale_config",
    "param_count",
    "alibi_slopes",
    "alibi_bias",
    "Parameters",
    "BadParameters",
    "param_shapes",
    "init_parameters",
    "zeros_parameters",
    "validate_parameters",
    "forward",
    "forward_batch",
    "backward_batch",
    "rmsnorm",
    "swiglu",
    "DecodeSession",
    "SequenceTooLong",
    "generate",
    "EmptyMask",
    "EmptyPrompt",
]
