"""Tensor storage, forward primitives and reverse-mode gradients."""

from csl_reid.numerics.gradcheck import grad_check
from csl_reid.numerics.ops import (
    add,
    batch_norm,
    concat,
    conv2d,
    global_avg_pool,
    linear,
    relu,
    softmax_cross_entropy,
    spatial_attention,
)
from csl_reid.numerics.tensor import BNState, ParamStore, ParamTensor, Tensor, default_dtype, precision

__all__ = [
    "BNState",
    "ParamStore",
    "ParamTensor",
    "Tensor",
    "add",
    "batch_norm",
    "concat",
    "conv2d",
    "default_dtype",
    "global_avg_pool",
    "grad_check",
    "linear",
    "precision",
    "relu",
    "softmax_cross_entropy",
    "spatial_attention",
]
