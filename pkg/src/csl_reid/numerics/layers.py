"""Parameter bundles for convolution and linear layers."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from csl_reid.numerics import ops
from csl_reid.numerics.tensor import ParamStore, ParamTensor, Tensor, default_dtype


@dataclass
class ConvParams:
    weight: ParamTensor
    bias: Optional[ParamTensor]
    stride: int = 1
    pad: int = 0

    def __call__(self, x) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


@dataclass
class LinearParams:
    weight: ParamTensor
    bias: Optional[ParamTensor]

    def __call__(self, x) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Draw from ``U(-a, a)`` with ``a = sqrt(1 / fan_in)``."""
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


def init_conv(
    store: ParamStore,
    name: str,
    c_out: int,
    c_in: int,
    k: int,
    rng: np.random.Generator,
    stride: int = 1,
    bias: bool = True,
) -> ConvParams:
    weight = store.param(f"{name}.weight", uniform_fan_in(rng, (c_out, c_in, k, k), c_in * k * k))
    bias_param = store.param(f"{name}.bias", np.zeros(c_out), decay=False) if bias else None
    return ConvParams(weight, bias_param, stride=stride, pad=(k - 1) // 2)


def init_linear(
    store: ParamStore, name: str, d_out: int, d_in: int, rng: np.random.Generator, bias: bool = True
) -> LinearParams:
    weight = store.param(f"{name}.weight", uniform_fan_in(rng, (d_out, d_in), d_in))
    bias_param = store.param(f"{name}.bias", np.zeros(d_out), decay=False) if bias else None
    return LinearParams(weight, bias_param)
