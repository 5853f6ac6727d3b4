"""Pixel-level color transformation.

Two 1x1 stages project an image onto a learned color space: a per-stream
first stage (conv, batch norm, ReLU) and a second conv shared by both
streams. The IR stream exists only in the visible/infrared regime.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from csl_reid.config import BN_EPS, BN_MOMENTUM, PCT_HIDDEN, Modality, Regime
from csl_reid.numerics import ops
from csl_reid.numerics.layers import ConvParams, init_conv
from csl_reid.numerics.tensor import BNState, ParamStore, Tensor

logger = logging.getLogger(__name__)


@dataclass
class PctParams:
    c_in_rgb: ConvParams
    c_in_ir: ConvParams
    bn_rgb: BNState
    bn_ir: BNState
    c_x: ConvParams
    regime: Regime = Regime.VI

    @property
    def hidden(self) -> int:
        return int(self.c_in_rgb.weight.shape[0])

    def stream(self, stream: Modality):
        if stream == Modality.IR:
            if self.regime == Regime.CC:
                raise ValueError("The IR stream of the color transform is not available in the CC regime")
            return self.c_in_ir, self.bn_ir
        return self.c_in_rgb, self.bn_rgb


def pct_init(
    M: int = PCT_HIDDEN,
    rng: Optional[np.random.Generator] = None,
    store: Optional[ParamStore] = None,
    regime: Regime = Regime.VI,
    prefix: str = "pct",
) -> PctParams:
    """Create the color transform parameters.

    Args:
        M: Hidden width of the per-pixel network.
        rng: Generator for the uniform fan-in initialization.
        store: Registry to add the parameters to (a private one if omitted).
        regime: ``CC`` disables the IR stream.
        prefix: Namespace of the parameter names.

    Returns:
        PctParams: Freshly initialized parameters.
    """
    if M < 1:
        raise ValueError(f"PCT hidden width must be >= 1, got {M}")
    rng = rng if rng is not None else np.random.default_rng(0)
    store = store if store is not None else ParamStore()
    c_in_rgb = init_conv(store, f"{prefix}.c_in_rgb", M, 3, 1, rng)
    c_in_ir = init_conv(store, f"{prefix}.c_in_ir", M, 3, 1, rng)
    bn_rgb = store.batch_norm(f"{prefix}.bn_rgb", M, momentum=BN_MOMENTUM, eps=BN_EPS)
    bn_ir = store.batch_norm(f"{prefix}.bn_ir", M, momentum=BN_MOMENTUM, eps=BN_EPS)
    c_x = init_conv(store, f"{prefix}.c_x", 3, M, 1, rng)
    return PctParams(c_in_rgb, c_in_ir, bn_rgb, bn_ir, c_x, regime=Regime(regime))


def pct_forward(img_batch, stream: Modality, p: PctParams) -> Tensor:
    """Map an ``N x 3 x H x W`` batch through the selected stream.

    Raises:
        ValueError: If the IR stream is requested in the CC regime, or the
            input is not a 3-channel batch.
    """
    x = ops.as_tensor(img_batch)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"pct_forward expects N x 3 x H x W, got {x.shape}")
    c_in, bn = p.stream(Modality(stream))
    hidden = ops.relu(ops.batch_norm(c_in(x), bn))
    return p.c_x(hidden)


def effective_channel_gain(p: PctParams, stream: Modality = Modality.RGB) -> np.ndarray:
    """Eval-mode response of the transform to unit R, G and B inputs.

    Row ``c`` is ``pct(e_c) - pct(0)``; it shows which output colors each
    input channel is pushed toward.
    """
    _, bn = p.stream(Modality(stream))
    previous = bn.mode
    bn.mode = "eval"
    try:
        probes = np.zeros((4, 3, 1, 1), dtype=p.c_x.weight.data.dtype)
        for channel in range(3):
            probes[channel + 1, channel] = 1.0
        out = pct_forward(probes, stream, p).data[:, :, 0, 0]
    finally:
        bn.mode = previous
    return out[1:] - out[0]


def rescale_for_display(pixels: np.ndarray) -> np.ndarray:
    """Min-max rescale one ``3 x H x W`` transform output into [0, 1]."""
    low, high = float(pixels.min()), float(pixels.max())
    if high - low < 1e-12:
        return np.zeros_like(pixels)
    return (pixels - low) / (high - low)
