"""Two-stream embedding network.

The first conv block has separate parameters per modality; every later
block, the optional non-local block and the heads are shared.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from csl_reid.config import (
    BACKBONE_STRIDES,
    BACKBONE_WIDTHS,
    BN_EPS,
    BN_MOMENTUM,
    EMBED_DIM,
    NONLOCAL_AFTER_BLOCK,
    Modality,
)
from csl_reid.numerics import ops
from csl_reid.numerics.layers import ConvParams, LinearParams, init_conv, init_linear
from csl_reid.numerics.tensor import BNState, ParamStore, Tensor

logger = logging.getLogger(__name__)


@dataclass
class ConvBlock:
    """3x3 conv, batch norm, ReLU."""

    conv: ConvParams
    bn: BNState

    def __call__(self, x) -> Tensor:
        return ops.relu(ops.batch_norm(self.conv(x), self.bn))


@dataclass
class NonLocalParams:
    theta: ConvParams
    phi: ConvParams
    g: ConvParams
    w_z: ConvParams


@dataclass
class BackboneParams:
    shallow_rgb: ConvBlock
    shallow_ir: ConvBlock
    shared_blocks: List[ConvBlock]
    nonlocal_params: Optional[NonLocalParams]
    embed_proj: LinearParams
    bnneck: BNState
    classifier: LinearParams
    nonlocal_after: int = NONLOCAL_AFTER_BLOCK

    @property
    def num_classes(self) -> int:
        return int(self.classifier.weight.shape[0])

    @property
    def embed_dim(self) -> int:
        return int(self.embed_proj.weight.shape[0])


def _conv_block(store, name, c_out, c_in, stride, rng) -> ConvBlock:
    conv = init_conv(store, f"{name}.conv", c_out, c_in, 3, rng, stride=stride, bias=False)
    return ConvBlock(conv, store.batch_norm(f"{name}.bn", c_out, momentum=BN_MOMENTUM, eps=BN_EPS))


def nonlocal_init(store: ParamStore, name: str, channels: int, rng: np.random.Generator) -> NonLocalParams:
    """Non-local block with a zeroed output projection (starts as identity)."""
    if channels % 2:
        raise ValueError(f"Non-local block needs an even channel count, got {channels}")
    inner = channels // 2
    w_z = init_conv(store, f"{name}.w_z", channels, inner, 1, rng)
    w_z.weight.data[...] = 0.0
    return NonLocalParams(
        theta=init_conv(store, f"{name}.theta", inner, channels, 1, rng),
        phi=init_conv(store, f"{name}.phi", inner, channels, 1, rng),
        g=init_conv(store, f"{name}.g", inner, channels, 1, rng),
        w_z=w_z,
    )


def backbone_init(
    num_classes: int,
    rng: np.random.Generator,
    store: ParamStore,
    widths: Sequence[int] = BACKBONE_WIDTHS,
    strides: Sequence[int] = BACKBONE_STRIDES,
    embed_dim: int = EMBED_DIM,
    use_nonlocal: bool = False,
    nonlocal_after: int = NONLOCAL_AFTER_BLOCK,
) -> BackboneParams:
    """Create backbone, BNNeck and classifier parameters.

    Args:
        num_classes: Number of training identities ``K``.
        rng: Generator for weight initialization.
        store: Registry receiving ``backbone.*`` and ``classifier.*`` names.
        widths: Output channels of each conv block; the first is per stream.
        strides: Stride of each conv block.
        embed_dim: Embedding size ``D_emb``.
        use_nonlocal: Insert a non-local block after block ``nonlocal_after``.
        nonlocal_after: 1-based index of the block followed by attention.

    Returns:
        BackboneParams: Freshly initialized parameters.
    """
    if len(widths) != len(strides) or len(widths) < 2:
        raise ValueError(f"widths {tuple(widths)} and strides {tuple(strides)} must match, >= 2 blocks")
    if num_classes < 2:
        raise ValueError(f"Need at least 2 identities for the classifier, got {num_classes}")
    shallow_rgb = _conv_block(store, "backbone.shallow_rgb", widths[0], 3, strides[0], rng)
    shallow_ir = _conv_block(store, "backbone.shallow_ir", widths[0], 3, strides[0], rng)
    shared = [
        _conv_block(store, f"backbone.block{i + 1}", widths[i], widths[i - 1], strides[i], rng)
        for i in range(1, len(widths))
    ]
    nonlocal_params = None
    if use_nonlocal:
        if not 1 <= nonlocal_after <= len(widths):
            raise ValueError(f"nonlocal_after={nonlocal_after} outside 1..{len(widths)}")
        nonlocal_params = nonlocal_init(store, "backbone.nonlocal", widths[nonlocal_after - 1], rng)
    embed_proj = init_linear(store, "backbone.embed_proj", embed_dim, widths[-1], rng)
    bnneck = store.batch_norm("backbone.bnneck", embed_dim, momentum=BN_MOMENTUM, eps=BN_EPS)
    classifier = init_linear(store, "classifier", num_classes, embed_dim, rng)
    return BackboneParams(
        shallow_rgb, shallow_ir, shared, nonlocal_params, embed_proj, bnneck, classifier, nonlocal_after
    )


def nonlocal_block(x, params: NonLocalParams) -> Tensor:
    """Residual spatial self-attention: ``x + W_z(attention(theta, phi, g))``."""
    x = ops.as_tensor(x)
    attended = ops.spatial_attention(params.theta(x), params.phi(x), params.g(x))
    return ops.add(x, params.w_z(attended))


def feature_maps(img_batch, stream: Modality, p: BackboneParams) -> Tensor:
    """Pre-pool feature maps of the last block."""
    x = ops.as_tensor(img_batch)
    if x.ndim != 4 or x.shape[0] == 0:
        raise ValueError(f"Backbone needs a non-empty N x 3 x H x W batch, got {x.shape}")
    shallow = p.shallow_ir if Modality(stream) == Modality.IR else p.shallow_rgb
    x = shallow(x)
    if p.nonlocal_params is not None and p.nonlocal_after == 1:
        x = nonlocal_block(x, p.nonlocal_params)
    for index, block in enumerate(p.shared_blocks, start=2):
        x = block(x)
        if p.nonlocal_params is not None and p.nonlocal_after == index:
            x = nonlocal_block(x, p.nonlocal_params)
    return x


def embed(img_batch, stream: Modality, p: BackboneParams) -> Tuple[Tensor, Tensor]:
    """Embed a batch through one stream.

    Each call is its own batch: in train mode the shared blocks and BNNeck
    normalize an RGB batch and an IR batch with separate batch statistics,
    while their running statistics collect both streams and so serve either
    modality at evaluation time.

    Returns:
        tuple: ``(features, logits)``; features (``N x D_emb``) feed the
        metric loss, logits (``N x K``) come from BNNeck plus classifier.

    Raises:
        ValueError: If the batch is empty.
    """
    maps = feature_maps(img_batch, stream, p)
    features = p.embed_proj(ops.global_avg_pool(maps))
    logits = p.classifier(ops.batch_norm(features, p.bnneck))
    return features, logits
