"""Image-level color augmentation: channel replacement, channel swap, mix-up.

Every function is pure: it returns a new :class:`Image` and never touches
its input. Randomness comes from an explicit ``numpy.random.Generator``.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from csl_reid.config import CROP_PAD, LUMA_WEIGHTS, P_APPLY, P_CR_GIVEN_APPLY, Modality

logger = logging.getLogger(__name__)

CHANNELS = ("R", "G", "B")
IDENTITY_PERM = (0, 1, 2)
# Channel swap draws from the five orders that actually change the image.
NON_IDENTITY_PERMS = tuple(p for p in itertools.permutations(range(3)) if p != IDENTITY_PERM)

ChannelLike = Union[int, str]


@dataclass(frozen=True, eq=False)
class Image:
    """A 3 x H x W raster in [0, 1] plus its identity metadata."""

    pixels: np.ndarray = field(repr=False)
    modality: Modality = Modality.RGB
    identity: int = 0
    view: int = 0
    clothing: int = 0

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise ValueError(f"Image needs 3 x H x W pixels, got shape {self.pixels.shape}")
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise ValueError(
                f"Image pixels must lie in [0, 1], got [{self.pixels.min()}, {self.pixels.max()}]"
            )

    @property
    def height(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[2])

    def with_pixels(self, pixels: np.ndarray) -> "Image":
        return replace(self, pixels=pixels)

    def same_metadata(self, other: "Image") -> bool:
        return (self.modality, self.identity, self.view, self.clothing) == (
            other.modality,
            other.identity,
            other.view,
            other.clothing,
        )


class AugVariant(str, Enum):
    CR = "CR"
    CS = "CS"
    GRAY = "GRAY"
    ICA = "ICA"


@dataclass(frozen=True)
class AugPolicy:
    """Which color augmentation fires, and how often."""

    p_apply: float = P_APPLY
    p_cr_given_apply: float = P_CR_GIVEN_APPLY
    rng_seed: int = 0
    variant: AugVariant = AugVariant.ICA

    def __post_init__(self):
        for name in ("p_apply", "p_cr_given_apply"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def _channel_index(c: ChannelLike) -> int:
    if isinstance(c, str):
        if c.upper() not in CHANNELS:
            raise ValueError(f"Unknown channel {c!r}, expected one of {CHANNELS}")
        return CHANNELS.index(c.upper())
    if c not in (0, 1, 2):
        raise ValueError(f"Channel index must be 0, 1 or 2, got {c}")
    return int(c)


def _require_rgb(img: Image, op: str) -> None:
    if img.modality != Modality.RGB:
        raise ValueError(f"{op} is defined on RGB images only, got {img.modality.value}")


def as_permutation(perm: Sequence[ChannelLike]) -> Tuple[int, int, int]:
    """Normalize ``perm`` to a tuple of channel indices.

    Raises:
        ValueError: If ``perm`` is not a bijection on {R, G, B}.
    """
    indices = tuple(_channel_index(c) for c in perm)
    if len(indices) != 3 or sorted(indices) != [0, 1, 2]:
        raise ValueError(f"Channel order must be a permutation of (R, G, B), got {tuple(perm)}")
    return indices  # type: ignore[return-value]


def compose_permutations(outer: Sequence[ChannelLike], inner: Sequence[ChannelLike]) -> Tuple[int, int, int]:
    """Order equivalent to swapping by ``inner`` first, then by ``outer``."""
    outer_idx, inner_idx = as_permutation(outer), as_permutation(inner)
    return tuple(inner_idx[outer_idx[i]] for i in range(3))  # type: ignore[return-value]


def channel_replace(img: Image, c: ChannelLike) -> Image:
    """Copy channel ``c`` into all three channels."""
    _require_rgb(img, "channel_replace")
    index = _channel_index(c)
    return img.with_pixels(np.repeat(img.pixels[index : index + 1], 3, axis=0))


def channel_swap(img: Image, perm: Sequence[ChannelLike]) -> Image:
    """Reorder channels so that output channel ``i`` is input channel ``perm[i]``."""
    _require_rgb(img, "channel_swap")
    order = as_permutation(perm)
    return img.with_pixels(img.pixels[list(order)].copy())


def ica_mix(original: Image, augmented: Image) -> Image:
    """Blend an image with its augmented copy at equal weight."""
    if original.pixels.shape != augmented.pixels.shape:
        raise ValueError(f"ica_mix shape mismatch: {original.pixels.shape} vs {augmented.pixels.shape}")
    if not original.same_metadata(augmented):
        raise ValueError(
            f"ica_mix metadata mismatch: identity {original.identity} vs {augmented.identity}, "
            f"view {original.view} vs {augmented.view}"
        )
    return original.with_pixels(0.5 * original.pixels + 0.5 * augmented.pixels)


def grayscale(img: Image) -> Image:
    """Replace every channel by BT.601 luminance."""
    _require_rgb(img, "grayscale")
    luma = np.tensordot(np.asarray(LUMA_WEIGHTS, dtype=img.pixels.dtype), img.pixels, axes=1)
    luma = np.clip(luma, 0.0, 1.0)
    return img.with_pixels(np.repeat(luma[None], 3, axis=0))


def apply_policy(img: Image, pol: AugPolicy, rng: np.random.Generator) -> Image:
    """Produce the augmented twin of ``img`` under ``pol``.

    IR images pass through unchanged. ICA draws channel replacement or a
    non-identity channel swap and mixes it with the original; the single
    transform variants (CR, CS, GRAY) apply their transform unmixed.
    """
    if img.modality != Modality.RGB:
        return img
    if rng.random() >= pol.p_apply:
        return img
    if pol.variant == AugVariant.CR:
        return channel_replace(img, int(rng.integers(3)))
    if pol.variant == AugVariant.CS:
        return channel_swap(img, NON_IDENTITY_PERMS[int(rng.integers(len(NON_IDENTITY_PERMS)))])
    if pol.variant == AugVariant.GRAY:
        return grayscale(img)
    if rng.random() < pol.p_cr_given_apply:
        augmented = channel_replace(img, int(rng.integers(3)))
    else:
        augmented = channel_swap(img, NON_IDENTITY_PERMS[int(rng.integers(len(NON_IDENTITY_PERMS)))])
    return ica_mix(img, augmented)


def crop_at(img: Image, pad: int, offset: Tuple[int, int]) -> Image:
    """Zero-pad by ``pad`` and cut an ``H x W`` window at ``offset`` (row, col)."""
    if pad < 0:
        raise ValueError(f"Crop padding must be >= 0, got {pad}")
    if pad == 0:
        return img.with_pixels(img.pixels.copy())
    row, col = offset
    if not (0 <= row <= 2 * pad and 0 <= col <= 2 * pad):
        raise ValueError(f"Crop offset {offset} outside [0, {2 * pad}]")
    padded = np.pad(img.pixels, ((0, 0), (pad, pad), (pad, pad)))
    return img.with_pixels(padded[:, row : row + img.height, col : col + img.width].copy())


def random_crop(img: Image, pad: int = CROP_PAD, rng: Optional[np.random.Generator] = None) -> Image:
    """Pad-then-crop at a uniformly random offset; output shape equals input shape."""
    if pad < 0:
        raise ValueError(f"Crop padding must be >= 0, got {pad}")
    if pad == 0:
        return crop_at(img, 0, (0, 0))
    if rng is None:
        rng = np.random.default_rng()
    offset = (int(rng.integers(2 * pad + 1)), int(rng.integers(2 * pad + 1)))
    return crop_at(img, pad, offset)
