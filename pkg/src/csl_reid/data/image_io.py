"""8-bit PNG read/write for ``3 x H x W`` float rasters in [0, 1]."""

import logging
import os

import numpy as np
from PIL import Image as PILImage

logger = logging.getLogger(__name__)


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """``3 x H x W`` floats in [0, 1] to ``H x W x 3`` bytes, rounding half to even."""
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise ValueError(f"Expected 3 x H x W pixels, got {pixels.shape}")
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def save_png(path: str, pixels: np.ndarray) -> str:
    """Write ``pixels`` as an RGB PNG.

    Raises:
        OSError: Naming ``path`` when the file cannot be written.
    """
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        PILImage.fromarray(to_uint8(pixels)).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"Could not write image {path}: {exc}") from exc
    return path


def load_png(path: str, dtype=np.float32) -> np.ndarray:
    """Read an RGB PNG into ``3 x H x W`` floats in [0, 1].

    Raises:
        FileNotFoundError: If ``path`` does not exist.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Image not found: {path}")
    with PILImage.open(path) as image:
        array = np.asarray(image.convert("RGB"), dtype=np.uint8)
    return (array.transpose(2, 0, 1).astype(dtype) / 255.0).astype(dtype)
