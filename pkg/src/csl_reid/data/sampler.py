"""PK batch sampling: ``P`` identities, ``K`` images each (per modality in VI)."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from csl_reid.color_aug import Image
from csl_reid.config import Modality, Regime
from csl_reid.data.manifest import DatasetManifest, ManifestRow

logger = logging.getLogger(__name__)


@dataclass
class Batch:
    """One optimization step's images; labels are contiguous train indices."""

    rgb: List[Image]
    rgb_labels: np.ndarray
    ir: List[Image] = field(default_factory=list)
    ir_labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rgb_rows: List[ManifestRow] = field(default_factory=list)
    ir_rows: List[ManifestRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rgb) + len(self.ir)

    @property
    def labels(self) -> np.ndarray:
        return np.concatenate([self.rgb_labels, self.ir_labels])


def _pick(rows: List[ManifestRow], k: int, rng: np.random.Generator, what: str) -> List[ManifestRow]:
    if not rows:
        raise ValueError(f"No images for {what}")
    replace = len(rows) < k
    if replace:
        logger.warning("%s has %d images, resampling %d with replacement", what, len(rows), k)
    return [rows[i] for i in rng.choice(len(rows), size=k, replace=replace)]


def _pick_across_clothing(rows: List[ManifestRow], k: int, rng: np.random.Generator, what: str) -> List[ManifestRow]:
    sets = sorted({row.clothing for row in rows})
    if len(sets) < 2:
        logger.warning("%s has a single clothing set %s; batch cannot span two", what, sets)
        return _pick(rows, k, rng, what)
    first, second = rng.choice(sets, size=2, replace=False)
    seeds = [_pick([r for r in rows if r.clothing == c], 1, rng, what)[0] for c in (first, second)]
    rest = [row for row in rows if row not in seeds]
    if k > 2:
        seeds += _pick(rest or rows, k - 2, rng, what)
    return seeds


def sample_batch(
    manifest: DatasetManifest,
    P: int,
    K: int,
    regime: Regime,
    rng: np.random.Generator,
    label_map: Optional[dict] = None,
) -> Batch:
    """Draw one PK batch from a training manifest.

    VI: ``P*K`` RGB plus ``P*K`` IR images; every anchor's cross-modality
    images are positives, so ``K=1`` still satisfies the loss contract.
    CC: ``P*K`` RGB images, each identity spanning two clothing sets.
    Short identities are resampled with replacement and logged.

    Raises:
        ValueError: If the manifest has fewer than ``P`` identities, or the
            shape cannot give every anchor a positive and a negative.
    """
    regime = Regime(regime)
    if regime != manifest.regime:
        raise ValueError(f"Sampler regime {regime.value} does not match the {manifest.regime.value} manifest")
    identities = manifest.identities()
    if P < 2 or P > len(identities):
        raise ValueError(f"P={P} needs 2 <= P <= {len(identities)} available identities")
    if K < 1 or (regime == Regime.CC and K < 2):
        raise ValueError(f"K={K} leaves anchors without positives in the {regime.value} regime")
    label_map = label_map if label_map is not None else manifest.label_map()

    chosen = [int(i) for i in rng.choice(identities, size=P, replace=False)]
    rgb_rows: List[ManifestRow] = []
    ir_rows: List[ManifestRow] = []
    for identity in chosen:
        rgb_pool = manifest.select(identity, Modality.RGB)
        if regime == Regime.CC:
            rgb_rows += _pick_across_clothing(rgb_pool, K, rng, f"identity {identity}")
        else:
            rgb_rows += _pick(rgb_pool, K, rng, f"identity {identity} RGB")
            ir_rows += _pick(manifest.select(identity, Modality.IR), K, rng, f"identity {identity} IR")

    return Batch(
        rgb=[manifest.load_image(row) for row in rgb_rows],
        rgb_labels=np.array([label_map[row.identity] for row in rgb_rows], dtype=np.int64),
        ir=[manifest.load_image(row) for row in ir_rows],
        ir_labels=np.array([label_map[row.identity] for row in ir_rows], dtype=np.int64),
        rgb_rows=rgb_rows,
        ir_rows=ir_rows,
    )
