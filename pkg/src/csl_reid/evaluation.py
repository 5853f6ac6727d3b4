"""Retrieval evaluation: query/gallery protocols, CMC and mAP."""

import logging
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from csl_reid.config import CMC_TOPK, EVAL_BATCH, Direction, Modality, Regime
from csl_reid.data.manifest import DatasetManifest, ManifestRow
from csl_reid.utils.csv_utils import REPORT_COLUMNS, write_csv

logger = logging.getLogger(__name__)

SUMMARY_KEYS = ("mAP", "n_queries", "n_gallery", "n_dropped")


@dataclass
class RetrievalMeta:
    """Identity, view and clothing of each row of a feature matrix."""

    identity: np.ndarray
    view: np.ndarray
    clothing: np.ndarray

    def __post_init__(self):
        self.identity = np.asarray(self.identity, dtype=np.int64)
        self.view = np.asarray(self.view, dtype=np.int64)
        self.clothing = np.asarray(self.clothing, dtype=np.int64)
        if not self.identity.shape == self.view.shape == self.clothing.shape:
            raise ValueError("RetrievalMeta arrays must have equal lengths")

    def __len__(self) -> int:
        return int(self.identity.shape[0])

    @classmethod
    def from_rows(cls, rows: Sequence[ManifestRow]) -> "RetrievalMeta":
        return cls([r.identity for r in rows], [r.view for r in rows], [r.clothing for r in rows])


@dataclass
class RetrievalReport:
    direction: str
    cmc: np.ndarray
    map: float
    n_queries: int
    n_gallery: int
    n_dropped: int = 0
    first_ranks: List[int] = field(default_factory=list)

    def rank(self, k: int) -> float:
        """Rank-k accuracy (1-based ``k``)."""
        return float(self.cmc[min(k, len(self.cmc)) - 1])

    def rows(self) -> List[dict]:
        rows = [{"direction": self.direction, "k": str(k), "cmc_k": float(v)} for k, v in enumerate(self.cmc, 1)]
        summary = [self.map, self.n_queries, self.n_gallery, self.n_dropped]
        rows += [{"direction": self.direction, "k": key, "cmc_k": value} for key, value in zip(SUMMARY_KEYS, summary)]
        return rows


def build_query_gallery(
    manifest: DatasetManifest, direction: Direction, gallery_views: Optional[Sequence[int]] = None
) -> Tuple[List[ManifestRow], List[ManifestRow]]:
    """Split a test manifest into queries and gallery for ``direction``.

    VI directions split by modality; CC uses RGB images on both sides and
    relevance is decided later by clothing, and without ``gallery_views`` both
    sides are the same list. ``gallery_views`` restricts the gallery to those
    view indices.

    Raises:
        ValueError: If either side is empty or the direction does not match
            the manifest regime.
    """
    direction = Direction(direction)
    if (manifest.regime == Regime.CC) != (direction == Direction.CC):
        raise ValueError(f"Direction {direction.value} does not apply to a {manifest.regime.value} manifest")
    if direction == Direction.NIR_TO_RGB:
        queries, gallery = manifest.select(modality=Modality.IR), manifest.select(modality=Modality.RGB)
    elif direction == Direction.RGB_TO_NIR:
        queries, gallery = manifest.select(modality=Modality.RGB), manifest.select(modality=Modality.IR)
    else:
        queries = gallery = manifest.select(modality=Modality.RGB)
    if gallery_views is not None:
        allowed = set(int(v) for v in gallery_views)
        gallery = [row for row in gallery if row.view in allowed]
    if not queries or not gallery:
        raise ValueError(
            f"Empty {'query' if not queries else 'gallery'} side for {direction.value} "
            f"({len(queries)} queries, {len(gallery)} gallery, gallery_views={gallery_views})"
        )
    shared = gallery is queries
    queries = list(queries)
    return queries, queries if shared else list(gallery)


def direction_label(direction: Direction, gallery_views: Optional[Sequence[int]] = None) -> str:
    label = Direction(direction).value
    if gallery_views is not None:
        label += "@views=" + ",".join(str(v) for v in gallery_views)
    return label


def pairwise_distances(query_feats: np.ndarray, gallery_feats: np.ndarray, chunk: int = EVAL_BATCH) -> np.ndarray:
    """Euclidean distances by explicit differences, ``chunk`` queries at a time."""
    out = np.empty((query_feats.shape[0], gallery_feats.shape[0]), dtype=np.float64)
    for start in range(0, query_feats.shape[0], chunk):
        diff = query_feats[start : start + chunk, None, :] - gallery_feats[None, :, :]
        out[start : start + chunk] = np.sqrt((diff * diff).sum(axis=2))
    return out


def cmc_map(
    query_feats: np.ndarray,
    query_meta: RetrievalMeta,
    gallery_feats: np.ndarray,
    gallery_meta: RetrievalMeta,
    direction: str = Direction.NIR_TO_RGB.value,
    cross_clothing: bool = False,
    topk: int = CMC_TOPK,
) -> RetrievalReport:
    """Rank the gallery for every query and summarize.

    Gallery items sharing the query's view are removed from its list. An
    item is relevant when it has the query's identity and, with
    ``cross_clothing``, a different clothing id; same-clothes matches stay in
    the list as non-relevant. Ties break by ascending gallery index. Queries
    without any relevant item are dropped and counted.

    Raises:
        ValueError: On feature/meta size or dimension mismatch.
    """
    query_feats = np.asarray(query_feats, dtype=np.float64)
    gallery_feats = np.asarray(gallery_feats, dtype=np.float64)
    if query_feats.ndim != 2 or gallery_feats.ndim != 2 or query_feats.shape[1] != gallery_feats.shape[1]:
        raise ValueError(f"Feature dimension mismatch: queries {query_feats.shape}, gallery {gallery_feats.shape}")
    if len(query_meta) != query_feats.shape[0] or len(gallery_meta) != gallery_feats.shape[0]:
        raise ValueError("Feature rows and metadata lengths differ")

    dist = pairwise_distances(query_feats, gallery_feats)
    gallery_index = np.arange(gallery_feats.shape[0])
    hits = np.zeros(topk, dtype=np.float64)
    aps: List[float] = []
    first_ranks: List[int] = []
    dropped = 0
    for q in range(query_feats.shape[0]):
        order = np.lexsort((gallery_index, dist[q]))
        order = order[gallery_meta.view[order] != query_meta.view[q]]
        relevant = gallery_meta.identity[order] == query_meta.identity[q]
        if cross_clothing:
            relevant &= gallery_meta.clothing[order] != query_meta.clothing[q]
        hit_ranks = np.flatnonzero(relevant) + 1
        if hit_ranks.size == 0:
            dropped += 1
            continue
        first = int(hit_ranks[0])
        first_ranks.append(first)
        if first <= topk:
            hits[first - 1 :] += 1
        aps.append(float(np.mean(np.arange(1, hit_ranks.size + 1) / hit_ranks)))

    kept = len(aps)
    if dropped:
        logger.warning("%s: %d of %d queries have no relevant gallery item", direction, dropped, query_feats.shape[0])
    return RetrievalReport(
        direction=direction,
        cmc=hits / kept if kept else hits,
        map=float(np.mean(aps)) if kept else 0.0,
        n_queries=kept,
        n_gallery=int(gallery_feats.shape[0]),
        n_dropped=dropped,
        first_ranks=first_ranks,
    )


def l2_normalize(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    return features / np.maximum(norms, 1e-12)


def extract_features(
    network, manifest: DatasetManifest, rows: Sequence[ManifestRow], batch_size: int = EVAL_BATCH
) -> np.ndarray:
    """Eval-mode, L2-normalized embeddings of ``rows`` (stream by modality)."""
    network.set_mode("eval")
    feats = np.zeros((len(rows), network.backbone.embed_dim), dtype=np.float64)
    for modality in Modality:
        index = [i for i, row in enumerate(rows) if row.modality == modality]
        for start in range(0, len(index), batch_size):
            chunk = index[start : start + batch_size]
            pixels = manifest.load_pixels([rows[i] for i in chunk])
            features, _ = network.forward(pixels, modality)
            feats[chunk] = features.data
    return l2_normalize(feats)


def evaluate(
    network,
    manifest: DatasetManifest,
    direction: Direction,
    gallery_views: Optional[Sequence[int]] = None,
    batch_size: int = EVAL_BATCH,
    topk: int = CMC_TOPK,
) -> RetrievalReport:
    """Embed a test manifest and score one direction."""
    queries, gallery = build_query_gallery(manifest, direction, gallery_views)
    q_feats = extract_features(network, manifest, queries, batch_size)
    g_feats = q_feats if gallery is queries else extract_features(network, manifest, gallery, batch_size)
    report = cmc_map(
        q_feats,
        RetrievalMeta.from_rows(queries),
        g_feats,
        RetrievalMeta.from_rows(gallery),
        direction=direction_label(direction, gallery_views),
        cross_clothing=Direction(direction) == Direction.CC,
        topk=topk,
    )
    logger.info(
        "%s: Rank1 %.2f%%  mAP %.2f%%  (%d queries, %d gallery)",
        report.direction,
        100 * report.rank(1),
        100 * report.map,
        report.n_queries,
        report.n_gallery,
    )
    return report


def write_report_csv(path: str, reports: Sequence[RetrievalReport]) -> str:
    rows = [row for report in reports for row in report.rows()]
    return write_csv(path, rows, REPORT_COLUMNS)


def format_report_table(reports: Sequence[RetrievalReport]) -> str:
    frame = pd.DataFrame(
        [
            {
                "direction": r.direction,
                "Rank1": 100 * r.rank(1),
                "Rank5": 100 * r.rank(5),
                "Rank10": 100 * r.rank(10),
                "Rank20": 100 * r.rank(20),
                "mAP": 100 * r.map,
                "queries": r.n_queries,
                "dropped": r.n_dropped,
            }
            for r in reports
        ]
    )
    return frame.to_string(index=False, float_format=lambda v: f"{v:6.2f}")


def print_report_table(reports: Sequence[RetrievalReport], stream=None) -> None:
    (stream or sys.stdout).write(format_report_table(reports) + "\n")
