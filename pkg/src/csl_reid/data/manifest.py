"""On-disk dataset format: a CSV of image rows plus ``# key=value`` header lines."""

import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from csl_reid.color_aug import Image
from csl_reid.config import Modality, Regime
from csl_reid.data.image_io import load_png
from csl_reid.utils.csv_utils import read_header_comments, read_strict_csv, write_csv

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["path", "identity", "modality", "view", "clothing"]
SPLITS = ("train", "test")


@dataclass(frozen=True)
class ManifestRow:
    path: str
    identity: int
    modality: Modality
    view: int
    clothing: int = 0

    def as_dict(self) -> dict:
        return {
            "path": self.path,
            "identity": self.identity,
            "modality": self.modality.value,
            "view": self.view,
            "clothing": self.clothing,
        }


@dataclass
class DatasetManifest:
    """Rows of one split; paths are relative to ``root``."""

    rows: List[ManifestRow]
    split: str
    regime: Regime
    root: str = ""
    header: Dict[str, str] = field(default_factory=dict)
    _cache: Dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)
    _lock: Any = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"Unknown split {self.split!r}, expected one of {SPLITS}")
        self.regime = Regime(self.regime)

    def __len__(self) -> int:
        return len(self.rows)

    def identities(self) -> List[int]:
        return sorted({row.identity for row in self.rows})

    def label_map(self) -> Dict[int, int]:
        """Contiguous ``0..n-1`` labels in ascending identity order."""
        return {identity: label for label, identity in enumerate(self.identities())}

    def select(
        self,
        identity: Optional[int] = None,
        modality: Optional[Modality] = None,
        clothing: Optional[int] = None,
    ) -> List[ManifestRow]:
        return [
            row
            for row in self.rows
            if (identity is None or row.identity == identity)
            and (modality is None or row.modality == modality)
            and (clothing is None or row.clothing == clothing)
        ]

    def clothing_sets(self, identity: int) -> List[int]:
        return sorted({row.clothing for row in self.rows if row.identity == identity})

    def resolve(self, row: ManifestRow) -> str:
        return row.path if os.path.isabs(row.path) else os.path.join(self.root, row.path)

    def load_image(self, row: ManifestRow) -> Image:
        """Load (and cache) the pixels of ``row``."""
        path = self.resolve(row)
        with self._lock:
            pixels = self._cache.get(path)
        if pixels is None:
            pixels = load_png(path)
            with self._lock:
                self._cache[path] = pixels
        return Image(pixels, row.modality, row.identity, row.view, row.clothing)

    def load_pixels(self, rows: Iterable[ManifestRow]) -> np.ndarray:
        return np.stack([self.load_image(row).pixels for row in rows])

    def check_invariants(self) -> None:
        """Raise ``ValueError`` unless every identity has enough images.

        VI: at least 2 RGB and 2 IR images per identity. CC: RGB only, with
        at least 2 clothing sets per identity.
        """
        if not self.rows:
            raise ValueError(f"Manifest for split {self.split} is empty")
        for identity in self.identities():
            if self.regime == Regime.VI:
                for modality in Modality:
                    count = len(self.select(identity, modality))
                    if count < 2:
                        raise ValueError(f"Identity {identity} has {count} {modality.value} images, need >= 2")
            else:
                if self.select(identity, Modality.IR):
                    raise ValueError(f"Identity {identity} has IR images in a CC manifest")
                sets = self.clothing_sets(identity)
                if len(sets) < 2:
                    raise ValueError(f"Identity {identity} has clothing sets {sets}, need >= 2")

    def summary(self) -> pd.DataFrame:
        """Image counts per identity, modality and clothing set."""
        frame = pd.DataFrame([row.as_dict() for row in self.rows], columns=MANIFEST_COLUMNS)
        return frame.groupby(["identity", "modality", "clothing"]).size().reset_index(name="images")

    def write_csv(self, path: str) -> str:
        header = {"split": self.split, "regime": self.regime.value}
        header.update({k: v for k, v in self.header.items() if k not in header})
        return write_csv(path, (row.as_dict() for row in self.rows), MANIFEST_COLUMNS, header=header)

    @classmethod
    def read_csv(cls, path: str, root: Optional[str] = None) -> "DatasetManifest":
        """Load a manifest; ``root`` defaults to the CSV's directory.

        Raises:
            FileNotFoundError: If ``path`` does not exist.
            ValueError: If the header is malformed.
        """
        header = read_header_comments(path) if os.path.isfile(path) else {}
        frame = read_strict_csv(path, MANIFEST_COLUMNS, dtype={"path": str, "modality": str})
        try:
            split = header.pop("split")
            regime = Regime(header.pop("regime"))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: manifest header needs split and regime lines ({exc})")
        rows = [
            ManifestRow(str(r.path), int(r.identity), Modality(r.modality), int(r.view), int(r.clothing))
            for r in frame.itertuples(index=False)
        ]
        return cls(rows, split, regime, root if root is not None else os.path.dirname(os.path.abspath(path)), header)


def check_disjoint(train: DatasetManifest, test: DatasetManifest) -> None:
    overlap = sorted(set(train.identities()) & set(test.identities()))
    if overlap:
        raise ValueError(f"Train and test share identities {overlap}")


def manifest_paths(data_dir: str) -> Dict[str, str]:
    return {split: os.path.join(data_dir, f"{split}.csv") for split in SPLITS}


def load_dataset(data_dir: str) -> Dict[str, DatasetManifest]:
    """Read ``train.csv`` and ``test.csv`` from ``data_dir``.

    Raises:
        FileNotFoundError: Naming the missing manifest.
    """
    manifests = {}
    for split, path in manifest_paths(data_dir).items():
        if not os.path.isfile(path):
            raise FileNotFoundError(f"Dataset manifest not found: {path}")
        manifests[split] = DatasetManifest.read_csv(path)
    check_disjoint(manifests["train"], manifests["test"])
    return manifests
