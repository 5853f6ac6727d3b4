"""Component ablation: train and evaluate a matrix of variants on one dataset."""

import dataclasses
import logging
import os
from typing import Dict, List, Optional, Sequence

import pandas as pd

from csl_reid.data.manifest import DatasetManifest
from csl_reid.run_config import ConfigError, RunConfig, TrainConfig, Variant
from csl_reid.trainer import TrainingRun
from csl_reid.utils.common_utils import create_sequential_folder
from csl_reid.utils.csv_utils import ABLATION_COLUMNS, write_csv
from csl_reid.utils.json_utils import write_json

logger = logging.getLogger(__name__)

ABLATION_TABLE = "ablation.csv"
DEFAULT_ROWS = (Variant.BASELINE, Variant.ICA, Variant.PCT, Variant.ICA_PCT)


def build_matrix(base: TrainConfig, variants: Sequence, signs: Sequence[int] = (1,)) -> List[TrainConfig]:
    """One config per (variant, negative-weight sign), everything else shared."""
    if not variants:
        raise ConfigError("An ablation needs at least one row")
    matrix = []
    for sign in signs:
        for variant in variants:
            row = dataclasses.replace(base, variant=Variant.parse(variant), wrt_neg_sign=int(sign))
            row.validate()
            matrix.append(row)
    return matrix


def _result_rows(index: int, cfg: TrainConfig, reports) -> List[dict]:
    base = {
        "row": index,
        "variant": cfg.variant.label,
        "mode": cfg.mode.value,
        "wrt_neg_sign": cfg.wrt_neg_sign,
    }
    return [
        dict(
            base,
            direction=report.direction,
            rank1=report.rank(1),
            rank5=report.rank(5),
            rank10=report.rank(10),
            rank20=report.rank(20),
            mAP=report.map,
            n_queries=report.n_queries,
            n_dropped=report.n_dropped,
            status="ok",
            error="",
        )
        for report in reports
    ]


def run_ablation(
    matrix: Sequence[TrainConfig],
    run_cfg: RunConfig,
    manifests: Dict[str, DatasetManifest],
    out_dir: str,
    show_progress: bool = False,
) -> pd.DataFrame:
    """Train every row of ``matrix`` into its own numbered folder.

    Every row shares the dataset in ``manifests`` and the data/eval sections
    of ``run_cfg``. A failing row is logged and recorded with status
    ``error``; the remaining rows still run. The combined table is written to
    ``<out_dir>/ablation.csv`` and returned.
    """
    os.makedirs(out_dir, exist_ok=True)
    write_json(
        os.path.join(out_dir, "config.json"),
        dict(run_cfg.to_dict(), rows=[{"variant": c.variant.value, "wrt_neg_sign": c.wrt_neg_sign} for c in matrix]),
    )
    rows: List[dict] = []
    for index, cfg in enumerate(matrix, 1):
        row_dir: Optional[str] = None
        try:
            row_dir = create_sequential_folder(out_dir)
            logger.info(
                "Ablation row %d/%d: %s (sign %+d) -> %s",
                index,
                len(matrix),
                cfg.variant.label,
                cfg.wrt_neg_sign,
                row_dir,
            )
            row_cfg = dataclasses.replace(run_cfg, train=cfg)
            reports = TrainingRun(row_cfg, manifests, row_dir, show_progress=show_progress).execute()
            rows += _result_rows(index, cfg, reports)
        except Exception as exc:
            logger.error("Ablation row %d (%s) failed: %s", index, cfg.variant.label, exc)
            logger.debug("Row %d traceback", index, exc_info=True)
            rows.append(
                {
                    "row": index,
                    "variant": cfg.variant.label,
                    "mode": cfg.mode.value,
                    "wrt_neg_sign": cfg.wrt_neg_sign,
                    "direction": "",
                    "status": "error",
                    "error": str(exc) or type(exc).__name__,
                }
            )
    path = write_csv(os.path.join(out_dir, ABLATION_TABLE), rows, ABLATION_COLUMNS)
    failed = sum(1 for row in rows if row["status"] != "ok")
    logger.info("Ablation table written to %s (%d rows, %d failed)", path, len(rows), failed)
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)
