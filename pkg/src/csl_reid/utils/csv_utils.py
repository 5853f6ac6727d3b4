"""Strict CSV tables shared by the manifest, training log and reports."""

import logging
import os
from typing import Dict, Iterable, List, Optional, Sequence

import pandas as pd

logger = logging.getLogger(__name__)

TRAINING_LOG_COLUMNS = ["step", "l_id", "l_sq", "l_total", "mean_delta"]
REPORT_COLUMNS = ["direction", "k", "cmc_k"]
ABLATION_COLUMNS = [
    "row",
    "variant",
    "mode",
    "wrt_neg_sign",
    "direction",
    "rank1",
    "rank5",
    "rank10",
    "rank20",
    "mAP",
    "n_queries",
    "n_dropped",
    "status",
    "error",
]
LONG_COLUMNS = ["source", "series", "metric", "k", "value"]


def read_header_comments(path: str) -> Dict[str, str]:
    """Collect ``# key=value`` lines at the top of a CSV file."""
    header = {}
    with open(path, "r") as file:
        for line in file:
            if not line.startswith("#"):
                break
            text = line[1:].strip()
            if "=" in text:
                key, value = text.split("=", 1)
                header[key.strip()] = value.strip()
    return header


def read_strict_csv(path: str, columns: Sequence[str], dtype=None) -> pd.DataFrame:
    """Read ``path`` and require exactly ``columns`` in that order.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the header differs from ``columns``.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"CSV file not found: {path}")
    frame = pd.read_csv(path, comment="#", dtype=dtype, keep_default_na=False)
    if list(frame.columns) != list(columns):
        raise ValueError(f"{path}: expected columns {list(columns)}, got {list(frame.columns)}")
    return frame


def write_csv(
    path: str,
    rows: Iterable[dict],
    columns: Sequence[str],
    header: Optional[Dict[str, object]] = None,
) -> str:
    """Write ``rows`` under a fixed header, preceded by ``# key=value`` lines."""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as file:
        for key, value in (header or {}).items():
            file.write(f"# {key}={value}\n")
        frame.to_csv(file, index=False, float_format="%.10g")
    logger.debug("Wrote %d rows to %s", len(frame), path)
    return path


def detect_columns(path: str) -> List[str]:
    return list(pd.read_csv(path, comment="#", nrows=0).columns)


def to_long_format(path: str) -> pd.DataFrame:
    """Convert a report, ablation or training-log CSV to plot-ready long rows.

    Raises:
        ValueError: If the file is none of the known table kinds.
    """
    columns = detect_columns(path)
    source = os.path.basename(path)
    if columns == REPORT_COLUMNS:
        frame = read_strict_csv(path, REPORT_COLUMNS, dtype={"k": str})
        return pd.DataFrame(
            {
                "source": source,
                "series": frame["direction"],
                "metric": ["cmc" if k.isdigit() else k for k in frame["k"]],
                "k": [int(k) if k.isdigit() else "" for k in frame["k"]],
                "value": frame["cmc_k"].astype(float),
            },
            columns=LONG_COLUMNS,
        )
    if columns == ABLATION_COLUMNS:
        frame = read_strict_csv(path, ABLATION_COLUMNS)
        frame = frame[frame["status"] == "ok"]
        series = frame["variant"] + "|" + frame["direction"] + "|sign=" + frame["wrt_neg_sign"].astype(str)
        melted = frame.assign(series=series).melt(
            id_vars=["series"], value_vars=["rank1", "rank5", "rank10", "rank20", "mAP"], var_name="metric"
        )
        melted["k"] = [int(m[4:]) if m.startswith("rank") else "" for m in melted["metric"]]
        melted["metric"] = ["cmc" if m.startswith("rank") else m for m in melted["metric"]]
        melted["value"] = pd.to_numeric(melted["value"])
        melted["source"] = source
        return melted[LONG_COLUMNS]
    if columns == TRAINING_LOG_COLUMNS:
        frame = read_strict_csv(path, TRAINING_LOG_COLUMNS)
        melted = frame.melt(id_vars=["step"], value_vars=TRAINING_LOG_COLUMNS[1:], var_name="metric")
        return pd.DataFrame(
            {
                "source": source,
                "series": "train",
                "metric": melted["metric"],
                "k": melted["step"],
                "value": melted["value"],
            },
            columns=LONG_COLUMNS,
        )
    raise ValueError(f"{path}: unrecognized table with columns {columns}")
