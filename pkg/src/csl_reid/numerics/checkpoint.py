"""Checkpoint files: a JSON manifest plus one little-endian float blob."""

import json
import logging
import os
from typing import Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MANIFEST_NAME = "checkpoint.json"
BLOB_NAME = "checkpoint.bin"


def save_checkpoint(directory: str, arrays: Dict[str, np.ndarray], meta: Optional[dict] = None) -> str:
    """Write ``arrays`` into ``directory``.

    Args:
        directory (str): Target directory, created if needed.
        arrays (dict): Ordered name -> float array mapping.
        meta (dict, optional): Free-form metadata stored in the manifest.

    Returns:
        str: Path of the manifest file.
    """
    os.makedirs(directory, exist_ok=True)
    entries = []
    offset = 0
    with open(os.path.join(directory, BLOB_NAME), "wb") as blob:
        for name, array in arrays.items():
            array = np.asarray(array)
            little = array.astype(array.dtype.newbyteorder("<"), copy=False)
            payload = np.ascontiguousarray(little).tobytes()
            entries.append(
                {"name": name, "shape": list(array.shape), "dtype": array.dtype.name, "byte_offset": offset}
            )
            blob.write(payload)
            offset += len(payload)
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    with open(manifest_path, "w") as file_:
        json.dump({"meta": meta or {}, "tensors": entries}, file_, indent=2)
    logger.info("Saved checkpoint with %d tensors to %s", len(entries), directory)
    return manifest_path


def load_checkpoint(directory: str) -> Tuple[Dict[str, np.ndarray], dict]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        FileNotFoundError: If the manifest or blob is missing.
    """
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    blob_path = os.path.join(directory, BLOB_NAME)
    for path in (manifest_path, blob_path):
        if not os.path.isfile(path):
            raise FileNotFoundError(f"Checkpoint file not found: {path}")
    with open(manifest_path, "r") as file_:
        manifest = json.load(file_)
    with open(blob_path, "rb") as file_:
        blob = file_.read()
    arrays = {}
    for entry in manifest["tensors"]:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        count = int(np.prod(entry["shape"], dtype=np.int64))
        array = np.frombuffer(blob, dtype=dtype, count=count, offset=entry["byte_offset"])
        arrays[entry["name"]] = array.astype(dtype.newbyteorder("="), copy=True).reshape(entry["shape"])
    return arrays, manifest.get("meta", {})
