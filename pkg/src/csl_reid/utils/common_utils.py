import logging
import os

logger = logging.getLogger(__name__)


def ensure_output_dir(path, force=False):
    """Create ``path`` or accept it when empty.

    Raises:
        FileExistsError: If ``path`` holds files and ``force`` is not set.
    """
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise FileExistsError(f"Output directory {path} is not empty; pass --force to write into it")
    os.makedirs(path, exist_ok=True)
    return path


def create_sequential_folder(base_path):
    """Create the next free ``001``, ``002``, ... folder under ``base_path``.

    Raises:
        ValueError: If ``base_path`` does not exist.
    """
    if not os.path.isdir(base_path):
        raise ValueError(f"The specified base path does not exist: {base_path}")

    number = 1
    while os.path.exists(os.path.join(base_path, f"{number:03d}")):
        number += 1
    folder_path = os.path.join(base_path, f"{number:03d}")
    os.makedirs(folder_path)
    logger.info("Created folder: %s", folder_path)
    return folder_path


def require_file(path, what="file"):
    """Raise ``FileNotFoundError`` naming ``path`` unless it exists."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path
