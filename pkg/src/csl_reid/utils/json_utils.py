import json
import logging
import os
from typing import Any, Dict

logger = logging.getLogger(__name__)


def load_json_data(json_file: str) -> dict:
    """
    Load JSON file.

    Args:
        json_file (str): The path to the JSON file.

    Returns:
        dict: The loaded JSON data.

    Raises:
        ValueError: If there is an error reading the JSON file.
    """
    try:
        with open(json_file, "r") as file:
            return json.load(file)
    except (FileNotFoundError, json.JSONDecodeError) as e:
        raise ValueError(f"Error reading JSON file {json_file}: {e}")


def write_json(json_file: str, json_data: Any) -> str:
    """Write ``json_data`` with sorted keys so that echoes diff cleanly."""
    os.makedirs(os.path.dirname(os.path.abspath(json_file)), exist_ok=True)
    with open(json_file, "w") as file:
        json.dump(json_data, file, indent=2, sort_keys=True)
        file.write("\n")
    logger.debug("Wrote %s", json_file)
    return json_file


def search_params(json_data: dict, prefix: str = "") -> Dict[str, Any]:
    """Flatten nested sections into dotted keys.

    >>> search_params({"train": {"lr0": 0.1}})
    {'train.lr0': 0.1}
    """
    flat = {}
    for key, value in json_data.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            flat.update(search_params(value, dotted))
        else:
            flat[dotted] = value
    return flat


def update_values(json_data: dict, returned_args: dict) -> dict:
    """Apply dotted-key overrides to a nested dict.

    Takes as input: json data, new values keyed like ``section.field``.
    Every key must address an existing leaf.

    Raises:
        KeyError: Naming the first override that matches nothing.
    """
    for arg_key, arg_value in returned_args.items():
        section = json_data
        parts = arg_key.split(".")
        for part in parts[:-1]:
            if not isinstance(section.get(part), dict):
                raise KeyError(arg_key)
            section = section[part]
        if parts[-1] not in section or isinstance(section[parts[-1]], dict):
            raise KeyError(arg_key)
        section[parts[-1]] = arg_value
    return json_data
