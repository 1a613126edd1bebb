# tools/reporting.py

import json
import logging
import math
import os
from typing import Any, Dict

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def ensure_out_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create output directory {path}: {e}", {"path": path})
    if not os.access(path, os.W_OK):
        raise DataError(f"Output directory is not writable: {path}", {"path": path})
    return path


def to_plain(value: Any) -> Any:
    """numpy scalars/arrays to JSON-native values; NaN and inf become null."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, pd.Timestamp):
        return value.strftime("%Y-%m-%d")
    return value


def to_json(doc: Dict[str, Any]) -> str:
    return json.dumps(to_plain(doc), sort_keys=True, indent=2)


def write_json(path: str, doc: Dict[str, Any]) -> str:
    try:
        with open(path, "w") as f:
            f.write(to_json(doc) + "\n")
    except OSError as e:
        raise DataError(f"Cannot write {path}: {e}", {"path": path})
    logger.debug(f"Wrote {path}")
    return path


def write_frame(path: str, frame: pd.DataFrame) -> str:
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise DataError(f"Cannot write {path}: {e}", {"path": path})
    logger.debug(f"Wrote {path} ({len(frame)} rows)")
    return path


def read_json(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise DataError(f"File not found: {path}", {"path": path})
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}", {"path": path})
