"""JSON and CSV emission.

JSON floats use Python's shortest round-trip repr, which carries exactly the
information of 17 significant digits. CSV floats use '%.17g'.
"""
import json
import logging
import math
import os
import sys

import numpy as np
import pandas as pd

from config import Config

CSV_FLOAT_FORMAT = "%.17g"


def to_jsonable(value):
    """Convert numpy scalars/arrays, complex numbers and non-finite floats"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(float(value.real)), to_jsonable(float(value.imag))]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return value
    if isinstance(value, pd.DataFrame):
        return to_jsonable(value.to_dict(orient="records"))
    return value


def render_json(report):
    payload = dict(to_jsonable(report))
    payload["schema"] = Config.SCHEMA_VERSION
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def render_csv(frame: pd.DataFrame):
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    logging.info(f"Wrote {path}")


def write_json(report, path=None):
    _emit(render_json(report), path)


def write_csv(frame, path=None):
    _emit(render_csv(frame), path)


def write_matrix_csv(op, path):
    """Operator matrix, row-major, one row per flat state"""
    frame = op.to_frame().reset_index()
    _emit(render_csv(frame), path)


def table_paths(base, names):
    """One CSV path per table: the base itself for one table, suffixed otherwise"""
    if len(names) == 1:
        return {names[0]: base}
    stem, ext = os.path.splitext(base)
    return {name: f"{stem}_{name}{ext or '.csv'}" for name in names}
