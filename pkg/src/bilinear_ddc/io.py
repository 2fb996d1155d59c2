"""Matrix serialization and atomic file writes.

JSON stores matrices as row-major nested lists; CSV stores one matrix row per
line with ``%.17g`` formatting.  Both round-trip IEEE doubles exactly.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError

CSV_FLOAT = "%.17g"


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from exc


def matrix_to_json(M) -> str:
    return json.dumps(np.asarray(M, dtype=float).tolist())


def matrix_from_json(text: str, field: str = "matrix") -> np.ndarray:
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{field}: malformed JSON", field) from exc
    return as_matrix_field(rows, field)


def as_matrix_field(rows, field: str) -> np.ndarray:
    """Validate a decoded nested list as a finite 2-D float matrix."""
    try:
        M = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{field}: not a numeric matrix", field) from exc
    if M.ndim != 2:
        raise ValidationError(f"{field}: expected a 2-D matrix, got {M.ndim}-D", field)
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{field}: non-finite entries", field)
    return M


def matrix_to_csv(M) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(np.asarray(M, dtype=float)), delimiter=",", fmt=CSV_FLOAT)
    return buf.getvalue()


def matrix_from_csv(text: str, field: str = "matrix") -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    try:
        return as_matrix_field([[float(v) for v in r] for r in rows], field)
    except ValueError as exc:
        raise ValidationError(f"{field}: unparsable CSV entry", field) from exc


def write_rows_csv(path, header, rows) -> Path:
    """Write a table; floats use full precision, ``None`` becomes an empty cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (CSV_FLOAT % v if isinstance(v, float) else v) for v in row])
    return atomic_write_text(path, buf.getvalue())
