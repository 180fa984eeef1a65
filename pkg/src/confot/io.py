"""On-disk formats: binary logit files, label CSVs and experiment reports.

Logit file layout (all little-endian)::

    offset  size  field
    0       8     magic b"CONFOTL1"
    8       8     num_samples  (uint64)
    16      8     num_classes  (uint64)
    24      1     dtype code   (0 = float32, 1 = float64)
    25      ...   payload, sample-major rows of num_classes values

Logits are sample-major on disk and class-major (K x n) in memory.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct

import numpy as np

from .exceptions import DataError, FormatError, ParameterError

MAGIC = b"CONFOTL1"
HEADER = struct.Struct("<8sQQB")
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}

CSV_COLUMNS = ["method", "score", "alpha", "top1_mean", "top1_std", "cov_mean", "cov_std",
               "size_mean", "size_std", "ccv_mean", "ccv_std", "seeds"]


def write_logits(path, logits, dtype="float64"):
    """Write a class-major K x n matrix as a sample-major logit file."""
    arr = np.asarray(getattr(logits, "values", logits))
    if arr.ndim != 2:
        raise DataError(f"logits must be 2-dimensional, got shape {arr.shape}")
    code = {"float32": 0, "float64": 1}.get(np.dtype(dtype).name)
    if code is None:
        raise ParameterError(f"unsupported dtype {dtype!r}; use float32 or float64")
    n_classes, n_samples = arr.shape
    payload = np.ascontiguousarray(arr.T, dtype=DTYPES[code])
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, n_samples, n_classes, code))
        fh.write(payload.tobytes())


def read_logit_header(buf: bytes):
    if len(buf) < HEADER.size:
        raise FormatError(f"file too short for header: {len(buf)} < {HEADER.size} bytes", 0)
    magic, n_samples, n_classes, code = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}", 24)
    expected = n_samples * n_classes * DTYPES[code].itemsize
    actual = len(buf) - HEADER.size
    if expected != actual:
        raise FormatError(
            f"payload length mismatch: header declares {n_samples} x {n_classes} "
            f"{DTYPES[code].name} = {expected} bytes, file holds {actual}", HEADER.size)
    return n_samples, n_classes, code


def load_logits(path) -> np.ndarray:
    """Read a logit file into a float64 K x n matrix."""
    with open(path, "rb") as fh:
        buf = fh.read()
    n_samples, n_classes, code = read_logit_header(buf)
    dtype = DTYPES[code]
    payload = np.frombuffer(buf, dtype=dtype, offset=HEADER.size)
    bad = np.flatnonzero(~np.isfinite(payload))
    if bad.size:
        raise FormatError("non-finite logit value", HEADER.size + int(bad[0]) * dtype.itemsize)
    return payload.reshape(n_samples, n_classes).T.astype(np.float64)


def load_labels_csv(path) -> np.ndarray:
    """Read a single-column CSV of class indices with an optional ``label`` header."""
    labels = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 1:
                raise FormatError(f"line {lineno}: expected one column, got {len(row)}")
            cell = row[0].strip()
            if lineno == 1 and cell == "label":
                continue
            try:
                value = int(cell)
            except ValueError:
                raise FormatError(f"line {lineno}: {cell!r} is not an integer") from None
            if value < 0:
                raise FormatError(f"line {lineno}: negative label {value}")
            labels.append(value)
    if not labels:
        raise DataError(f"{path}: no labels found")
    return np.asarray(labels, dtype=np.int64)


def write_labels_csv(path, labels):
    with open(path, "w", newline="") as fh:
        fh.write("label\n")
        fh.writelines(f"{int(y)}\n" for y in labels)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_to_json(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def report_to_csv(report) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report["rows"]:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in CSV_COLUMNS])
    return out.getvalue()


def write_report(report, path, fmt="json"):
    """Write an aggregated report as JSON (full detail) or CSV (one row per method/score/alpha)."""
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ParameterError(f"unknown report format {fmt!r}; use json or csv")
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise DataError(f"cannot write report: directory {parent} does not exist")
    with open(path, "w", newline="") as fh:
        fh.write(text)


def read_report_csv(path) -> list:
    """Parse a CSV report back into a list of row dicts with numeric fields converted."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in CSV_COLUMNS[2:]:
            row[key] = int(row[key]) if key == "seeds" else float(row[key])
    return rows


def read_report_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)

