"""CSV readers and writers for datasets, reflectances and per-pixel summaries.

Every file written here starts with one ``#`` comment line carrying the
schema tag (and, for datasets, the seed and target); readers skip comment
lines, so plain header-first CSV files are accepted as well.
"""
from __future__ import annotations

import csv
import math
import re
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .simulation import Dataset

__all__ = [
    "DataError",
    "NumericalError",
    "write_dataset",
    "read_dataset",
    "ingest_reflectance_csv",
    "write_summary_csv",
    "read_summary_csv",
    "write_rows",
]

DATASET_SCHEMA = "upnet.dataset/1"
SUMMARY_SCHEMA = "upnet.summary/1"


def _fmt(v) -> str:
    return repr(float(v))


def _read_rows(path):
    """Return (comment lines, header, [(line number, row), ...])."""
    comments, header, rows = [], None, []
    with Path(path).open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].startswith("#"):
                comments.append(",".join(row)[1:].strip())
                continue
            if header is None:
                header = [h.strip() for h in row]
            else:
                rows.append((lineno, row))
    if header is None:
        raise DataError(f"{path}: file has no header line")
    return comments, header, rows


def _parse_meta(comments):
    meta = {}
    for line in comments:
        for tok in line.split():
            if "=" in tok:
                key, val = tok.split("=", 1)
                meta[key] = val
    return meta


def _numeric(rows, ncols, path, columns=None):
    out = np.empty((len(rows), len(columns) if columns is not None else ncols))
    for i, (lineno, row) in enumerate(rows):
        if len(row) != ncols:
            raise DataError(f"{path}: line {lineno} has {len(row)} cells, expected {ncols}")
        cells = row if columns is None else [row[c] for c in columns]
        try:
            out[i] = [float(c) for c in cells]
        except ValueError:
            raise DataError(f"{path}: line {lineno} has a non-numeric cell") from None
    return out


def write_dataset(dataset: Dataset, path) -> None:
    n = dataset.reflectance.shape[1]
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# schema={DATASET_SCHEMA} seed={dataset.seed} "
                 f"target={dataset.target_name}\n")
        w = csv.writer(fh)
        w.writerow([f"theta_{name}" for name in dataset.names] + [f"r_{i + 1}" for i in range(n)])
        for t, r in zip(dataset.theta, dataset.reflectance):
            w.writerow([_fmt(v) for v in t] + [_fmt(v) for v in r])


def read_dataset(path) -> Dataset:
    comments, header, rows = _read_rows(path)
    names, n = [], 0
    for j, col in enumerate(header):
        if col.startswith("theta_"):
            if n:
                raise DataError(f"{path}: theta_ column {col!r} after reflectance columns")
            names.append(col[len("theta_"):])
        elif re.fullmatch(r"r_\d+", col):
            n += 1
            if col != f"r_{n}":
                raise DataError(f"{path}: expected column r_{n}, found {col!r}")
        else:
            raise DataError(f"{path}: unexpected column {col!r} in header")
    if not names or not n:
        raise DataError(f"{path}: header needs theta_* and r_* columns")
    values = _numeric(rows, len(header), path)
    meta = _parse_meta(comments)
    target = meta.get("target")
    k = names.index(target) if target in names else 0
    seed = meta.get("seed")
    seed = int(seed) if seed not in (None, "None") else None
    m = len(names)
    return Dataset(values[:, :m].reshape(-1, m), values[:, m:].reshape(-1, n), tuple(names), k, seed)


def ingest_reflectance_csv(path, expected_bands: int, band_names=None) -> np.ndarray:
    """Read reflectance rows from a CSV file.

    Columns are located by the ``r_1..r_n`` naming or, when ``band_names``
    is given (e.g. ``sensor_preset("landsat8").band_names``), by those names.
    Other columns are ignored, so dataset and prediction files are accepted.
    """
    comments, header, rows = _read_rows(path)
    wanted = list(band_names) if band_names is not None else [f"r_{i + 1}" for i in range(expected_bands)]
    if len(wanted) != expected_bands:
        raise DataError(f"expected {expected_bands} band names, got {len(wanted)}")
    found = [c for c in header if re.fullmatch(r"r_\d+", c)] if band_names is None \
        else [c for c in header if c in wanted]
    missing = [c for c in wanted if c not in header]
    if missing:
        raise DataError(f"{path}: header has {len(found)} reflectance columns, expected "
                        f"{expected_bands} ({', '.join(wanted)}); missing {', '.join(missing)}")
    if band_names is None and len(found) != expected_bands:
        raise DataError(f"{path}: header has {len(found)} reflectance columns, expected {expected_bands}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    cols = [header.index(c) for c in wanted]
    out = _numeric(rows, len(header), path, cols)
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        lineno = rows[int(np.argmax(bad))][0]
        raise DataError(f"{path}: line {lineno} has a missing or non-finite value")
    return out


def write_rows(path, header, rows, schema=SUMMARY_SCHEMA) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def write_summary_csv(path, reflectance, columns: dict) -> None:
    """Write ``r_1..r_n`` followed by the named per-record columns (``mean``, ``sd``, ...)."""
    reflectance = np.atleast_2d(np.asarray(reflectance, dtype=float))
    n = reflectance.shape[1]
    header = [f"r_{i + 1}" for i in range(n)] + list(columns)
    cols = [np.asarray(v, dtype=float).reshape(-1) for v in columns.values()]
    rows = (list(r) + [c[i] for c in cols] for i, r in enumerate(reflectance))
    write_rows(path, header, rows)


def read_summary_csv(path) -> dict[str, np.ndarray]:
    """Read any per-record CSV into a mapping column name -> float array."""
    _, header, rows = _read_rows(path)
    values = np.full((len(rows), len(header)), math.nan)
    for i, (lineno, row) in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell) if cell.strip() else math.nan
            except ValueError:
                raise DataError(f"{path}: line {lineno}, column {header[j]!r} is not numeric") from None
    return {h: values[:, j] for j, h in enumerate(header)}
