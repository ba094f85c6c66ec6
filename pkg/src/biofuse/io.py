"""File formats: CSV for matrices, JSON for configs, models and reports.

Every writer goes through :func:`atomic_write`, so a crashed run never
leaves a half-written output behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from biofuse.dataset import CASE, CONTROL, Dataset, SourceTag
from biofuse.errors import FormatError, InputMissing
from biofuse.spectra import Spectrum

SCHEMA_VERSION = 1


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _open_text(path) -> str:
    path = Path(path)
    if not path.exists():
        raise InputMissing(f"input file not found: {path}")
    return path.read_text(encoding="utf-8")


def _rows(path) -> list[list[str]]:
    rows = [r for r in csv.reader(io.StringIO(_open_text(path))) if r]
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    return rows


def _floats(cells, where: str) -> np.ndarray:
    try:
        return np.array([float(c) for c in cells], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from None


def _fmt(x: float) -> str:
    return repr(float(x))  # shortest round-trip form


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_json(path, data) -> Path:
    return atomic_write(path, json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(_open_text(path))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


# spectra: header ``mz,<id1>,<id2>,...``, one row per grid point

def read_spectra_csv(path) -> list[Spectrum]:
    rows = _rows(path)
    header = rows[0]
    if len(header) < 2 or header[0].strip().lower() != "mz":
        raise FormatError(f"{path}: header must start with 'mz' followed by sample ids")
    width = len(header)
    if any(len(r) != width for r in rows[1:]):
        raise FormatError(f"{path}: ragged rows")
    values = np.vstack([_floats(r, f"{path} line {i + 2}") for i, r in enumerate(rows[1:])]) if rows[1:] else None
    if values is None or values.shape[0] < 2:
        raise FormatError(f"{path}: need at least two grid points")
    mz = values[:, 0]
    try:
        return [Spectrum(mz, values[:, j], header[j].strip()) for j in range(1, width)]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_spectra_csv(path, spectra: Sequence[Spectrum]) -> Path:
    if not spectra:
        raise FormatError("no spectra to write")
    mz = spectra[0].mz
    cols = np.column_stack([mz] + [s.intensity for s in spectra])
    header = ["mz"] + [s.sample_id for s in spectra]
    return atomic_write(path, csv_text(header, ([_fmt(x) for x in row] for row in cols)))


# tables: header ``sample_id,<col1>,...``, one row per sample

def read_table_csv(path, tag: SourceTag = SourceTag.PANEL) -> Dataset:
    rows = _rows(path)
    header = rows[0]
    if len(header) < 2 or header[0].strip() != "sample_id":
        raise FormatError(f"{path}: header must start with 'sample_id'")
    if any(len(r) != len(header) for r in rows[1:]):
        raise FormatError(f"{path}: ragged rows")
    ids = [r[0].strip() for r in rows[1:]]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate sample ids")
    X = np.vstack([_floats(r[1:], f"{path} line {i + 2}") for i, r in enumerate(rows[1:])]) if ids else None
    if X is None:
        raise FormatError(f"{path}: no samples")
    names = [h.strip() for h in header[1:]]
    return Dataset(X, np.zeros(len(ids), dtype=np.int64), [tag] * len(names), names, ids)


def write_table_csv(path, d: Dataset) -> Path:
    rows = ([sid] + [_fmt(x) for x in row] for sid, row in zip(d.sample_ids, d.X))
    return atomic_write(path, csv_text(["sample_id"] + list(d.column_names), rows))


def read_labels_csv(path) -> dict[str, int]:
    """``sample_id,label`` with labels +1 (case) or -1 (control)."""
    rows = _rows(path)
    if [h.strip() for h in rows[0]] != ["sample_id", "label"]:
        raise FormatError(f"{path}: header must be 'sample_id,label'")
    out: dict[str, int] = {}
    for i, r in enumerate(rows[1:]):
        if len(r) != 2:
            raise FormatError(f"{path} line {i + 2}: expected two fields")
        try:
            v = int(r[1])
        except ValueError:
            raise FormatError(f"{path} line {i + 2}: label {r[1]!r} is not an integer") from None
        if v not in (CASE, CONTROL):
            raise FormatError(f"{path} line {i + 2}: label must be 1 or -1")
        sid = r[0].strip()
        if sid in out:
            raise FormatError(f"{path}: duplicate sample id {sid!r}")
        out[sid] = v
    return out


def write_labels_csv(path, sample_ids: Sequence[str], labels) -> Path:
    rows = ([sid, str(int(v))] for sid, v in zip(sample_ids, labels))
    return atomic_write(path, csv_text(["sample_id", "label"], rows))


def labels_for(ids: Sequence[str], labels: dict[str, int], where: str = "labels") -> np.ndarray:
    missing = [i for i in ids if i not in labels]
    if missing:
        raise FormatError(f"{where}: no label for {len(missing)} samples, e.g. {missing[0]!r}")
    return np.array([labels[i] for i in ids], dtype=np.int64)
