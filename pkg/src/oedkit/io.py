"""CSV helpers. Floats are written in shortest round-trip form (``repr``)."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["fmt", "write_csv", "read_table", "read_matrix", "read_vector"]


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_table(path):
    """Header and rows (as strings) of a CSV file."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_matrix(path, columns=None) -> np.ndarray:
    """Numeric CSV as a 2-D array; a non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path} is empty")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    data = np.array([[float(c) for c in r] for r in rows], dtype=float).reshape(len(rows), -1)
    if columns is not None:
        if header is None:
            raise ValueError(f"{path} has no header; cannot select columns {columns}")
        data = data[:, [header.index(c) for c in columns]]
    return data


def read_vector(path) -> np.ndarray:
    """A single row or a single column of numbers, flattened."""
    m = read_matrix(path)
    if m.shape[0] != 1 and m.shape[1] != 1:
        raise ValueError(f"{path} must hold a single row or a single column")
    return m.ravel()
