"""Plain CSV serialisation of fields, traces and tables.

All floats are written with ``%.17g`` so that a write/read round trip is
lossless.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

FIELD_HEADER = ("theta_index", "sigma_index", "component", "value")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_table(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_table(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_field(path, u):
    """Write a surface ``(M_theta, N)`` or thin ``(M_theta, M_sigma, N)`` field."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        j, c = np.meshgrid(np.arange(u.shape[0]), np.arange(u.shape[1]), indexing="ij")
        k = np.full_like(j, -1)
    elif u.ndim == 3:
        j, k, c = np.meshgrid(*(np.arange(n) for n in u.shape), indexing="ij")
    else:
        raise ValueError("field must be 2-d (surface) or 3-d (thin)")
    rows = zip(j.ravel().tolist(), k.ravel().tolist(), c.ravel().tolist(), u.ravel().tolist())
    return write_table(path, FIELD_HEADER, rows)


def read_field(path) -> np.ndarray:
    header, rows = read_table(path)
    if tuple(header) != FIELD_HEADER:
        raise ValueError(f"not a field file: header {header}")
    data = np.array([[float(x) for x in r] for r in rows])
    j, k, c = (data[:, i].astype(int) for i in range(3))
    if np.all(k == -1):
        u = np.empty((j.max() + 1, c.max() + 1))
        u[j, c] = data[:, 3]
    else:
        u = np.empty((j.max() + 1, k.max() + 1, c.max() + 1))
        u[j, k, c] = data[:, 3]
    return u
