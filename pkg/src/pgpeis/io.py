"""Data files: ingestion, simulated-data output and draw tables."""
from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .models.invwishart import DataError


def vech_to_matrix(row, q: int) -> np.ndarray:
    """Symmetric matrix from its lower triangle listed row by row."""
    M = np.zeros((q, q))
    M[np.tril_indices(q)] = row
    return M + np.tril(M, -1).T


def matrix_to_vech(M) -> np.ndarray:
    q = M.shape[0]
    return np.asarray(M)[np.tril_indices(q)]


def q_from_columns(k: int) -> int:
    q = int(round((np.sqrt(8 * k + 1) - 1) / 2))
    if q * (q + 1) // 2 != k:
        raise DataError(0, f"{k} columns is not q(q+1)/2 for any q")
    return q


def _rows(path):
    with open(path, newline="") as fh:
        return [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]


def ingest(path, model: str) -> np.ndarray:
    """Observations for ``model``: a length-T series, or (T, q, q) matrices.

    Univariate files hold one value per row. Inverted-Wishart files hold the
    q(q+1)/2 lower-triangular entries of Y_t per row; every row must give a
    positive definite matrix. Row numbers in errors are 1-based.
    """
    rows = _rows(path)
    if not rows:
        raise DataError(0, f"{path} holds no data")
    try:
        vals = [[float(c) for c in r] for r in rows]
    except ValueError as e:
        bad = next(i for i, r in enumerate(rows) if not _all_float(r))
        raise DataError(bad + 1, f"not a number ({e})") from None
    width = len(vals[0])
    for i, r in enumerate(vals):
        if len(r) != width:
            raise DataError(i + 1, f"expected {width} columns, found {len(r)}")
    arr = np.array(vals)
    if not np.all(np.isfinite(arr)):
        raise DataError(int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0]) + 1, "non-finite value")
    if model in ("sv", "cev"):
        if width != 1:
            raise DataError(1, f"univariate data needs one column, found {width}")
        return arr[:, 0]
    if model == "invwishart":
        q = q_from_columns(width)
        Y = np.array([vech_to_matrix(r, q) for r in arr])
        for t in range(Y.shape[0]):
            try:
                np.linalg.cholesky(Y[t])
            except np.linalg.LinAlgError:
                raise DataError(t + 1, "matrix is not positive definite") from None
        return Y
    raise ValueError(f"unknown model {model!r}")


def _all_float(row) -> bool:
    try:
        [float(c) for c in row]
        return True
    except ValueError:
        return False


def write_observations(path, y) -> None:
    y = np.asarray(y)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if y.ndim == 1:
            for v in y:
                w.writerow([repr(float(v))])
        else:
            for M in y:
                w.writerow([repr(float(v)) for v in matrix_to_vech(M)])


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(c) for c in row] for row in r if row])
    return header, data.reshape(-1, len(header))


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
