"""Matrix Market I/O for matrices and vectors.

Thin wrappers over scipy.io: dense matrices use the ASCII array format,
sparse matrices the coordinate format (1-based indices), and vectors are
single-column dense arrays.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .operators import DenseMatrix, SparseMatrix


def _require_file(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such Matrix Market file: {path}")


def write_matrix(path, m) -> None:
    """Write a DenseMatrix/SparseMatrix/ndarray/scipy sparse matrix."""
    if isinstance(m, SparseMatrix):
        scipy.io.mmwrite(path, scipy.sparse.csr_matrix(
            (m.values, m.col_indices, m.row_offsets), shape=m.shape))
    elif isinstance(m, DenseMatrix):
        scipy.io.mmwrite(path, m.array)
    elif scipy.sparse.issparse(m):
        scipy.io.mmwrite(path, m)
    else:
        scipy.io.mmwrite(path, np.asarray(m, dtype=float))


def read_matrix(path):
    """Read a matrix; returns DenseMatrix or SparseMatrix per the file format."""
    _require_file(path)
    m = scipy.io.mmread(path)
    if scipy.sparse.issparse(m):
        return SparseMatrix.from_scipy(m)
    return DenseMatrix(np.asarray(m, dtype=float))


def write_vector(path, v) -> None:
    """Write a vector as a single-column dense Matrix Market array."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got ndim={v.ndim}")
    scipy.io.mmwrite(path, v.reshape(-1, 1))


def read_vector(path) -> np.ndarray:
    """Read a single-column Matrix Market array as a 1-d vector."""
    _require_file(path)
    m = scipy.io.mmread(path)
    if scipy.sparse.issparse(m):
        m = m.toarray()
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] != 1:
        raise ValueError(f"expected a single-column array, got shape {m.shape}")
    return m[:, 0]
