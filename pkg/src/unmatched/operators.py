"""Matrix-free linear operators and unmatched forward/back pairs.

Solvers in this package never touch matrix entries or transposes; they only
apply actions.  This module defines the action abstraction (:class:`LinearMap`),
dense and compressed-row realizations, the :class:`UnmatchedPair` bundling a
forward map with an (in general non-adjoint) back map plus a shared
multiplication counter, and the damped augmentation that turns a pair
iteration into its shifted variant.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.sparse


class ShapeError(ValueError):
    """Vector or matrix dimensions do not match an operator's shape."""


def _as_vector(x, length, what="input"):
    x = np.asarray(x)
    if x.ndim != 1:
        raise ShapeError(f"{what} must be 1-d, got ndim={x.ndim}")
    if x.shape[0] != length:
        raise ShapeError(f"{what} has length {x.shape[0]}, expected {length}")
    return x


class LinearMap:
    """A linear action y = M x with fixed shape, applied matrix-free.

    The action must be deterministic and R-linear.  Real and complex input
    vectors are both accepted (the map acts as its own complexification);
    this keeps restarted Krylov bases cheap after a complex restart.

    Parameters
    ----------
    rows, cols : int
        Output and input dimensions, both positive.
    action : callable
        Maps a length-``cols`` vector to a length-``rows`` vector.
    """

    def __init__(self, rows: int, cols: int, action):
        if rows <= 0 or cols <= 0:
            raise ShapeError(f"shape must be positive, got ({rows}, {cols})")
        self.rows = int(rows)
        self.cols = int(cols)
        self._action = action

    @property
    def shape(self):
        return (self.rows, self.cols)

    def apply(self, x):
        """Apply the map to ``x``, validating the input length."""
        x = _as_vector(x, self.cols)
        y = np.asarray(self._action(x))
        if y.shape != (self.rows,):
            raise ShapeError(
                f"action returned shape {y.shape}, expected ({self.rows},)")
        return y

    def __call__(self, x):
        return self.apply(x)

    def __repr__(self):
        return f"{type(self).__name__}({self.rows}x{self.cols})"


class DenseMatrix(LinearMap):
    """LinearMap realized by an explicitly stored dense matrix.

    Entries are float64, row-major.
    """

    def __init__(self, array):
        a = np.array(array, dtype=float, order="C", copy=True)
        if a.ndim != 2:
            raise ShapeError(f"dense matrix must be 2-d, got ndim={a.ndim}")
        a.setflags(write=False)
        self.array = a
        super().__init__(a.shape[0], a.shape[1], a.__matmul__)

    def to_array(self):
        return self.array


class SparseMatrix(LinearMap):
    """LinearMap realized by compressed-row storage.

    Column indices are strictly increasing within each row (no duplicates).
    Backed by scipy CSR for the matvec kernel.
    """

    def __init__(self, rows, cols, row_offsets, col_indices, values):
        m = scipy.sparse.csr_matrix(
            (np.asarray(values, dtype=float),
             np.asarray(col_indices, dtype=np.int64),
             np.asarray(row_offsets, dtype=np.int64)),
            shape=(rows, cols),
        )
        SparseMatrix._check_strictly_increasing(m)
        self._csr = m
        super().__init__(rows, cols, m.__matmul__)

    @staticmethod
    def _check_strictly_increasing(m):
        for i in range(m.shape[0]):
            cols = m.indices[m.indptr[i]:m.indptr[i + 1]]
            if cols.size > 1 and not np.all(np.diff(cols) > 0):
                raise ValueError(
                    f"column indices in row {i} are not strictly increasing")

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = scipy.sparse.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @property
    def row_offsets(self):
        return self._csr.indptr

    @property
    def col_indices(self):
        return self._csr.indices

    @property
    def values(self):
        return self._csr.data

    def to_array(self):
        return self._csr.toarray()


def identity_map(n: int) -> LinearMap:
    return LinearMap(n, n, lambda x: np.array(x, copy=True))


def to_dense_array(m: LinearMap) -> np.ndarray:
    """Materialize a map as a dense array (for desk-scale oracles only).

    Stored realizations are returned directly; opaque actions are probed
    with basis vectors, which costs ``cols`` applications.
    """
    if hasattr(m, "to_array"):
        return m.to_array()
    cols = np.empty((m.rows, m.cols))
    e = np.zeros(m.cols)
    for j in range(m.cols):
        e[j] = 1.0
        cols[:, j] = m.apply(e)
        e[j] = 0.0
    return cols


class _MvmCounter:
    """Monotone application counter, safe under concurrent applies."""

    def __init__(self):
        self._value = 0
        self._lock = threading.Lock()

    def bump(self):
        with self._lock:
            self._value += 1

    @property
    def value(self):
        return self._value


class _CountingMap(LinearMap):
    """Wraps a map so each application ticks the owning pair's counter."""

    def __init__(self, base: LinearMap, counter: _MvmCounter):
        self.base = base
        self._counter = counter
        super().__init__(base.rows, base.cols, self._counted)

    def _counted(self, x):
        self._counter.bump()
        return self.base.apply(x)


class UnmatchedPair:
    """A forward map and a back map that is not (necessarily) its adjoint.

    ``forward`` is m x n, ``back`` is n x m.  Every application of either
    map through the pair increments ``mvm_count`` by one; this is the cost
    unit for all matrix-free estimators.

    The maps exposed as ``pair.forward`` / ``pair.back`` are counting
    wrappers around the maps given at construction (available as
    ``pair.forward.base`` / ``pair.back.base``).
    """

    def __init__(self, forward: LinearMap, back: LinearMap):
        if forward.rows != back.cols or forward.cols != back.rows:
            raise ShapeError(
                f"incompatible pair: forward is {forward.shape}, "
                f"back is {back.shape}")
        self._counter = _MvmCounter()
        self.forward = _CountingMap(forward, self._counter)
        self.back = _CountingMap(back, self._counter)

    @classmethod
    def from_arrays(cls, a, b) -> "UnmatchedPair":
        return cls(DenseMatrix(a), DenseMatrix(b))

    @property
    def image_dim(self) -> int:
        """Length of solution vectors (n)."""
        return self.forward.cols

    @property
    def data_dim(self) -> int:
        """Length of data vectors (m)."""
        return self.forward.rows

    @property
    def mvm_count(self) -> int:
        return self._counter.value

    def composed(self) -> LinearMap:
        """The n x n map x -> back(forward(x)); one apply costs 2 MVMs."""
        return LinearMap(self.image_dim, self.image_dim,
                         lambda x: self.back.apply(self.forward.apply(x)))

    def densify(self):
        """(forward, back) as dense arrays, bypassing the MVM counter."""
        return (to_dense_array(self.forward.base),
                to_dense_array(self.back.base))


def compose(pair: UnmatchedPair) -> LinearMap:
    """Module-level alias for :meth:`UnmatchedPair.composed`."""
    return pair.composed()


def augment(pair: UnmatchedPair, alpha: float) -> UnmatchedPair:
    """Damped augmentation of a pair.

    Returns the pair with forward [F; sqrt(alpha) I] ((m+n) x n) and back
    [B, sqrt(alpha) I] (n x (m+n)).  Its composed map is the original
    composed map plus alpha times the identity, so running the plain
    iteration on the augmented pair (with the zero-padded data vector)
    reproduces the shifted iteration exactly.

    The result owns a fresh MVM counter; its forward/back actions invoke
    the original raw maps, not the original pair's counting wrappers.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    root = float(np.sqrt(alpha))
    fwd, back = pair.forward.base, pair.back.base
    m, n = fwd.rows, fwd.cols

    def aug_forward(x):
        return np.concatenate([fwd.apply(x), root * x])

    def aug_back(y):
        return back.apply(y[:m]) + root * y[m:]

    return UnmatchedPair(LinearMap(m + n, n, aug_forward),
                         LinearMap(n, m + n, aug_back))


def augment_rhs(b, n: int) -> np.ndarray:
    """Pad a data vector with n trailing zeros (companion to :func:`augment`)."""
    b = np.asarray(b, dtype=float)
    return np.concatenate([b, np.zeros(n)])
