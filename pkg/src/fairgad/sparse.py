"""CSR sparse matrices and symmetric adjacency normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = ["SparseMatrix", "build_csr", "symmetric_normalize", "adjacency_std"]


@dataclass
class SparseMatrix:
    """Immutable CSR matrix.

    Within each row, column indices are strictly increasing and entries are
    unique.  scipy views are cached for the propagation kernels.
    """

    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _scipy: object = field(default=None, repr=False, compare=False)
    _scipy_t: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.row_ptr = np.asarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(self.col_idx, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.row_ptr.shape != (self.rows + 1,):
            raise ValueError("row_ptr length must be rows + 1")
        if self.row_ptr[0] != 0 or np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must start at 0 and be nondecreasing")
        nnz = int(self.row_ptr[-1])
        if len(self.col_idx) != nnz or len(self.values) != nnz:
            raise ValueError("row_ptr[-1] must equal nnz")
        if nnz and (self.col_idx.min() < 0 or self.col_idx.max() >= self.cols):
            raise ValueError("column index out of range")
        for i in range(self.rows):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            if hi - lo > 1 and np.any(np.diff(self.col_idx[lo:hi]) <= 0):
                raise ValueError(f"row {i} has unsorted or duplicate column indices")

    @property
    def shape(self) -> tuple:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def to_scipy(self) -> sp.csr_matrix:
        if self._scipy is None:
            m = sp.csr_matrix(
                (self.values, self.col_idx, self.row_ptr), shape=self.shape, copy=False
            )
            object.__setattr__(self, "_scipy", m)
        return self._scipy

    def to_scipy_t(self) -> sp.csr_matrix:
        if self._scipy_t is None:
            object.__setattr__(self, "_scipy_t", self.to_scipy().T.tocsr())
        return self._scipy_t

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def entries(self):
        """Yield (row, col, value) triples in storage order."""
        for i in range(self.rows):
            for k in range(self.row_ptr[i], self.row_ptr[i + 1]):
                yield i, int(self.col_idx[k]), float(self.values[k])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )


def _from_coo(rows: int, cols: int, r: np.ndarray, c: np.ndarray, v: np.ndarray) -> SparseMatrix:
    order = np.lexsort((c, r))
    r, c, v = r[order], c[order], v[order]
    row_ptr = np.zeros(rows + 1, dtype=np.int64)
    np.add.at(row_ptr, r + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return SparseMatrix(rows, cols, row_ptr, c, v)


def build_csr(edge_list, n: int) -> SparseMatrix:
    """Binary symmetric CSR adjacency from a raw edge list.

    Input pairs may be unsorted, duplicated or one-directional; self-loops
    are stripped (normalization adds exactly one later).
    """
    edges = np.asarray(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
        raise ValueError(f"edge ({bad[0]}, {bad[1]}) out of range for n={n}")
    if edges.size == 0:
        return SparseMatrix(n, n, np.zeros(n + 1, dtype=np.int64), [], [])
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    keep = src != dst
    src, dst = src[keep], dst[keep]
    pair_keys = src * np.int64(n) + dst
    keys = np.unique(pair_keys)
    r, c = keys // n, keys % n
    return _from_coo(n, n, r, c, np.ones(len(keys), dtype=np.float64))


def symmetric_normalize(a: SparseMatrix) -> SparseMatrix:
    """Degree-normalized adjacency with self-loops added.

    Each entry (i, j) of the result, including the diagonal, is exactly
    1/sqrt(deg_i * deg_j) with deg counting the added self-loop.
    """
    n = a.rows
    degree = np.diff(a.row_ptr).astype(np.float64) + 1.0
    coo = (a.to_scipy() + sp.identity(n, format="csr")).tocoo()
    vals = 1.0 / np.sqrt(degree[coo.row] * degree[coo.col])
    return _from_coo(n, n, coo.row.astype(np.int64), coo.col.astype(np.int64), vals)


def adjacency_std(a: SparseMatrix) -> float:
    """Population standard deviation over all dense entries of a binary
    adjacency, zeros included, computed from the fill ratio."""
    total = a.rows * a.cols
    if total == 0:
        raise ValueError("empty matrix")
    p = a.nnz / total
    return float(np.sqrt(p * (1.0 - p)))
