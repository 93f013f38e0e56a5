"""Compressed sparse column encoding of 2D tiles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


@dataclass(frozen=True)
class CscEncoding:
    """Non-zero values, their row ids, and the number of entries per column."""

    nnz_values: np.ndarray
    row_ids: np.ndarray
    col_counts: np.ndarray

    def __post_init__(self):
        if not (len(self.nnz_values) == len(self.row_ids) == int(np.sum(self.col_counts))):
            raise ShapeError("CSC arrays are inconsistent")

    @property
    def n_cols(self) -> int:
        return len(self.col_counts)

    @property
    def nbytes(self) -> int:
        """Size with every field stored as a 32-bit word."""
        return 4 * (len(self.nnz_values) + len(self.row_ids) + len(self.col_counts))


def csc_encode(m) -> CscEncoding:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeError(f"CSC needs a 2D tensor, got rank {m.ndim}")
    cols, rows = np.nonzero(m.T)  # column-major scan
    return CscEncoding(
        nnz_values=m.T[cols, rows].astype(np.int32),
        row_ids=rows.astype(np.int32),
        col_counts=np.bincount(cols, minlength=m.shape[1]).astype(np.int32),
    )


def csc_decode(e: CscEncoding, dims) -> np.ndarray:
    dims = tuple(dims)
    if len(dims) != 2:
        raise ShapeError("CSC decodes to a 2D tensor")
    if e.n_cols != dims[1]:
        raise ShapeError(f"encoding has {e.n_cols} columns, dims say {dims[1]}")
    out = np.zeros(dims, dtype=np.int32)
    cols = np.repeat(np.arange(e.n_cols), e.col_counts)
    if len(e.row_ids) and (e.row_ids.min() < 0 or e.row_ids.max() >= dims[0]):
        raise ShapeError("row id outside the tile")
    out[e.row_ids, cols] = e.nnz_values
    return out
