"""Two-level tile compressor.

Level 1 turns a sparse tile into CSC arrays; level 2 compresses the values
and row ids with BDI and the column counts with FPC. Dense tiles bypass
CSC and go straight through BDI.

Payload layout: mode byte, three uint32 LE segment lengths, segments.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import CorruptBlockError, ShapeError
from .bdi import GRANULE, bdi_compress, bdi_decompress, pad_to_granule
from .block import CompressedBlock
from .csc import CscEncoding, csc_decode, csc_encode
from .fpc import fpc_compress, fpc_decompress

MODE_DENSE, MODE_SPARSE = 0, 1
HEADER = struct.Struct("<BIII")
HEADER_SIZE = HEADER.size


def as_matrix(tile) -> np.ndarray:
    """View a tile of any rank as (rows, last-axis columns)."""
    t = np.asarray(tile, dtype=np.int32)
    if t.ndim == 1:
        return t[None]
    return t.reshape(-1, t.shape[-1])


def _words(a) -> bytes:
    return np.asarray(a, dtype="<i4").tobytes()


def hybrid_compress(tile, mode: str = "sparse", parallel: bool = False) -> CompressedBlock:
    """Compress a tile; `mode` is ``"sparse"``, ``"dense"`` or ``"auto"`` (smaller wins)."""
    t = np.asarray(tile)
    m = as_matrix(t)
    if mode == "auto":
        sparse = hybrid_compress(t, "sparse", parallel)
        dense = hybrid_compress(t, "dense")
        return sparse if len(sparse) < len(dense) else dense
    if mode == "dense":
        segs = (bdi_compress(pad_to_granule(_words(m))).payload, b"", b"")
        tag = MODE_DENSE
    elif mode == "sparse":
        e = csc_encode(m)
        jobs = (
            lambda: bdi_compress(pad_to_granule(_words(e.nnz_values))).payload,
            lambda: bdi_compress(pad_to_granule(_words(e.row_ids))).payload,
            lambda: fpc_compress(_words(e.col_counts)).payload,
        )
        if parallel:
            with ThreadPoolExecutor(max_workers=3) as ex:
                segs = tuple(f.result() for f in [ex.submit(j) for j in jobs])
        else:
            segs = tuple(j() for j in jobs)
        tag = MODE_SPARSE
    else:
        raise ValueError(f"unknown hybrid mode {mode!r}")
    payload = HEADER.pack(tag, *map(len, segs)) + b"".join(segs)
    return CompressedBlock("hybrid", payload, 4 * m.size, {"shape": t.shape})


def split_segments(payload: bytes) -> tuple[int, tuple[bytes, bytes, bytes]]:
    if len(payload) < HEADER_SIZE:
        raise CorruptBlockError("hybrid payload shorter than its header")
    tag, *lens = HEADER.unpack_from(payload)
    if tag not in (MODE_DENSE, MODE_SPARSE):
        raise CorruptBlockError(f"unknown hybrid mode tag {tag}")
    if HEADER_SIZE + sum(lens) != len(payload):
        raise CorruptBlockError("hybrid segment lengths do not match payload")
    segs, off = [], HEADER_SIZE
    for n in lens:
        segs.append(payload[off : off + n])
        off += n
    return tag, tuple(segs)


def decode_values(seg: bytes) -> np.ndarray:
    """Decode a BDI-coded int32 segment (values or row ids, zero padded)."""
    return np.frombuffer(bdi_decompress(seg), dtype="<i4").astype(np.int32)


def decode_col_counts(seg: bytes, n_cols: int) -> np.ndarray:
    return np.frombuffer(fpc_decompress(seg, n_cols), dtype="<i4").astype(np.int32)


def hybrid_decompress(block: CompressedBlock, shape=None) -> np.ndarray:
    shape = tuple(shape if shape is not None else block.meta.get("shape", ()))
    if not shape:
        raise ShapeError("tile shape is needed to decode a hybrid block")
    m_shape = as_matrix(np.empty(shape, dtype=np.int8)).shape
    tag, (s1, s2, s3) = split_segments(block.payload)
    if tag == MODE_DENSE:
        vals = decode_values(s1)
        n = int(np.prod(shape))
        if vals.size != -(-n * 4 // GRANULE) * GRANULE // 4:
            raise CorruptBlockError("dense segment has the wrong length")
        return vals[:n].reshape(shape)
    counts = decode_col_counts(s3, m_shape[1])
    k = int(counts.sum())
    vals, rows = decode_values(s1), decode_values(s2)
    if vals.size < k or rows.size < k:
        raise CorruptBlockError("CSC segments shorter than the column counts")
    e = CscEncoding(vals[:k], rows[:k], counts)
    return csc_decode(e, m_shape).reshape(shape)


def worst_case_size(shape, mode: str = "sparse") -> int:
    """Largest payload `hybrid_compress` can produce for a tile of `shape`."""
    rows_cols = as_matrix(np.empty(shape, dtype=np.int8)).shape
    n = rows_cols[0] * rows_cols[1]

    def bdi_max(n_words: int) -> int:
        g = -(-4 * n_words // GRANULE)
        return g * (GRANULE + 1)

    dense = HEADER_SIZE + bdi_max(n)
    sparse = HEADER_SIZE + 2 * bdi_max(n) + -(-35 * rows_cols[1] // 8)
    if mode == "dense":
        return dense
    if mode == "sparse":
        return sparse
    if mode == "auto":
        return dense
    raise ValueError(f"unknown hybrid mode {mode!r}")
