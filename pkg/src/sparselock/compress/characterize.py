"""Compression ratio characterization of synthetic tiles, written as CSV rows."""
from __future__ import annotations

import csv
import io
import time
from typing import Sequence

import numpy as np

from .. import convnet
from .bdi import bdi_compress, pad_to_granule
from .block import compression_ratio
from .fpc import fpc_compress
from .huffman import huffman_compress
from .hybrid import hybrid_compress
from .rle import rle_compress

CODECS = ("bdi", "fpc", "rle", "huffman", "hybrid")


def _compress(codec: str, tile: np.ndarray):
    raw = tile.astype("<i4").tobytes()
    if codec == "bdi":
        return bdi_compress(pad_to_granule(raw))
    if codec == "fpc":
        return fpc_compress(raw)
    if codec == "rle":
        return rle_compress(raw)
    if codec == "huffman":
        return huffman_compress(raw)
    if codec == "hybrid":
        return hybrid_compress(tile, "sparse")
    raise ValueError(f"unknown codec {codec!r}")


def characterize(n_tiles: int = 100, shape=(64, 64), sparsity=(0.6, 0.8), seed: int = 0,
                 codecs: Sequence[str] = CODECS, dist: str = "q16") -> list[dict]:
    """Ratio of every codec on `n_tiles` random tiles with sparsity drawn from `sparsity`."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_tiles):
        s = float(rng.uniform(*sparsity))
        tile = convnet.random_sparse_tensor(shape, s, rng, dist)
        for c in codecs:
            t0 = time.perf_counter()
            blk = _compress(c, tile)
            rows.append({"tensor_id": i, "sparsity": s, "codec": c,
                         "ratio": compression_ratio(blk), "time": time.perf_counter() - t0})
    return rows


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["tensor_id", "sparsity", "codec", "ratio", "time"], lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def hybrid_over_bdi(rows: list[dict]) -> np.ndarray:
    """Per-tile ratio(hybrid) / ratio(BDI)."""
    by = {(r["tensor_id"], r["codec"]): r["ratio"] for r in rows}
    ids = sorted({r["tensor_id"] for r in rows})
    return np.array([by[(i, "hybrid")] / by[(i, "bdi")] for i in ids])
