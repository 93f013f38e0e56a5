"""Base-delta-immediate compression over fixed 32-byte granules.

Every granule is stored as a one-byte encoding id followed by its payload.
Candidate encodings, tried in this order (the first of the smallest wins):

    0  all zero                  no payload
    1  repeated 8-byte value     8 bytes
    2  base8 / delta1            8 + 4
    3  base8 / delta2            8 + 8
    4  base8 / delta4            8 + 16
    5  base4 / delta1            4 + 8
    6  base4 / delta2            4 + 16
    7  base2 / delta1            2 + 16
    8  raw                       32

The base is the first value of the granule; deltas are two's-complement
differences modulo the base width, so decoding is exact for any input.
"""
from __future__ import annotations

import numpy as np

from ..errors import CorruptBlockError, SizeError
from .block import CompressedBlock

GRANULE = 32

ZERO, REPEAT, RAW = 0, 1, 8
# id -> (base bytes, delta bytes)
BASE_DELTA = {2: (8, 1), 3: (8, 2), 4: (8, 4), 5: (4, 1), 6: (4, 2), 7: (2, 1)}

_UINT = {8: np.uint64, 4: np.uint32, 2: np.uint16, 1: np.uint8}
_INT = {8: np.int64, 4: np.int32, 2: np.int16, 1: np.int8}


def encoded_size(enc: int) -> int:
    """Payload bytes of one granule under encoding `enc` (header excluded)."""
    if enc == ZERO:
        return 0
    if enc == REPEAT:
        return 8
    if enc == RAW:
        return GRANULE
    base, delta = BASE_DELTA[enc]
    return base + (GRANULE // base) * delta


def _deltas(granules: np.ndarray, base: int) -> np.ndarray:
    """Signed deltas of each word from the granule's first word, per row."""
    words = granules.view("<" + np.dtype(_UINT[base]).str[1:]).astype(_UINT[base])
    d = words - words[:, :1]
    return d.view(_INT[base])


def choose_encodings(granules: np.ndarray) -> np.ndarray:
    """Smallest applicable encoding id for every row of a (G, 32) uint8 array."""
    g = granules.shape[0]
    best = np.full(g, RAW)
    best_size = np.full(g, GRANULE + 1)
    fits = {ZERO: ~granules.any(axis=1)}
    q = granules.view("<u8")
    fits[REPEAT] = (q == q[:, :1]).all(axis=1)
    for enc, (base, delta) in BASE_DELTA.items():
        d = _deltas(granules, base)
        lim = 1 << (8 * delta - 1)
        fits[enc] = ((d >= -lim) & (d < lim)).all(axis=1)
    fits[RAW] = np.ones(g, dtype=bool)
    for enc in range(9):
        size = encoded_size(enc)
        take = fits[enc] & (size < best_size)
        best[take] = enc
        best_size[take] = size
    return best


def bdi_compress(block: bytes) -> CompressedBlock:
    """Compress `block` (length a multiple of 32 bytes)."""
    data = np.frombuffer(bytes(block), dtype=np.uint8)
    if data.size % GRANULE:
        raise SizeError(f"BDI input must be a multiple of {GRANULE} bytes, got {data.size}")
    granules = data.reshape(-1, GRANULE)
    encs = choose_encodings(granules)
    out = bytearray()
    for row, enc in zip(granules, encs):
        out.append(int(enc))
        out += _encode_granule(row, int(enc))
    return CompressedBlock("bdi", bytes(out), data.size)


def _encode_granule(row: np.ndarray, enc: int) -> bytes:
    if enc == ZERO:
        return b""
    if enc == REPEAT:
        return row[:8].tobytes()
    if enc == RAW:
        return row.tobytes()
    base, delta = BASE_DELTA[enc]
    d = _deltas(row[None], base)[0]
    return row[:base].tobytes() + d.astype("<" + np.dtype(_INT[delta]).str[1:]).tobytes()


def bdi_decompress(block: CompressedBlock | bytes) -> bytes:
    """Inverse of `bdi_compress`; also accepts a bare payload."""
    payload = block.payload if isinstance(block, CompressedBlock) else bytes(block)
    out = bytearray()
    i = 0
    n = len(payload)
    while i < n:
        enc = payload[i]
        i += 1
        if enc > RAW:
            raise CorruptBlockError(f"unknown BDI encoding id {enc}")
        size = encoded_size(enc)
        if i + size > n:
            raise CorruptBlockError("BDI payload truncated")
        out += _decode_granule(payload[i : i + size], enc)
        i += size
    if isinstance(block, CompressedBlock) and len(out) != block.original_size:
        raise CorruptBlockError("BDI payload does not match original size")
    return bytes(out)


def _decode_granule(buf: bytes, enc: int) -> bytes:
    if enc == ZERO:
        return bytes(GRANULE)
    if enc == REPEAT:
        return buf * (GRANULE // 8)
    if enc == RAW:
        return buf
    base, delta = BASE_DELTA[enc]
    b = np.frombuffer(buf[:base], dtype="<" + np.dtype(_UINT[base]).str[1:])[0]
    d = np.frombuffer(buf[base:], dtype="<" + np.dtype(_INT[delta]).str[1:])
    words = (d.astype(_INT[base]).view(_UINT[base]) + b).astype("<" + np.dtype(_UINT[base]).str[1:])
    return words.tobytes()


def pad_to_granule(data: bytes) -> bytes:
    return bytes(data) + bytes(-len(data) % GRANULE)
