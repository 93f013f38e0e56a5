"""Frequent pattern compression over 32-bit little-endian words.

Each token is a 3-bit prefix followed by a pattern-specific payload:

    prefix  pattern                              payload bits
    000     run of zero words (count - 1)        3
    001     4-bit sign-extended                  4
    010     8-bit sign-extended                  8
    011     16-bit sign-extended                 16
    100     halfword padded with a zero halfword 16
    101     two sign-extended bytes (halfwords)  16
    110     word of one repeated byte            8
    111     uncompressed                         32

Zero runs are capped at 8 words. The word count comes from the block's
original size, so the bitstream carries no length header.
"""
from __future__ import annotations

import numpy as np

from ..errors import CorruptBlockError, SizeError
from .bits import BitReader, pack_fields
from .block import CompressedBlock

ZERO_RUN, SE4, SE8, SE16, HALF_PAD, TWO_HALVES, REP_BYTES, UNCOMPRESSED = range(8)
PAYLOAD_BITS = (3, 4, 8, 16, 16, 16, 8, 32)
MAX_RUN = 8


def _fits_signed(v: np.ndarray, bits: int) -> np.ndarray:
    lim = 1 << (bits - 1)
    return (v >= -lim) & (v < lim)


def classify(words: np.ndarray) -> np.ndarray:
    """Cheapest non-run pattern for each uint32 word."""
    s = words.view(np.int32).astype(np.int64)
    lo = (words & 0xFFFF).astype(np.uint16).view(np.int16).astype(np.int64)
    hi = (words >> 16).astype(np.uint16).view(np.int16).astype(np.int64)
    b0 = words & 0xFF
    rep = (b0 * 0x01010101) == words
    # candidates ordered by total token length, ties resolved by table order
    pat = np.full(words.shape, UNCOMPRESSED)
    checks = [
        (SE4, _fits_signed(s, 4)),
        (SE8, _fits_signed(s, 8)),
        (REP_BYTES, rep),
        (SE16, _fits_signed(s, 16)),
        (HALF_PAD, (words & 0xFFFF) == 0),
        (TWO_HALVES, _fits_signed(lo, 8) & _fits_signed(hi, 8)),
    ]
    for p, ok in reversed(checks):
        pat[ok] = p
    return pat


def _payload(word: int, pat: int) -> int:
    if pat in (SE4, SE8, SE16):
        return word & ((1 << PAYLOAD_BITS[pat]) - 1)
    if pat == HALF_PAD:
        return word >> 16
    if pat == TWO_HALVES:
        return ((word >> 16) & 0xFF) << 8 | (word & 0xFF)
    if pat == REP_BYTES:
        return word & 0xFF
    return word


def fpc_compress(block: bytes) -> CompressedBlock:
    data = bytes(block)
    if len(data) % 4:
        raise SizeError(f"FPC input must be a multiple of 4 bytes, got {len(data)}")
    words = np.frombuffer(data, dtype="<u4").astype(np.uint32)
    pats = classify(words)
    values, widths = [], []
    i, n = 0, words.size
    while i < n:
        if words[i] == 0:
            run = 1
            while run < MAX_RUN and i + run < n and words[i + run] == 0:
                run += 1
            values += [ZERO_RUN, run - 1]
            widths += [3, 3]
            i += run
            continue
        p = int(pats[i])
        values += [p, _payload(int(words[i]), p)]
        widths += [3, PAYLOAD_BITS[p]]
        i += 1
    return CompressedBlock("fpc", pack_fields(values, widths), len(data))


def _sext(v: int, bits: int) -> int:
    return v - (1 << bits) if v & (1 << (bits - 1)) else v


def fpc_decompress(block: CompressedBlock | bytes, n_words: int | None = None) -> bytes:
    """Inverse of `fpc_compress`.

    A bare payload needs `n_words`; a `CompressedBlock` supplies it.
    """
    if isinstance(block, CompressedBlock):
        payload, n_words = block.payload, block.original_size // 4
    else:
        payload = bytes(block)
        if n_words is None:
            raise ValueError("n_words is required for a bare FPC payload")
    r = BitReader(payload)
    out = np.zeros(n_words, dtype=np.uint32)
    i = 0
    while i < n_words:
        p = r.read(3)
        v = r.read(PAYLOAD_BITS[p])
        if p == ZERO_RUN:
            i += v + 1
            continue
        if p in (SE4, SE8, SE16):
            w = _sext(v, PAYLOAD_BITS[p]) & 0xFFFFFFFF
        elif p == HALF_PAD:
            w = v << 16
        elif p == TWO_HALVES:
            w = ((_sext(v >> 8, 8) & 0xFFFF) << 16) | (_sext(v & 0xFF, 8) & 0xFFFF)
        elif p == REP_BYTES:
            w = v * 0x01010101
        else:
            w = v
        out[i] = w
        i += 1
    if i != n_words:
        raise CorruptBlockError("zero run overshoots the block")
    if r.remaining >= 8:
        raise CorruptBlockError("trailing data after FPC bitstream")
    return out.astype("<u4").tobytes()
