"""Canonical Huffman coding over byte symbols.

Payload layout: ``count - 1`` of coded symbols (1 byte), then one
``(symbol, code length)`` byte pair per symbol, then the MSB-first
bitstream. The symbol count of the message is the block's original size.
"""
from __future__ import annotations

import heapq
from collections import Counter

from ..errors import CorruptBlockError, SizeError
from .bits import BitReader, pack_fields
from .block import CompressedBlock


def code_lengths(freqs: dict[int, int]) -> dict[int, int]:
    """Huffman code length per symbol; a lone symbol gets length 1."""
    if len(freqs) == 1:
        return {next(iter(freqs)): 1}
    heap = [(f, sym, (sym,)) for sym, f in sorted(freqs.items())]
    heapq.heapify(heap)
    depth = dict.fromkeys(freqs, 0)
    while len(heap) > 1:
        f1, k1, s1 = heapq.heappop(heap)
        f2, k2, s2 = heapq.heappop(heap)
        for s in s1 + s2:
            depth[s] += 1
        heapq.heappush(heap, (f1 + f2, min(k1, k2), s1 + s2))
    return depth


def canonical_codes(lengths: dict[int, int]) -> dict[int, tuple[int, int]]:
    """symbol -> (code, length), assigned in (length, symbol) order."""
    codes = {}
    code = 0
    prev = 0
    for sym, n in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= n - prev
        codes[sym] = (code, n)
        code += 1
        prev = n
    return codes


def huffman_compress(block: bytes) -> CompressedBlock:
    data = bytes(block)
    if not data:
        raise SizeError("Huffman input is empty")
    lengths = code_lengths(Counter(data))
    codes = canonical_codes(lengths)
    head = bytearray([len(lengths) - 1])
    for sym, n in sorted(lengths.items()):
        head += bytes([sym, n])
    body = pack_fields([codes[b][0] for b in data], [codes[b][1] for b in data])
    return CompressedBlock("huffman", bytes(head) + body, len(data))


def huffman_decompress(block: CompressedBlock) -> bytes:
    p = block.payload
    if not p:
        raise CorruptBlockError("empty Huffman payload")
    n_sym = p[0] + 1
    if len(p) < 1 + 2 * n_sym:
        raise CorruptBlockError("Huffman table truncated")
    lengths = {p[1 + 2 * i]: p[2 + 2 * i] for i in range(n_sym)}
    decode = {(c, n): s for s, (c, n) in canonical_codes(lengths).items()}
    r = BitReader(p[1 + 2 * n_sym :])
    max_len = max(lengths.values())
    out = bytearray()
    for _ in range(block.original_size):
        code, n = 0, 0
        while True:
            code = (code << 1) | r.read(1)
            n += 1
            if (code, n) in decode:
                out.append(decode[(code, n)])
                break
            if n > max_len:
                raise CorruptBlockError("invalid Huffman code")
    return bytes(out)
