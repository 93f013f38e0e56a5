"""Byte-level run-length encoding as (symbol, count) pairs, count <= 255."""
from __future__ import annotations

from ..errors import CorruptBlockError, SizeError
from .block import CompressedBlock


def rle_runs(data: bytes) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    for b in data:
        if runs and runs[-1][0] == b and runs[-1][1] < 255:
            runs[-1] = (b, runs[-1][1] + 1)
        else:
            runs.append((b, 1))
    return runs


def rle_compress(block: bytes) -> CompressedBlock:
    data = bytes(block)
    if not data:
        raise SizeError("RLE input is empty")
    payload = bytes(x for run in rle_runs(data) for x in run)
    return CompressedBlock("rle", payload, len(data))


def rle_decompress(block: CompressedBlock | bytes) -> bytes:
    payload = block.payload if isinstance(block, CompressedBlock) else bytes(block)
    if len(payload) % 2:
        raise CorruptBlockError("RLE payload has an odd length")
    out = b"".join(bytes([payload[i]]) * payload[i + 1] for i in range(0, len(payload), 2))
    if isinstance(block, CompressedBlock) and len(out) != block.original_size:
        raise CorruptBlockError("RLE payload does not match original size")
    return out
