"""MSB-first bit packing helpers shared by the entropy-style codecs."""
from __future__ import annotations

import numpy as np

from ..errors import CorruptBlockError


def pack_fields(values, widths) -> bytes:
    """Concatenate ``values[i]`` as ``widths[i]``-bit big-endian fields."""
    values = np.asarray(values, dtype=np.uint64)
    widths = np.asarray(widths, dtype=np.int64)
    if values.size == 0:
        return b""
    total = int(widths.sum())
    owner = np.repeat(np.arange(values.size), widths)
    # bit position inside each field, counted from its most significant bit
    starts = np.cumsum(widths) - widths
    pos = np.arange(total) - np.repeat(starts, widths)
    shift = (np.repeat(widths, widths) - 1 - pos).astype(np.uint64)
    bits = ((values[owner] >> shift) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits).tobytes()


class BitReader:
    def __init__(self, data: bytes):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self.pos = 0

    @property
    def remaining(self) -> int:
        return self._bits.size - self.pos

    def read(self, n: int) -> int:
        if n > self.remaining:
            raise CorruptBlockError("bitstream ended early")
        v = 0
        for b in self._bits[self.pos : self.pos + n]:
            v = (v << 1) | int(b)
        self.pos += n
        return v
