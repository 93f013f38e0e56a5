"""Codec output container and its wire format."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

ALGORITHM_TAGS = {"bdi": 1, "fpc": 2, "rle": 3, "huffman": 4, "hybrid": 5}
_TAG_NAMES = {v: k for k, v in ALGORITHM_TAGS.items()}


@dataclass(frozen=True)
class CompressedBlock:
    """Output of a codec.

    `payload` is what would travel over the memory bus; `meta` carries
    decoder-side context (tile geometry) that the accelerator already knows.
    """

    algorithm: str
    payload: bytes
    original_size: int
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.payload)

    def to_bytes(self) -> bytes:
        """Serialize as tag byte, uint32 LE original size, payload."""
        return bytes([ALGORITHM_TAGS[self.algorithm]]) + struct.pack("<I", self.original_size) + self.payload

    @classmethod
    def from_bytes(cls, buf: bytes, **meta) -> "CompressedBlock":
        if len(buf) < 5:
            raise ValueError("serialized block shorter than its header")
        try:
            name = _TAG_NAMES[buf[0]]
        except KeyError:
            raise ValueError(f"unknown algorithm tag {buf[0]}") from None
        (size,) = struct.unpack_from("<I", buf, 1)
        return cls(name, bytes(buf[5:]), size, dict(meta))


def compression_ratio(block: CompressedBlock) -> float:
    """original_size / payload length."""
    if not block.payload:
        raise ValueError("empty payload has no defined ratio")
    return block.original_size / len(block.payload)
