"""Sealing of compressed tiles and next-fit packing into fixed-size bins.

Sealing is a length-preserving keyed stream transform: a SHAKE-256
keystream derived from (key, nonce) is XORed over the data. Any object
with the same ``seal``/``unseal`` signature can stand in for it, e.g. a
real block cipher in counter mode.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import PackingError, TmtLookupError

DEFAULT_CAPACITY = 61440
TMT_ENTRY_BYTES = 10
_ENTRY = struct.Struct("<HHHBHB")  # tile id, bin id, addr (24b), len (24b)


class SealKey:
    """256-bit key plus a nonce counter.

    Nonces from `next_nonce` never repeat for one key object; callers that
    need reproducible nonces use `derive_nonce` with distinct inputs.
    """

    def __init__(self, key: bytes):
        if len(key) != 32:
            raise ValueError("seal keys are 32 bytes")
        self.key = bytes(key)
        self._counter = itertools.count()

    @classmethod
    def generate(cls, rng: np.random.Generator | None = None) -> "SealKey":
        return cls(rng.bytes(32) if rng is not None else os.urandom(32))

    def next_nonce(self) -> int:
        return next(self._counter)

    def __repr__(self):
        return f"SealKey({hashlib.sha256(self.key).hexdigest()[:8]}...)"


def derive_nonce(*parts: int) -> int:
    """Pack small non-negative integers (layer, role, tile, version...) into one nonce."""
    n = 0
    for p in parts:
        if not 0 <= p < 1 << 32:
            raise ValueError("nonce parts must fit in 32 bits")
        n = (n << 32) | p
    return n


class Sealer(Protocol):
    def seal(self, data: bytes, key: SealKey, nonce: int) -> bytes: ...

    def unseal(self, data: bytes, key: SealKey, nonce: int) -> bytes: ...


class KeyedStreamSealer:
    """XOR with a SHAKE-256 keystream over ``key || nonce``."""

    _domain = b"sparselock/seal/v1"

    def keystream(self, key: SealKey, nonce: int, n: int) -> bytes:
        h = hashlib.shake_256(self._domain + key.key + nonce.to_bytes(32, "little"))
        return h.digest(n)

    def seal(self, data: bytes, key: SealKey, nonce: int) -> bytes:
        data = bytes(data)
        if not data:
            return b""
        ks = np.frombuffer(self.keystream(key, nonce, len(data)), dtype=np.uint8)
        return (np.frombuffer(data, dtype=np.uint8) ^ ks).tobytes()

    unseal = seal


DEFAULT_SEALER = KeyedStreamSealer()


def seal(block: bytes, key: SealKey, nonce: int, sealer: Sealer = DEFAULT_SEALER) -> bytes:
    return sealer.seal(block, key, nonce)


def unseal(block: bytes, key: SealKey, nonce: int, sealer: Sealer = DEFAULT_SEALER) -> bytes:
    return sealer.unseal(block, key, nonce)


def byte_entropy(data: bytes) -> float:
    """Empirical Shannon entropy in bits per byte."""
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / len(data)
    return float(-(p * np.log2(p)).sum())


def byte_uniformity_z(data: bytes) -> float:
    """Largest |z| of any byte value's frequency against the uniform law."""
    n = len(data)
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    mean = n / 256
    sd = math.sqrt(n * (1 / 256) * (255 / 256))
    return float(np.max(np.abs(counts - mean)) / sd)


# -- Tile-map Table -------------------------------------------------------


@dataclass(frozen=True)
class TmtEntry:
    tile_id: int
    bin_id: int
    addr: int
    length: int

    def pack(self) -> bytes:
        """10-byte record: 16-bit tile id, 16-bit bin id, 24-bit addr, 24-bit length."""
        if not (self.tile_id < 1 << 16 and self.bin_id < 1 << 16 and self.addr < 1 << 24 and self.length < 1 << 24):
            raise OverflowError("TMT field does not fit its width")
        return _ENTRY.pack(
            self.tile_id, self.bin_id,
            self.addr & 0xFFFF, self.addr >> 16,
            self.length & 0xFFFF, self.length >> 16,
        )

    @classmethod
    def unpack(cls, buf: bytes) -> "TmtEntry":
        tid, bid, a_lo, a_hi, l_lo, l_hi = _ENTRY.unpack(bytes(buf[:TMT_ENTRY_BYTES]))
        return cls(tid, bid, a_lo | a_hi << 16, l_lo | l_hi << 16)


class Tmt:
    """Tile id -> (bin id, addr, length) for one tensor role."""

    def __init__(self, role: str, entries: Iterable[TmtEntry] = ()):
        self.role = role
        self._entries: dict[int, TmtEntry] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: TmtEntry) -> None:
        if entry.tile_id in self._entries:
            raise ValueError(f"tile {entry.tile_id} already mapped")
        self._entries[entry.tile_id] = entry

    def lookup(self, tile_id: int) -> TmtEntry:
        try:
            return self._entries[tile_id]
        except KeyError:
            raise TmtLookupError(f"tile {tile_id} is not in the {self.role} TMT") from None

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.values())

    def __contains__(self, tile_id) -> bool:
        return tile_id in self._entries

    def footprint_bytes(self) -> int:
        return TMT_ENTRY_BYTES * len(self._entries)

    def as_role(self, role: str) -> "Tmt":
        """Same mapping under another role (ofmap table handed to the next layer)."""
        return Tmt(role, self._entries.values())

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"tile": e.tile_id, "bin": e.bin_id, "addr": e.addr, "len": e.length}) + "\n"
            for e in self._entries.values()
        )

    @classmethod
    def from_jsonl(cls, role: str, text: str) -> "Tmt":
        entries = []
        for line in text.splitlines():
            if line.strip():
                r = json.loads(line)
                entries.append(TmtEntry(r["tile"], r["bin"], r["addr"], r["len"]))
        return cls(role, entries)


def tmt_lookup(tmt: Tmt, tile_id: int) -> TmtEntry:
    return tmt.lookup(tile_id)


# -- bins -----------------------------------------------------------------


@dataclass
class Bin:
    """Fixed-capacity unit of off-chip transfer.

    While open, sealed tile segments are appended at increasing offsets.
    Closing fills the remainder with sealed padding; `data` then holds
    exactly `capacity` bytes.
    """

    bin_id: int
    capacity: int = DEFAULT_CAPACITY
    segments: list = field(default_factory=list)  # (tile id, addr, sealed bytes)
    fill: int = 0
    data: bytes | None = None

    @property
    def closed(self) -> bool:
        return self.data is not None

    @property
    def state(self) -> str:
        return "closed" if self.closed else "open"

    def fits(self, n: int) -> bool:
        return not self.closed and self.fill + n <= self.capacity

    def add(self, tile_id: int, sealed: bytes) -> int:
        if not self.fits(len(sealed)):
            raise PackingError(f"{len(sealed)} bytes do not fit bin {self.bin_id}")
        addr = self.fill
        self.segments.append((tile_id, addr, bytes(sealed)))
        self.fill += len(sealed)
        return addr

    def segment(self, addr: int, length: int) -> bytes:
        if self.data is not None:
            return self.data[addr : addr + length]
        for _, a, b in self.segments:
            if a == addr and len(b) == length:
                return b
        raise KeyError(f"no segment at {addr}")


def pad_and_close(b: Bin, pad_key: SealKey | None = None, sealer: Sealer = DEFAULT_SEALER) -> Bin:
    """Close `b`: pad to capacity with zeros sealed under a fresh key."""
    if b.closed:
        return b
    pad_len = b.capacity - b.fill
    key = pad_key if pad_key is not None else SealKey.generate()
    pad = sealer.seal(bytes(pad_len), key, key.next_nonce()) if pad_len else b""
    b.data = b"".join(s for _, _, s in b.segments) + pad
    assert len(b.data) == b.capacity
    return b


def next_fit_pack(
    tiles: Sequence,
    capacity: int = DEFAULT_CAPACITY,
    role: str = "ofmap",
    rng: np.random.Generator | None = None,
    first_bin_id: int = 0,
    sealer: Sealer = DEFAULT_SEALER,
) -> tuple[list[Bin], Tmt]:
    """Place sealed tiles into bins in order, closing a bin when the next tile does not fit.

    `tiles` holds sealed byte strings (tile id = position) or ``(tile id,
    bytes)`` pairs. Padding keys are drawn from `rng` when given, so packing
    is reproducible.
    """
    bins: list[Bin] = []
    tmt = Tmt(role)
    current: Bin | None = None

    def pad_key():
        return SealKey.generate(rng)

    for i, item in enumerate(tiles):
        tile_id, sealed = item if isinstance(item, tuple) else (i, item)
        n = len(sealed)
        if n > capacity:
            raise PackingError(f"tile {tile_id} ({n} bytes) exceeds bin capacity {capacity}")
        if current is None or not current.fits(n):
            if current is not None:
                pad_and_close(current, pad_key(), sealer)
            current = Bin(first_bin_id + len(bins), capacity)
            bins.append(current)
        addr = current.add(tile_id, sealed)
        tmt.add(TmtEntry(tile_id, current.bin_id, addr, n))
    if current is not None:
        pad_and_close(current, pad_key(), sealer)
    return bins, tmt


def empty_bin(bin_id: int, capacity: int = DEFAULT_CAPACITY, rng: np.random.Generator | None = None) -> Bin:
    """All-padding bin used for fake traffic."""
    return pad_and_close(Bin(bin_id, capacity), SealKey.generate(rng))


def next_fit_assign(sizes: Sequence[int], capacity: int) -> list[int]:
    """Bin index of each item under next-fit, without building bins."""
    out, fill, b = [], 0, -1
    for s in sizes:
        if s > capacity:
            raise PackingError(f"item of {s} bytes exceeds capacity {capacity}")
        if b < 0 or fill + s > capacity:
            b += 1
            fill = 0
        fill += s
        out.append(b)
    return out


# -- bin store files ------------------------------------------------------


def write_bin_store(path, bins: Sequence[Bin], tmt: Tmt | None = None) -> None:
    """Write capacity-sized records; the TMT goes to a ``.tmt.jsonl`` sidecar."""
    path = Path(path)
    with open(path, "wb") as fh:
        for b in bins:
            if not b.closed:
                raise ValueError(f"bin {b.bin_id} is still open")
            fh.write(b.data)
    if tmt is not None:
        path.with_suffix(path.suffix + ".tmt.jsonl").write_text(tmt.to_jsonl())


def read_bin_store(path, capacity: int = DEFAULT_CAPACITY) -> list[Bin]:
    raw = Path(path).read_bytes()
    if len(raw) % capacity:
        raise ValueError("bin store length is not a multiple of the capacity")
    return [
        Bin(i, capacity, fill=capacity, data=raw[o : o + capacity])
        for i, o in enumerate(range(0, len(raw), capacity))
    ]
