"""Convolution workloads: layer geometry, convolutions, pruning and tiling.

Tensors are plain numpy arrays. Activations and weights are 32-bit signed
integers (quantized values) so that the codecs downstream are bit exact.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError, ScheduleError

ROLES = ("ifmap", "weight", "ofmap")

_INT32_MIN = np.iinfo(np.int32).min
_INT32_MAX = np.iinfo(np.int32).max


def as_tensor(values, dims: Sequence[int] | None = None) -> np.ndarray:
    """Return `values` as a C-contiguous int32 array, optionally reshaped."""
    arr = np.asarray(values)
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        if np.any(arr != np.round(arr)):
            raise ValueError("tensor values must be integral")
    arr = _to_int32(arr)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if math.prod(dims) != arr.size:
            raise ShapeError(f"{arr.size} values do not fill dims {dims}")
        arr = arr.reshape(dims)
    if not 1 <= arr.ndim <= 4:
        raise ShapeError(f"tensor rank must be 1..4, got {arr.ndim}")
    return np.ascontiguousarray(arr)


def _to_int32(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.size and (arr.min() < _INT32_MIN or arr.max() > _INT32_MAX):
        raise OverflowError("value does not fit in 32-bit signed integer")
    return arr.astype(np.int32)


@dataclass(frozen=True)
class LayerSpec:
    """Geometry of one convolution layer.

    `in_shape` is ``(C, n)`` for a 1D layer or ``(C, H, W)`` for a 2D layer.
    `filter_shape` has one extent per spatial axis. ``padding="same"`` is the
    center-aligned mode: the output keeps the input extents and products that
    fall outside the input are skipped.
    """

    in_shape: tuple[int, ...]
    filter_shape: tuple[int, ...]
    out_channels: int = 1
    stride: int = 1
    padding: str = "valid"
    activation: str = "none"
    requant_shift: int = 0

    def __post_init__(self):
        object.__setattr__(self, "in_shape", tuple(int(d) for d in self.in_shape))
        object.__setattr__(self, "filter_shape", tuple(int(d) for d in self.filter_shape))
        if len(self.in_shape) not in (2, 3):
            raise ConfigurationError("in_shape must be (C, n) or (C, H, W)")
        if len(self.filter_shape) != len(self.in_shape) - 1:
            raise ConfigurationError("filter rank must match the spatial rank")
        if min(self.in_shape) < 1 or min(self.filter_shape) < 1:
            raise ConfigurationError("extents must be positive")
        if self.out_channels < 1:
            raise ConfigurationError("out_channels must be >= 1")
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")
        if self.padding not in ("valid", "same"):
            raise ConfigurationError(f"unknown padding mode {self.padding!r}")
        if self.padding == "same" and any(f % 2 == 0 for f in self.filter_shape):
            raise ConfigurationError("center-aligned mode needs odd filter extents")
        if self.activation not in ("none", "relu"):
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.requant_shift < 0:
            raise ConfigurationError("requant_shift must be >= 0")
        for n, f in zip(self.spatial_shape, self.filter_shape):
            if self.padding == "valid" and f > n:
                raise ConfigurationError("filter larger than input in valid mode")

    @property
    def in_channels(self) -> int:
        return self.in_shape[0]

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.in_shape[1:]

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels) + self.filter_shape

    @property
    def out_spatial_shape(self) -> tuple[int, ...]:
        out = []
        for n, f in zip(self.spatial_shape, self.filter_shape):
            full = n if self.padding == "same" else n - f + 1
            out.append((full - 1) // self.stride + 1)
        return tuple(out)

    @property
    def out_shape(self) -> tuple[int, ...]:
        return (self.out_channels,) + self.out_spatial_shape

    def to_dict(self) -> dict:
        return {
            "in_shape": list(self.in_shape),
            "filter_shape": list(self.filter_shape),
            "out_channels": self.out_channels,
            "stride": self.stride,
            "padding": self.padding,
            "activation": self.activation,
            "requant_shift": self.requant_shift,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(
            in_shape=tuple(d["in_shape"]),
            filter_shape=tuple(d["filter_shape"]),
            out_channels=d.get("out_channels", 1),
            stride=d.get("stride", 1),
            padding=d.get("padding", "valid"),
            activation=d.get("activation", "none"),
            requant_shift=d.get("requant_shift", 0),
        )


# -- convolutions ---------------------------------------------------------


def conv1d(x, f) -> np.ndarray:
    """Center-aligned 1D convolution ``O[t] = sum_j F[j] * I[t - j]``.

    The filter index j runs over ``-k..k`` (array index ``j + k``) and only
    in-bounds products are summed, so ``len(O) == len(I)``.
    """
    x = np.asarray(x)
    f = np.asarray(f)
    if x.ndim != 1 or f.ndim != 1:
        raise ShapeError("conv1d takes 1D input and filter")
    if len(f) % 2 == 0:
        raise ConfigurationError(f"filter length must be odd, got {len(f)}")
    return _to_int32(_centered(x.astype(np.int64), f.astype(np.int64)))


def _centered(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    k = len(f) // 2
    return np.convolve(x, f, mode="full")[k : k + len(x)]


def conv2d(ifmap, filt, spec: LayerSpec | None = None) -> np.ndarray:
    """2D correlation of one filter with an ifmap.

    ``O[h][w] = sum_c sum_r sum_s F[c][r][s] * I[c][h*st + r][w*st + s]``.
    Single-channel inputs may be given as 2D arrays. In center-aligned mode
    the filter is centered on each input position and out-of-bounds products
    are dropped.
    """
    ifmap = np.asarray(ifmap)
    filt = np.asarray(filt)
    if ifmap.ndim == 2:
        ifmap = ifmap[None]
    if filt.ndim == 2:
        filt = filt[None]
    if ifmap.ndim != 3 or filt.ndim != 3:
        raise ShapeError("conv2d takes (C,H,W) ifmap and (C,R,S) filter")
    if ifmap.shape[0] != filt.shape[0]:
        raise ShapeError(f"channel mismatch: ifmap {ifmap.shape[0]} vs filter {filt.shape[0]}")
    padding = spec.padding if spec is not None else "valid"
    stride = spec.stride if spec is not None else 1
    if spec is not None and (tuple(spec.filter_shape) != filt.shape[1:]):
        raise ShapeError(f"filter extents {filt.shape[1:]} differ from spec {spec.filter_shape}")
    return _correlate(ifmap, filt[None], padding, stride)[0]


def _correlate(ifmap: np.ndarray, bank: np.ndarray, padding: str, stride: int) -> np.ndarray:
    """(C,H,W) x (M,C,R,S) -> (M,H',W') via sliding windows, int64 accumulate."""
    _, H, W = ifmap.shape
    R, S = bank.shape[2:]
    x = ifmap.astype(np.int64)
    if padding == "same":
        if R % 2 == 0 or S % 2 == 0:
            raise ConfigurationError("center-aligned mode needs odd filter extents")
        kr, ks = R // 2, S // 2
        x = np.pad(x, ((0, 0), (kr, kr), (ks, ks)))
    if x.shape[1] < R or x.shape[2] < S:
        raise ShapeError("filter larger than ifmap")
    win = np.lib.stride_tricks.sliding_window_view(x, (R, S), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    out = np.einsum("chwrs,mcrs->mhw", win, bank.astype(np.int64), optimize=True)
    return _to_int32(out)


def conv_layer(ifmap, weights, spec: LayerSpec) -> np.ndarray:
    """Run a full layer: filter bank, then optional ReLU and requantization."""
    ifmap = np.asarray(ifmap)
    weights = np.asarray(weights)
    if ifmap.shape != spec.in_shape:
        raise ShapeError(f"ifmap {ifmap.shape} does not match layer input {spec.in_shape}")
    if weights.shape != spec.weight_shape:
        raise ShapeError(f"weights {weights.shape} do not match {spec.weight_shape}")
    if len(spec.in_shape) == 2:
        out = _layer1d(ifmap, weights, spec)
    else:
        out = _correlate(ifmap, weights, spec.padding, spec.stride).astype(np.int64)
    if spec.activation == "relu":
        out = np.maximum(out, 0)
    if spec.requant_shift:
        out = np.clip(out >> spec.requant_shift, -127, 127)
    return _to_int32(out)


def _layer1d(ifmap: np.ndarray, weights: np.ndarray, spec: LayerSpec) -> np.ndarray:
    M, C, _ = weights.shape
    out = np.zeros((M,) + spec.out_spatial_shape, dtype=np.int64)
    x = ifmap.astype(np.int64)
    w = weights.astype(np.int64)
    for m in range(M):
        if spec.padding == "same":
            acc = sum(_centered(x[c], w[m, c]) for c in range(C))
        else:
            acc = sum(np.convolve(x[c], w[m, c], mode="valid") for c in range(C))
        out[m] = acc[:: spec.stride]
    return out


def boundary_counts(n: int, k: int) -> np.ndarray:
    """Number of summed products at each output position of a centered conv.

    Returns ``C[1..n]`` (as a 0-based array) for a length-n input and a
    ``2k+1`` filter: ``a + k`` on the left edge, ``n - a + k + 1`` on the
    right edge and ``2k + 1`` elsewhere.
    """
    if n < 1 or k < 0:
        raise DomainError("need n >= 1 and k >= 0")
    if n < 2 * k + 1:
        raise DomainError(f"n={n} is smaller than the filter length {2 * k + 1}")
    a = np.arange(1, n + 1)
    c = np.full(n, 2 * k + 1, dtype=np.int64)
    left = a <= k
    right = a >= n - k
    c[left] = a[left] + k
    c[right] = n - a[right] + k + 1
    return c


def prune_magnitude(t, sparsity: float) -> np.ndarray:
    """Zero the ``floor(sparsity * N)`` smallest-magnitude entries.

    Ties are broken by position so the result is deterministic.
    """
    if not 0 <= sparsity < 1:
        raise DomainError("sparsity must be in [0, 1)")
    t = np.asarray(t)
    flat = t.ravel().copy()
    n_zero = int(math.floor(sparsity * flat.size + 1e-9))
    if n_zero:
        order = np.argsort(np.abs(flat), kind="stable")
        flat[order[:n_zero]] = 0
    return flat.reshape(t.shape)


def make_impulse(dims: Sequence[int], position) -> np.ndarray:
    """All-zero int32 tensor with a single 1 at `position`."""
    dims = tuple(int(d) for d in dims)
    if isinstance(position, (int, np.integer)):
        position = (int(position),)
    position = tuple(int(p) for p in position)
    if len(position) != len(dims):
        raise ShapeError("position rank does not match dims")
    if any(not 0 <= p < d for p, d in zip(position, dims)):
        raise IndexError(f"position {position} outside {dims}")
    out = np.zeros(dims, dtype=np.int32)
    out[position] = 1
    return out


def nnz(t) -> int:
    return int(np.count_nonzero(np.asarray(t)))


def random_weights(spec: LayerSpec, rng: np.random.Generator, sparsity: float = 0.0,
                   low: int = -127, high: int = 127) -> np.ndarray:
    """Int8-range random filter bank with no exact zeros, then pruned."""
    mag = rng.integers(1, max(abs(low), abs(high)) + 1, size=spec.weight_shape)
    sign = rng.choice(np.array([-1, 1]), size=spec.weight_shape)
    w = np.clip(mag * sign, low, high)
    return as_tensor(prune_magnitude(w, sparsity))


def random_sparse_tensor(shape: Sequence[int], sparsity: float, rng: np.random.Generator,
                         dist: str = "int8") -> np.ndarray:
    """Random tensor with exactly ``floor(sparsity * N)`` zeros at random places.

    ``dist="int8"`` draws uniform non-zero values in [-127, 127] (quantized
    activations). ``dist="q16"`` draws standard normal values in Q16.16 fixed
    point, which has the bit-level entropy of trained float32 weights.
    """
    shape = tuple(shape)
    n = math.prod(shape)
    if dist == "int8":
        vals = rng.integers(1, 128, size=n) * rng.choice(np.array([-1, 1]), size=n)
    elif dist == "q16":
        vals = np.round(rng.normal(0.0, 1.0, size=n) * 65536).astype(np.int64)
        vals[vals == 0] = 1
    else:
        raise ValueError(f"unknown value distribution {dist!r}")
    n_zero = int(math.floor(sparsity * n + 1e-9))
    vals[rng.permutation(n)[:n_zero]] = 0
    return as_tensor(vals.reshape(shape))


# -- tiling ---------------------------------------------------------------


@dataclass(frozen=True)
class TileGrid:
    """Regular tiling of one tensor; edge tiles are zero padded."""

    tensor_shape: tuple[int, ...]
    tile_shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tensor_shape", tuple(int(d) for d in self.tensor_shape))
        object.__setattr__(self, "tile_shape", tuple(int(d) for d in self.tile_shape))
        if len(self.tensor_shape) != len(self.tile_shape):
            raise ShapeError("tile rank must match tensor rank")
        if min(self.tile_shape) < 1:
            raise ShapeError("tile extents must be positive")

    @property
    def grid(self) -> tuple[int, ...]:
        return tuple(-(-n // t) for n, t in zip(self.tensor_shape, self.tile_shape))

    @property
    def n_tiles(self) -> int:
        return math.prod(self.grid)

    @property
    def tile_elems(self) -> int:
        return math.prod(self.tile_shape)

    @property
    def tile_bytes(self) -> int:
        return 4 * self.tile_elems

    def origin(self, tile_id: int) -> tuple[int, ...]:
        idx = np.unravel_index(tile_id, self.grid)
        return tuple(int(i) * t for i, t in zip(idx, self.tile_shape))

    def region(self, tile_id: int) -> tuple[slice, ...]:
        """Slices of the tensor covered by `tile_id` (clipped at the edge)."""
        o = self.origin(tile_id)
        return tuple(slice(a, min(a + t, n)) for a, t, n in zip(o, self.tile_shape, self.tensor_shape))

    def to_dict(self) -> dict:
        return {"tensor_shape": list(self.tensor_shape), "tile_shape": list(self.tile_shape)}


@dataclass(frozen=True)
class Tile:
    tile_id: int
    data: np.ndarray
    mask: np.ndarray  # True where the element belongs to the tensor


@dataclass(frozen=True)
class ScheduleEntry:
    tile_id: int
    role: str
    layer: int


@dataclass(frozen=True)
class TileSchedule:
    """Tile geometry per tensor role plus the tile enumeration order.

    `loop_strides` records the tile-grid extent of each loop level, outermost
    first; these are the periods a tile-id sequence of the layer exhibits.
    """

    grids: dict
    order: tuple[ScheduleEntry, ...]
    loop_strides: tuple[int, ...] = ()

    def grid(self, role: str) -> TileGrid:
        if role not in self.grids:
            raise ScheduleError(f"schedule has no {role} tiling")
        return self.grids[role]

    def tile_ids(self, role: str, layer: int | None = None) -> list[int]:
        return [e.tile_id for e in self.order if e.role == role and (layer is None or e.layer == layer)]


def make_schedule(spec: LayerSpec, tile_shapes: dict, layer: int = 0) -> TileSchedule:
    """Row-major tiling of the layer's ifmap, weights and ofmap."""
    shapes = {"ifmap": spec.in_shape, "weight": spec.weight_shape, "ofmap": spec.out_shape}
    grids = {}
    for role in ROLES:
        ts = tile_shapes.get(role, shapes[role])
        grids[role] = TileGrid(shapes[role], ts)
    order = tuple(
        ScheduleEntry(i, role, layer) for role in ROLES for i in range(grids[role].n_tiles)
    )
    strides = tuple(grids["ofmap"].grid) + (grids["ifmap"].n_tiles,)
    return TileSchedule(grids, order, strides)


def _role_grid(schedule, role: str, shape) -> TileGrid:
    if isinstance(schedule, TileGrid):
        grid = schedule
        ids = list(range(grid.n_tiles))
    else:
        grid = schedule.grid(role)
        ids = schedule.tile_ids(role)
        if sorted(ids) != list(range(grid.n_tiles)):
            raise ScheduleError(f"{role} schedule does not enumerate every tile exactly once")
    if tuple(shape) != grid.tensor_shape:
        raise ScheduleError(f"schedule covers {grid.tensor_shape}, tensor is {tuple(shape)}")
    return grid


def tile(t, schedule, role: str = "ifmap") -> list[Tile]:
    """Cut `t` into full-size tiles in schedule order.

    `schedule` is a `TileSchedule` (the tiling of `role` is used) or a bare
    `TileGrid`. Edge tiles are zero padded; `Tile.mask` marks real elements.
    """
    t = np.asarray(t)
    grid = _role_grid(schedule, role, t.shape)
    ids = range(grid.n_tiles) if isinstance(schedule, TileGrid) else schedule.tile_ids(role)
    out = []
    for tid in ids:
        region = grid.region(tid)
        data = np.zeros(grid.tile_shape, dtype=t.dtype)
        mask = np.zeros(grid.tile_shape, dtype=bool)
        local = tuple(slice(0, s.stop - s.start) for s in region)
        data[local] = t[region]
        mask[local] = True
        out.append(Tile(tid, data, mask))
    return out


def untile(tiles: Iterable[Tile], grid: TileGrid, dtype=np.int32) -> np.ndarray:
    out = np.zeros(grid.tensor_shape, dtype=dtype)
    seen = set()
    for tl in tiles:
        region = grid.region(tl.tile_id)
        local = tuple(slice(0, s.stop - s.start) for s in region)
        out[region] = tl.data[local]
        seen.add(tl.tile_id)
    if seen != set(range(grid.n_tiles)):
        raise ScheduleError("tiles do not cover the tensor")
    return out


# -- tensor files ---------------------------------------------------------

_MAGIC = b"SLTN"
_VERSION = 1


def dumps_tensor(t) -> bytes:
    """Flat binary form: magic, version, rank, uint32 LE extents, int32 LE values."""
    t = as_tensor(t)
    head = _MAGIC + bytes([_VERSION, t.ndim]) + struct.pack(f"<{t.ndim}I", *t.shape)
    return head + t.astype("<i4").tobytes()


def loads_tensor(buf: bytes) -> np.ndarray:
    if buf[:4] != _MAGIC:
        raise ValueError("not a tensor file (bad magic)")
    version, rank = buf[4], buf[5]
    if version != _VERSION:
        raise ValueError(f"unsupported tensor file version {version}")
    dims = struct.unpack_from(f"<{rank}I", buf, 6)
    start = 6 + 4 * rank
    n = math.prod(dims)
    if len(buf) != start + 4 * n:
        raise ValueError("tensor file length does not match its header")
    return np.frombuffer(buf, dtype="<i4", count=n, offset=start).astype(np.int32).reshape(dims)


def save_tensor(path, t) -> None:
    Path(path).write_bytes(dumps_tensor(t))


def load_tensor(path) -> np.ndarray:
    return loads_tensor(Path(path).read_bytes())


def load_jsonl_layers(path) -> dict[str, np.ndarray]:
    """Read externally pruned layers, one ``{"name", "dims", "values"}`` object per line."""
    layers = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                layers[rec["name"]] = as_tensor(rec["values"], rec["dims"])
            except KeyError as exc:
                raise ValueError(f"line {lineno}: missing field {exc}") from None
    return layers
