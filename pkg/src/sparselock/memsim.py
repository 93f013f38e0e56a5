"""Attacker-observable memory traces for tiled layer execution.

Three execution modes are modeled:

``baseline``
    Tiles move at raw size; every tile access is one event.
``compress``
    Same loop nest, but each tile moves as its compressed payload, so event
    sizes follow the tile contents.
``sparselock``
    Compressed tiles are sealed and next-fit packed into fixed-size bins.
    Every event moves one whole bin. Reads come in batches of `residency`
    bins and each batch is followed by one bin-write slot; missing reads and
    writes are filled with fake traffic so the per-layer event count only
    depends on layer geometry. Decompressed tiles and the ofmap stay in the
    on-chip buffer, so nothing written during inference is read back and the
    attacker sees every bin address exactly once.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import convnet
from .compress import hybrid
from .compress.block import CompressedBlock
from .convnet import LayerSpec, TileGrid, TileSchedule
from .errors import ConfigurationError, SimulationError, TmtLookupError
from .sealing import (
    DEFAULT_CAPACITY,
    Bin,
    SealKey,
    Tmt,
    derive_nonce,
    empty_bin,
    next_fit_assign,
    next_fit_pack,
    seal,
    unseal,
)

MODES = ("baseline", "compress", "sparselock")
LOOP_ORDERS = ("weight_stationary", "output_stationary")
ROLE_CODE = {"ifmap": 0, "weight": 1, "ofmap": 2}


@dataclass(frozen=True)
class SimConfig:
    mode: str = "baseline"
    bin_capacity: int = DEFAULT_CAPACITY
    residency: int = 3
    loop_order: str = "weight_stationary"
    compression: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.loop_order not in LOOP_ORDERS:
            raise ConfigurationError(f"unknown loop order {self.loop_order!r}")
        if self.residency < 1 or self.bin_capacity < 1:
            raise ConfigurationError("residency and bin capacity must be positive")
        if self.compression not in ("sparse", "dense", "auto"):
            raise ConfigurationError(f"unknown compression mode {self.compression!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# -- traces ---------------------------------------------------------------


@dataclass(frozen=True)
class MemEvent:
    seq: int
    op: str
    unit: str
    id: int
    bytes: int
    layer: int
    fake: bool = False

    def attacker_dict(self) -> dict:
        return {"seq": self.seq, "op": self.op, "unit": self.unit, "id": self.id,
                "bytes": self.bytes, "layer": self.layer}

    def oracle_dict(self) -> dict:
        return {**self.attacker_dict(), "fake": self.fake}


@dataclass(frozen=True)
class Trace:
    events: tuple[MemEvent, ...]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        seqs = [e.seq for e in self.events]
        if any(b <= a for a, b in zip(seqs, seqs[1:])):
            raise ValueError("event sequence numbers must increase")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def attacker_view(self) -> list[tuple]:
        """What a bus probe records: (op, unit, id, bytes) per event, in order."""
        return [(e.op, e.unit, e.id, e.bytes) for e in self.events]

    def ids(self) -> np.ndarray:
        return np.array([e.id for e in self.events], dtype=np.int64)

    def to_jsonl(self, oracle: bool = False) -> str:
        rows = (e.oracle_dict() if oracle else e.attacker_dict() for e in self.events)
        return "".join(json.dumps(r) + "\n" for r in rows)

    @classmethod
    def from_jsonl(cls, text: str, config: dict | None = None) -> "Trace":
        events = []
        for line in text.splitlines():
            if line.strip():
                r = json.loads(line)
                events.append(MemEvent(r["seq"], r["op"], r["unit"], r["id"], r["bytes"],
                                       r["layer"], r.get("fake", False)))
        return cls(tuple(events), config or {})


class _TraceBuilder:
    def __init__(self):
        self.events: list[MemEvent] = []

    def emit(self, op, unit, obj, nbytes, layer, fake=False):
        self.events.append(MemEvent(len(self.events), op, unit, int(obj), int(nbytes), layer, fake))

    def build(self, config: dict) -> Trace:
        return Trace(tuple(self.events), config)


def traffic_bytes(trace: Trace) -> dict:
    """Total bytes, plus per-layer and per-op totals."""
    per_layer: dict[int, dict[str, int]] = {}
    for e in trace.events:
        d = per_layer.setdefault(e.layer, {"R": 0, "W": 0})
        d[e.op] += e.bytes
    total = sum(d["R"] + d["W"] for d in per_layer.values())
    return {
        "total": total,
        "read": sum(d["R"] for d in per_layer.values()),
        "write": sum(d["W"] for d in per_layer.values()),
        "per_layer": {k: v["R"] + v["W"] for k, v in sorted(per_layer.items())},
    }


# -- workloads ------------------------------------------------------------


@dataclass
class Layer:
    """A layer plus how its weights and ofmap are tiled.

    `act_sparsity` zeroes that fraction of the smallest-magnitude outputs
    after activation, standing in for a calibrated activation threshold.
    """

    spec: LayerSpec
    weights: np.ndarray
    ofmap_tile: tuple[int, ...] | None = None
    weight_tile: tuple[int, ...] | None = None
    act_sparsity: float = 0.0

    def __post_init__(self):
        self.weights = convnet.as_tensor(self.weights)
        if self.weights.shape != self.spec.weight_shape:
            raise ConfigurationError(f"weights {self.weights.shape} do not match {self.spec.weight_shape}")
        if self.weight_tile is not None:
            wt = tuple(self.weight_tile)
            if wt[2:] != self.spec.filter_shape:
                raise ConfigurationError("weight tiles must hold whole filters")


@dataclass
class Workload:
    input: np.ndarray
    layers: list[Layer]
    input_tile: tuple[int, ...] | None = None

    def __post_init__(self):
        self.input = convnet.as_tensor(self.input)
        shape = self.input.shape
        for i, layer in enumerate(self.layers):
            if layer.spec.in_shape != shape:
                raise ConfigurationError(f"layer {i} expects {layer.spec.in_shape}, gets {shape}")
            shape = layer.spec.out_shape

    def forward(self) -> list[np.ndarray]:
        """Activations: the input followed by every layer's ofmap."""
        acts = [self.input]
        for layer in self.layers:
            acts.append(run_layer(layer, acts[-1]))
        return acts

    def schedules(self) -> list[TileSchedule]:
        out = []
        in_tile = self.input_tile
        for i, layer in enumerate(self.layers):
            tiles = {"ifmap": in_tile or layer.spec.in_shape}
            if layer.weight_tile is not None:
                tiles["weight"] = layer.weight_tile
            if layer.ofmap_tile is not None:
                tiles["ofmap"] = layer.ofmap_tile
            s = convnet.make_schedule(layer.spec, tiles, i)
            out.append(s)
            in_tile = s.grid("ofmap").tile_shape
        return out


def run_layer(layer: Layer, ifmap: np.ndarray, in_channels: slice | None = None,
              final: bool = True) -> np.ndarray:
    """Layer output; with `in_channels`, the partial sum over that channel range."""
    spec = layer.spec
    w = layer.weights
    if in_channels is not None:
        ifmap = ifmap[in_channels]
        w = w[:, in_channels]
        spec = replace(spec, in_shape=(ifmap.shape[0],) + spec.in_shape[1:])
    if not final:
        spec = replace(spec, activation="none", requant_shift=0)
    out = convnet.conv_layer(ifmap, w, spec)
    if final and layer.act_sparsity:
        out = convnet.as_tensor(convnet.prune_magnitude(out, layer.act_sparsity))
    return out


# -- loop nest ------------------------------------------------------------


def _ranges(grid: TileGrid, tid: int) -> list[tuple[int, int]]:
    return [(s.start, s.stop) for s in grid.region(tid)]


def _overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def _receptive(spec: LayerSpec, out_range: tuple[int, int], axis: int) -> tuple[int, int]:
    f = spec.filter_shape[axis]
    lo = out_range[0] * spec.stride
    hi = (out_range[1] - 1) * spec.stride + f
    if spec.padding == "same":
        lo -= f // 2
        hi -= f // 2
    n = spec.spatial_shape[axis]
    return max(lo, 0), min(hi, n)


def dependencies(spec: LayerSpec, schedule: TileSchedule) -> dict:
    """For every (weight tile, ofmap tile) pair that interacts, the ifmap tiles it reads."""
    gi, gw, go = (schedule.grid(r) for r in ("ifmap", "weight", "ofmap"))
    deps = {}
    for w in range(gw.n_tiles):
        wr = _ranges(gw, w)
        for o in range(go.n_tiles):
            orr = _ranges(go, o)
            if not _overlap(wr[0], orr[0]):
                continue
            need = [wr[1]] + [_receptive(spec, orr[1 + a], a) for a in range(len(orr) - 1)]
            deps[(w, o)] = [i for i in range(gi.n_tiles)
                            if all(_overlap(r, q) for r, q in zip(_ranges(gi, i), need))]
    return deps


def loop_nest(spec: LayerSpec, schedule: TileSchedule, order: str = "weight_stationary") -> list[tuple]:
    """Tile accesses of one layer as ``(op, role, tile id, pass)`` tuples.

    `pass` counts how many weight tiles have already contributed to an
    ofmap tile when it is written; it selects the partial sum that moves.
    """
    deps = dependencies(spec, schedule)
    gw, go = schedule.grid("weight"), schedule.grid("ofmap")
    acc = []
    contrib = dict.fromkeys(range(go.n_tiles), 0)
    total = {o: sum(1 for (_, oo) in deps if oo == o) for o in range(go.n_tiles)}
    if order == "weight_stationary":
        for w in range(gw.n_tiles):
            acc.append(("R", "weight", w, 0))
            for o in range(go.n_tiles):
                if (w, o) not in deps:
                    continue
                if contrib[o]:
                    acc.append(("R", "ofmap", o, contrib[o]))
                acc += [("R", "ifmap", i, 0) for i in deps[(w, o)]]
                contrib[o] += 1
                acc.append(("W", "ofmap", o, contrib[o]))
    elif order == "output_stationary":
        for o in range(go.n_tiles):
            for w in range(gw.n_tiles):
                if (w, o) not in deps:
                    continue
                acc.append(("R", "weight", w, 0))
                acc += [("R", "ifmap", i, 0) for i in deps[(w, o)]]
                contrib[o] += 1
            acc.append(("W", "ofmap", o, contrib[o]))
    else:
        raise ConfigurationError(f"unknown loop order {order!r}")
    for o, n in total.items():
        if contrib[o] != n:
            raise SimulationError(f"ofmap tile {o} received {contrib[o]} of {n} contributions")
    return acc


def _object_ids(schedules: Sequence[TileSchedule]) -> list[dict]:
    """Global object id base of each (layer, role); ofmap L and ifmap L+1 share ids."""
    bases, nxt = [], 0
    prev_ofmap = None
    for s in schedules:
        b = {}
        if prev_ofmap is None:
            b["ifmap"] = nxt
            nxt += s.grid("ifmap").n_tiles
        else:
            b["ifmap"] = prev_ofmap
        b["weight"] = nxt
        nxt += s.grid("weight").n_tiles
        b["ofmap"] = nxt
        nxt += s.grid("ofmap").n_tiles
        prev_ofmap = b["ofmap"]
        bases.append(b)
    return bases


class _SizeModel:
    """Bytes moved per tile access: raw size or compressed payload size."""

    def __init__(self, workload: Workload, schedules, acts, config: SimConfig):
        self.w = workload
        self.s = schedules
        self.acts = acts
        self.cfg = config
        self._cache: dict = {}
        self._partials: dict = {}

    def size(self, layer: int, role: str, tid: int, pas: int) -> int:
        grid = self.s[layer].grid(role)
        if self.cfg.mode == "baseline":
            return grid.tile_bytes
        key = (layer, role, tid, pas)
        if key not in self._cache:
            data = self.tile_data(layer, role, tid, pas)
            self._cache[key] = len(hybrid.hybrid_compress(data, self.cfg.compression))
        return self._cache[key]

    def tile_data(self, layer: int, role: str, tid: int, pas: int = 0) -> np.ndarray:
        grid = self.s[layer].grid(role)
        if role == "ifmap":
            t = self.acts[layer]
        elif role == "weight":
            t = self.w.layers[layer].weights
        else:
            t = self.ofmap_partial(layer, tid, pas)
        region = grid.region(tid)
        out = np.zeros(grid.tile_shape, dtype=np.int32)
        out[tuple(slice(0, s.stop - s.start) for s in region)] = t[region]
        return out

    def ofmap_partial(self, layer: int, tid: int, pas: int) -> np.ndarray:
        sched = self.s[layer]
        gw = sched.grid("weight")
        deps = sorted(w for (w, o) in dependencies(self.w.layers[layer].spec, sched) if o == tid)
        if pas >= len(deps):
            return self.acts[layer + 1]
        key = (layer, tuple(deps[:pas]))
        if key not in self._partials:
            lay = self.w.layers[layer]
            partial = np.zeros(lay.spec.out_shape, dtype=np.int64)
            for w in deps[:pas]:
                oc, ic = _ranges(gw, w)[:2]
                part = run_layer(lay, self.acts[layer], slice(*ic), final=False)
                partial[oc[0]:oc[1]] += part[oc[0]:oc[1]]
            self._partials[key] = convnet.as_tensor(partial)
        return self._partials[key]


def gen_baseline_trace(workload: Workload, config: SimConfig | None = None,
                       schedules: Sequence[TileSchedule] | None = None) -> Trace:
    """Tile-granularity trace of the loop nest; `config.mode` picks raw or compressed sizes."""
    config = config or SimConfig()
    if config.mode == "sparselock":
        raise ConfigurationError("use gen_protected_trace for sparselock mode")
    schedules = list(schedules) if schedules is not None else workload.schedules()
    if len(schedules) != len(workload.layers):
        raise SimulationError("one schedule per layer is required")
    for s, layer in zip(schedules, workload.layers):
        if s.grid("ifmap").tensor_shape != layer.spec.in_shape:
            raise SimulationError("schedule does not match the layer geometry")
    acts = workload.forward()
    sizes = _SizeModel(workload, schedules, acts, config)
    bases = _object_ids(schedules)
    tb = _TraceBuilder()
    for li, (layer, sched) in enumerate(zip(workload.layers, schedules)):
        for op, role, tid, pas in loop_nest(layer.spec, sched, config.loop_order):
            tb.emit(op, "tile", bases[li][role] + tid, sizes.size(li, role, tid, pas), li)
    return tb.build(config.to_dict())


# -- integrity ------------------------------------------------------------


@dataclass(frozen=True)
class IntegrityState:
    """Per-tile version numbers and XOR-accumulated read/write MACs."""

    vn: dict = field(default_factory=dict)
    read_mac: int = 0
    write_mac: int = 0
    key: bytes = b"sparselock-mac"

    def verify(self) -> bool:
        return self.read_mac == self.write_mac

    def new_epoch(self) -> "IntegrityState":
        """Clear both MACs and keep the version numbers (start of a new layer)."""
        return replace(self, read_mac=0, write_mac=0)


def mac_digest(tile, vn: int, content: bytes, key: bytes = b"sparselock-mac") -> int:
    """64-bit keyed digest of (tile id, version, content)."""
    h = hashlib.blake2b(digest_size=8, key=key[:64])
    h.update(repr(tile).encode())
    h.update(vn.to_bytes(8, "little"))
    h.update(bytes(content))
    return int.from_bytes(h.digest(), "little")


def vn_mac_update(state: IntegrityState, tile, direction: str, content: bytes = b"",
                  vn: int | None = None) -> IntegrityState:
    """Record a tile compression (VN bump, write MAC) or decompression (read MAC)."""
    if direction == "compress":
        new_vn = state.vn.get(tile, 0) + 1
        d = mac_digest(tile, new_vn, content, state.key)
        return replace(state, vn={**state.vn, tile: new_vn}, write_mac=state.write_mac ^ d)
    if direction == "decompress":
        if tile not in state.vn:
            raise SimulationError(f"tile {tile!r} was never compressed")
        d = mac_digest(tile, state.vn[tile] if vn is None else vn, content, state.key)
        return replace(state, read_mac=state.read_mac ^ d)
    raise ValueError(f"unknown direction {direction!r}")


# -- sealed stores --------------------------------------------------------


@dataclass
class SealedStore:
    """One tensor's tiles, compressed, sealed and binned."""

    role: str
    layer: int
    grid: TileGrid
    bins: list[Bin]
    tmt: Tmt
    versions: dict
    worst_bins: int
    compression: str

    def nonce(self, tid: int, version: int | None = None) -> int:
        v = self.versions[tid] if version is None else version
        return derive_nonce(self.layer, ROLE_CODE[self.role], tid, v)


def worst_case_bins(grid: TileGrid, capacity: int, compression: str = "auto") -> int:
    wc = hybrid.worst_case_size(grid.tile_shape, compression)
    if wc > capacity:
        raise ConfigurationError(f"worst-case tile ({wc} bytes) exceeds bin capacity {capacity}")
    assign = next_fit_assign([wc] * grid.n_tiles, capacity)
    return assign[-1] + 1 if assign else 0


def seal_store(tiles: Sequence[np.ndarray], grid: TileGrid, role: str, layer: int,
               key: SealKey, state: IntegrityState, config: SimConfig,
               rng: np.random.Generator) -> tuple[SealedStore, IntegrityState]:
    """Compress, version, seal and next-fit pack the tiles of one tensor."""
    sealed, versions = [], {}
    for tid, data in enumerate(tiles):
        payload = hybrid.hybrid_compress(data, config.compression).payload
        state = vn_mac_update(state, (layer, role, tid), "compress", payload)
        versions[tid] = state.vn[(layer, role, tid)]
        nonce = derive_nonce(layer, ROLE_CODE[role], tid, versions[tid])
        sealed.append((tid, seal(payload, key, nonce)))
    bins, tmt = next_fit_pack(sealed, config.bin_capacity, role, rng)
    # whole bins are authenticated too, so padding bytes cannot be altered unnoticed
    for b in bins:
        state = vn_mac_update(state, (layer, role, "bin", b.bin_id), "compress", b.data)
    store = SealedStore(role, layer, grid, bins, tmt, versions,
                        worst_case_bins(grid, config.bin_capacity, config.compression),
                        config.compression)
    return store, state


def open_store(store: SealedStore, key: SealKey, state: IntegrityState,
               tile_ids: Iterable[int] | None = None) -> tuple[dict, IntegrityState]:
    """Unseal and decompress tiles through the TMT, updating the read MAC.

    Undecodable tiles (tampered or replayed data) are returned as None; the
    MAC mismatch is what flags them.
    """
    out = {}
    for b in store.bins:
        state = vn_mac_update(state, (store.layer, store.role, "bin", b.bin_id), "decompress", b.data)
    ids = range(store.grid.n_tiles) if tile_ids is None else tile_ids
    for tid in ids:
        try:
            e = store.tmt.lookup(tid)
        except TmtLookupError as exc:
            raise SimulationError(str(exc)) from None
        b = store.bins[e.bin_id]
        payload = unseal(b.segment(e.addr, e.length), key, store.nonce(tid))
        state = vn_mac_update(state, (store.layer, store.role, tid), "decompress", payload)
        try:
            blk = CompressedBlock("hybrid", payload, store.grid.tile_bytes)
            out[tid] = hybrid.hybrid_decompress(blk, store.grid.tile_shape)
        except (ValueError, IndexError, struct.error):
            out[tid] = None
    return out, state


# -- protected traces -----------------------------------------------------


@dataclass
class LayerTraffic:
    """Bins a protected layer must read and write, real and worst case."""

    read_bins: list[Bin]
    read_worst: int
    write_bins: list[Bin]
    write_worst: int


def gen_protected_trace(layers: Sequence[LayerTraffic], config: SimConfig | None = None,
                        rng: np.random.Generator | None = None) -> tuple[Trace, list[list[Bin]]]:
    """Bin-granularity trace; returns it with the bins written in each layer.

    Per layer the number of rounds is ``max(ceil(read_worst / residency),
    write_worst)``; each round is `residency` bin reads then one bin write.
    Real reads and writes come first, fakes fill the rest. Every event gets
    a fresh bin slot address, laid out in access order.
    """
    config = config or SimConfig(mode="sparselock")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    cap = config.bin_capacity
    tb = _TraceBuilder()
    written: list[list[Bin]] = []
    for li, lt in enumerate(layers):
        if len(lt.read_bins) > lt.read_worst or len(lt.write_bins) > lt.write_worst:
            raise SimulationError("real bin count exceeds the worst-case bound")
        rounds = max(-(-lt.read_worst // config.residency), lt.write_worst)
        reads = iter(lt.read_bins)
        writes = iter(lt.write_bins)
        out_bins = []
        for _ in range(rounds):
            for _ in range(config.residency):
                real = next(reads, None)
                tb.emit("R", "bin", len(tb.events), cap, li, fake=real is None)
            real = next(writes, None)
            if real is None:
                real = empty_bin(-1, cap, rng)
                tb.emit("W", "bin", len(tb.events), cap, li, fake=True)
            else:
                tb.emit("W", "bin", len(tb.events), cap, li)
            out_bins.append(real)
        written.append(out_bins)
    return tb.build(config.to_dict()), written


@dataclass
class ProtectedRun:
    trace: Trace
    stores: list[dict]  # per layer: role -> SealedStore
    written: list[list[Bin]]  # bin payloads the bus carries on each write event
    integrity: list[IntegrityState]
    outputs: list[np.ndarray]


def run_sparselock(workload: Workload, config: SimConfig | None = None,
                   key: SealKey | None = None) -> ProtectedRun:
    """Execute the workload under binning and sealing."""
    config = config or SimConfig(mode="sparselock")
    rng = np.random.default_rng(config.seed)
    key = key or SealKey(rng.bytes(32))
    schedules = workload.schedules()
    acts = workload.forward()
    stores, states, traffic = [], [], []
    carried = None
    for li, (layer, sched) in enumerate(zip(workload.layers, schedules)):
        state = IntegrityState()
        st = {}
        gi, gw, go = (sched.grid(r) for r in ("ifmap", "weight", "ofmap"))
        if carried is None:
            st["ifmap"], state = seal_store(
                [t.data for t in convnet.tile(acts[li], gi)], gi, "ifmap", li, key, state, config, rng)
        st["weight"], state = seal_store(
            [t.data for t in convnet.tile(layer.weights, gw)], gw, "weight", li, key, state, config, rng)
        reads = []
        for role in ("ifmap", "weight"):
            if role in st:
                tiles, state = open_store(st[role], key, state)
                if any(t is None for t in tiles.values()):
                    raise SimulationError(f"{role} tile failed to decode")
                reads += st[role].bins
        st["ofmap"], state = seal_store(
            [t.data for t in convnet.tile(acts[li + 1], go)], go, "ofmap", li, key, state, config, rng)
        # the ofmap is consumed from the on-chip buffer; verify the sealed copy the same way
        _, state = open_store(st["ofmap"], key, state)
        read_worst = sum(s.worst_bins for r, s in st.items() if r != "ofmap")
        traffic.append(LayerTraffic(reads, read_worst, st["ofmap"].bins, st["ofmap"].worst_bins))
        stores.append(st)
        states.append(state)
        carried = st["ofmap"]
    trace, written = gen_protected_trace(traffic, config, rng)
    return ProtectedRun(trace, stores, written, states, acts[1:])


def run(workload: Workload, config: SimConfig) -> Trace:
    """Trace of `workload` under `config.mode`."""
    if config.mode == "sparselock":
        return run_sparselock(workload, config).trace
    return gen_baseline_trace(workload, config)


def raw_pairs(trace: Trace) -> int:
    """Number of W events whose object is read again later."""
    n = 0
    pending = set()
    for e in trace.events:
        if e.op == "W":
            pending.add(e.id)
        elif e.id in pending:
            n += 1
            pending.discard(e.id)
    return n


def strided_trace(strides: Sequence[int], n_events: int | None = None,
                  mode: str = "baseline", config: SimConfig | None = None) -> Trace:
    """Synthetic loop-nest trace whose tile ids cycle with the given strides.

    Event t reads tile ``sum(t mod s for s in strides)``. In ``sparselock``
    mode the same number of reads is issued as bin rounds with fresh slot
    addresses, which is how a protected run of that loop nest looks on the bus.
    """
    strides = [int(s) for s in strides]
    if not strides or min(strides) < 1:
        raise ConfigurationError("strides must be positive")
    if n_events is None:
        n_events = 2 * math.lcm(*strides)
    tb = _TraceBuilder()
    if mode == "sparselock":
        config = config or SimConfig(mode="sparselock")
        cap, res = config.bin_capacity, config.residency
        rounds = -(-n_events // res)
        for _ in range(rounds):
            for _ in range(res):
                tb.emit("R", "bin", len(tb.events), cap, 0)
            tb.emit("W", "bin", len(tb.events), cap, 0)
        return tb.build(config.to_dict())
    t = np.arange(n_events)
    ids = sum(t % s for s in strides)
    for i in ids:
        tb.emit("R", "tile", i, 1, 0)
    return tb.build({"mode": mode, "strides": strides})
