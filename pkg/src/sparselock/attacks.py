"""Memory-trace attacks: loop periodicity, RAW distance, layer boundaries and HuffDuff.

HuffDuff places a single non-zero value at a sweep of input positions and
watches how many bytes the compressed ofmap write takes. Near the edge of
the feature map fewer filter taps land inside the output, so the write
shrinks; the distance from the edge at which the size stops growing gives
away the filter half-width.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from . import convnet, memsim
from .convnet import LayerSpec
from .errors import DomainError, EstimationFailure, TraceTooShort
from .memsim import SimConfig, Trace

PLATEAU_TOL = 0.05
PLATEAU_RUN = 3
PEAK_FACTOR = 3.0


@dataclass(frozen=True)
class NnzCurve:
    positions: tuple
    values: tuple
    mode: str = "attacker"

    def __post_init__(self):
        if len(self.positions) != len(self.values):
            raise ValueError("one observation per probe position is required")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["position", "value"])
        for p, v in zip(self.positions, self.values):
            w.writerow([p if np.isscalar(p) else "x".join(map(str, p)), v])
        return buf.getvalue()


@dataclass
class HintReport:
    raw_distance: dict
    traffic: dict
    boundaries: list
    periods: list

    def to_json(self) -> str:
        return json.dumps({
            "raw_distance": {str(k): v for k, v in self.raw_distance.items()},
            "traffic": {str(k): v for k, v in self.traffic.items()},
            "boundaries": self.boundaries,
            "periods": [[p, m] for p, m in self.periods],
        }, indent=2, sort_keys=True)


@dataclass
class ArchEstimate:
    filter_sizes: list = field(default_factory=list)  # per layer: int, (h, w) or None
    strides: list = field(default_factory=list)
    log10_space: float = 0.0
    status: str = "ok"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


# -- HuffDuff -------------------------------------------------------------


def _probe_workload(layer: LayerSpec, weights, position) -> memsim.Workload:
    x = convnet.make_impulse(layer.in_shape, (0,) + tuple(np.atleast_1d(position)))
    return memsim.Workload(x, [memsim.Layer(layer, weights)])


def probe_observation(layer: LayerSpec, weights, position, mode: str = "compress",
                      config: SimConfig | None = None) -> int:
    """One HuffDuff observation for an impulse at `position`.

    ``compress`` and ``sparselock`` return the ofmap write bytes seen on the
    bus; ``oracle`` returns the exact ofmap NNZ.
    """
    if mode == "oracle":
        x = convnet.make_impulse(layer.in_shape, (0,) + tuple(np.atleast_1d(position)))
        return convnet.nnz(convnet.conv_layer(x, weights, layer))
    config = config or SimConfig(mode=mode, compression="sparse")
    if config.mode != mode:
        config = SimConfig(**{**config.to_dict(), "mode": mode})
    trace = memsim.run(_probe_workload(layer, weights, position), config)
    return sum(e.bytes for e in trace.events if e.op == "W")


def huffduff_probe(layer: LayerSpec, weights, positions: Sequence | None = None,
                   mode: str = "compress", config: SimConfig | None = None) -> NnzCurve:
    """Ofmap write-size proxy (or exact NNZ in oracle mode) for each impulse position."""
    if positions is None:
        positions = list(range(layer.spatial_shape[-1]))
    vals = tuple(int(probe_observation(layer, weights, p, mode, config)) for p in positions)
    return NnzCurve(tuple(positions), vals, mode)


def probe_traces(layer: LayerSpec, weights, positions: Sequence, mode: str = "sparselock",
                 config: SimConfig | None = None) -> list[Trace]:
    config = config or SimConfig(mode=mode, compression="sparse")
    return [memsim.run(_probe_workload(layer, weights, p), config) for p in positions]


def knee_detect(curve: NnzCurve | Sequence, tol: float = PLATEAU_TOL, run: int = PLATEAU_RUN) -> int:
    """Filter size ``2k+1`` from an edge sweep whose plateau starts at index ``k+1``.

    Indices are 1-based from the edge. The plateau is the first run of at
    least `run` values within `tol` of the curve maximum.
    """
    v = np.asarray(curve.values if isinstance(curve, NnzCurve) else curve, dtype=float)
    if v.size < run or v.max() <= 0:
        raise EstimationFailure("curve is empty or all zero")
    near = v >= (1 - tol) * v.max()
    for i in range(v.size - run + 1):
        if near[i : i + run].all():
            if i == 0:
                raise EstimationFailure("curve is flat from the edge; no knee")
            return 2 * (i + 1) - 1
    raise EstimationFailure("no plateau")


def huffduff_attack(layer: LayerSpec, weights, mode: str = "compress",
                    config: SimConfig | None = None) -> int:
    """Recover the filter size of `layer`; 2D layers are swept per axis."""
    if len(layer.spatial_shape) == 1:
        return knee_detect(huffduff_probe(layer, weights, mode=mode, config=config))
    return huffduff_attack_2d(layer, weights, mode, config)


def huffduff_attack_2d(layer: LayerSpec, weights, mode: str = "compress",
                       config: SimConfig | None = None, lines: int = 3) -> tuple[int, int]:
    """Per-axis edge sweeps along `lines` rows and columns near the centre, majority per axis."""
    h, w = layer.spatial_shape
    out = []
    for axis, (n_line, n_sweep) in enumerate(((w, h), (h, w))):
        votes = []
        mid = n_line // 2
        for off in range(-(lines // 2), lines - lines // 2):
            c = min(max(mid + off, 0), n_line - 1)
            pos = [(s, c) if axis == 0 else (c, s) for s in range(n_sweep)]
            try:
                votes.append(knee_detect(huffduff_probe(layer, weights, pos, mode, config)))
            except EstimationFailure:
                votes.append(None)
        best, count = Counter(votes).most_common(1)[0]
        if best is None or count * 2 <= len(votes):
            raise EstimationFailure(f"no majority along axis {axis}")
        out.append(best)
    return tuple(out)


# -- Type-A hints ---------------------------------------------------------


def fft_periodicity(trace: Trace | Sequence[int], factor: float = PEAK_FACTOR,
                    max_period: float | None = None, harmonics: bool = False) -> list[tuple]:
    """Periods of the tile-id signal as ``(period, magnitude)``, strongest first.

    Peaks are local maxima of the magnitude spectrum above `factor` times its
    median. Integer multiples of a detected frequency are dropped as
    harmonics unless `harmonics` is set.
    """
    ids = trace.ids() if isinstance(trace, Trace) else np.asarray(trace, dtype=np.int64)
    n = ids.size
    if n < 8:
        raise TraceTooShort(f"{n} events are too few for a spectrum")
    mag = np.abs(np.fft.rfft(ids - ids.mean()))
    mag[0] = 0.0
    if mag.max() == 0:
        return []
    # a floor relative to the maximum keeps round-off from counting as a peak
    thresh = max(factor * np.median(mag[1:]), 1e-6 * mag.max())
    peaks, _ = find_peaks(np.concatenate([[0.0], mag[1:], [0.0]]), height=thresh)
    bins = sorted(int(p) for p in peaks)
    max_period = n / 2 if max_period is None else max_period
    kept = []
    for b in bins:
        if not harmonics and any(b % k == 0 for k in kept):
            continue
        kept.append(b)
    out = [(n / b, float(mag[b])) for b in kept if n / b <= max_period]
    return sorted(out, key=lambda t: -t[1])


def detected_periods(trace, **kw) -> set[int]:
    """Periods from `fft_periodicity` that are integers (within round-off)."""
    return {round(p) for p, _ in fft_periodicity(trace, **kw) if abs(p - round(p)) < 1e-6}


def raw_distance(trace: Trace) -> dict:
    """Distribution of gaps from a write to the next read of the same id."""
    last_w: dict[int, int] = {}
    gaps = []
    for e in trace.events:
        if e.op == "W":
            last_w[e.id] = e.seq
        elif e.id in last_w:
            gaps.append(e.seq - last_w.pop(e.id))
    if not gaps:
        return {}
    c = Counter(gaps)
    return {g: c[g] / len(gaps) for g in sorted(c)}


def layer_boundary_detect(trace: Trace) -> list[int]:
    """Sequence numbers at which a new layer appears to start.

    A read of an id whose last write is already behind it, and which is never
    written again, consumes a finished output: the consumer layer began just
    after the last write preceding that read. Reads of outputs produced before
    the latest claimed boundary belong to that boundary.
    """
    events = trace.events
    final_w: dict[int, int] = {}
    for e in events:
        if e.op == "W":
            final_w[e.id] = e.seq
    boundaries = []
    last_w = None
    for e in events:
        if e.op == "W":
            last_w = e.seq
            continue
        w = final_w.get(e.id)
        if w is None or w > e.seq or last_w is None:
            continue
        b = last_w + 1
        if boundaries and w < boundaries[-1]:
            continue
        if not boundaries or b > boundaries[-1]:
            boundaries.append(b)
    return boundaries


def hint_report(trace: Trace) -> HintReport:
    bounds = layer_boundary_detect(trace)
    edges = [0] + bounds + [len(trace.events)]
    seqs = np.array([e.seq for e in trace.events])
    sizes = np.array([e.bytes for e in trace.events])
    traffic = {}
    for i, (a, b) in enumerate(zip(edges, edges[1:])):
        traffic[i] = int(sizes[(seqs >= a) & (seqs < b)].sum())
    try:
        periods = fft_periodicity(trace)
    except TraceTooShort:
        periods = []
    return HintReport(raw_distance(trace), traffic, bounds, periods)


# -- search space ---------------------------------------------------------

DEFAULT_RANGES = {
    "filter_h": tuple(range(1, 12, 2)),
    "filter_w": tuple(range(1, 12, 2)),
    "channels": tuple(range(1, 1025)),
    "stride": (1, 2, 3),
    "padding": ("valid", "same"),
    "pool": ("none", "max", "avg"),
}


def search_space_size(estimate: ArchEstimate | Sequence[dict] | None = None, n_layers: int = 16,
                      ranges: dict | None = None) -> float:
    """log10 of the number of architectures consistent with per-layer candidate sets.

    Given a list of per-layer dicts, each maps a parameter to its surviving
    candidates (a collection or a count). Given an `ArchEstimate`, recovered
    filter sizes pin the filter parameters and the rest keep `ranges`.
    """
    ranges = dict(DEFAULT_RANGES if ranges is None else ranges)
    if estimate is None:
        layers = [ranges] * n_layers
    elif isinstance(estimate, ArchEstimate):
        layers = []
        for fs in estimate.filter_sizes:
            r = dict(ranges)
            if fs is not None:
                fh, fw = (fs, fs) if np.isscalar(fs) else fs
                r["filter_h"], r["filter_w"] = (fh,), (fw,)
            layers.append(r)
    else:
        layers = list(estimate)
    total = 0.0
    for i, layer in enumerate(layers):
        for name, cands in layer.items():
            n = cands if isinstance(cands, (int, np.integer)) else len(cands)
            if n < 1:
                raise DomainError(f"layer {i} has no candidates for {name}")
            total += math.log10(n)
    return total


def spectrum_csv(trace: Trace) -> str:
    ids = trace.ids()
    mag = np.abs(np.fft.rfft(ids - ids.mean()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin", "period", "magnitude"])
    for k in range(1, mag.size):
        w.writerow([k, ids.size / k, f"{mag[k]:.6g}"])
    return buf.getvalue()
