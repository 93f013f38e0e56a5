"""Seeded experiment ensembles shared by the command line and the acceptance tests."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import attacks, convnet, leakage, memsim
from .compress import hybrid
from .convnet import LayerSpec
from .errors import EstimationFailure
from .memsim import SimConfig
from .sealing import SealKey

FILTER_SIZES = (3, 5, 7)
PROBE_N = 32
PROBE_CHANNELS = 32
MAX_PROBE_SPARSITY = 0.6


def parallel_map(fn, items, workers: int = 1):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, items))


# -- HuffDuff -------------------------------------------------------------


def probe_layer(filter_size: int, rng: np.random.Generator, sparsity: float | None = None,
                n: int = PROBE_N, channels: int = PROBE_CHANNELS) -> tuple[LayerSpec, np.ndarray]:
    """A 1D "same" layer with pruned random weights, the victim of one probe run."""
    if sparsity is None:
        sparsity = float(rng.uniform(0, MAX_PROBE_SPARSITY))
    spec = LayerSpec(in_shape=(1, n), filter_shape=(filter_size,), out_channels=channels, padding="same")
    return spec, convnet.random_weights(spec, rng, sparsity)


def probe_config(mode: str, seed: int = 0) -> SimConfig:
    return SimConfig(mode=mode, compression="sparse", seed=seed)


def huffduff_trial(seed: int, mode: str = "compress") -> dict:
    """One victim layer, one full edge sweep, one filter-size guess.

    Under ``sparselock`` the record also says whether all probe traces were
    identical in the attacker view.
    """
    rng = np.random.default_rng(seed)
    f = FILTER_SIZES[seed % len(FILTER_SIZES)]
    spec, w = probe_layer(f, rng)
    cfg = probe_config(mode, seed)
    traces = attacks.probe_traces(spec, w, range(spec.spatial_shape[0]), mode, cfg)
    views = [t.attacker_view() for t in traces]
    curve = attacks.NnzCurve(tuple(range(len(traces))),
                             tuple(sum(e.bytes for e in t.events if e.op == "W") for t in traces))
    try:
        est = attacks.knee_detect(curve)
    except EstimationFailure:
        est = None
    return {"seed": seed, "true": f, "estimate": est, "identical": all(v == views[0] for v in views),
            "curve": list(curve.values)}


def huffduff_ensemble(n_trials: int = 100, mode: str = "compress", seed: int = 0,
                      workers: int = 1) -> list[dict]:
    return parallel_map(lambda i: huffduff_trial(seed + i, mode), range(n_trials), workers)


# -- traffic --------------------------------------------------------------


def sparse_workload(sparsity: float = 0.7, seed: int = 0, n_layers: int = 3, channels: int = 16,
                    size: int = 16) -> memsim.Workload:
    """Small 2D network whose weights and activations are `sparsity` sparse."""
    rng = np.random.default_rng(seed)
    x = convnet.random_sparse_tensor((channels, size, size), sparsity, rng)
    layers = []
    for _ in range(n_layers):
        spec = LayerSpec(in_shape=(channels, size, size), filter_shape=(3, 3), out_channels=channels,
                         padding="same", activation="relu", requant_shift=8)
        layers.append(memsim.Layer(spec, convnet.random_weights(spec, rng, sparsity),
                                   ofmap_tile=(channels // 2, size // 2, size),
                                   weight_tile=(channels // 2, channels // 2, 3, 3),
                                   act_sparsity=sparsity))
    return memsim.Workload(x, layers, input_tile=(channels // 2, size // 2, size))


def traffic_comparison(workload: memsim.Workload) -> dict:
    out = {}
    for mode in ("baseline", "compress"):
        out[mode] = memsim.traffic_bytes(memsim.gen_baseline_trace(workload, SimConfig(mode=mode)))["total"]
    out["ratio"] = out["compress"] / out["baseline"]
    return out


# -- integrity ------------------------------------------------------------


def integrity_trial(kind: str, seed: int) -> bool:
    """True when the layer check flags a mismatch.

    ``clean`` reads back exactly what was written, ``tamper`` flips one
    random byte of one random bin, ``replay`` swaps one bin for the same bin
    of the previous version of the tensor.
    """
    rng = np.random.default_rng(seed)
    grid = convnet.TileGrid((8, 64), (1, 64))
    cfg = SimConfig(mode="sparselock", bin_capacity=512)
    key = SealKey.generate(rng)
    state = memsim.IntegrityState()
    old = [t.data for t in convnet.tile(convnet.random_sparse_tensor((8, 64), 0.7, rng), grid)]
    old_store, state = memsim.seal_store(old, grid, "ofmap", 0, key, state, cfg, rng)
    state = state.new_epoch()
    new = [t.data for t in convnet.tile(convnet.random_sparse_tensor((8, 64), 0.7, rng), grid)]
    store, state = memsim.seal_store(new, grid, "ofmap", 0, key, state, cfg, rng)
    i = int(rng.integers(len(store.bins)))
    if kind == "tamper":
        b = store.bins[i]
        data = bytearray(b.data)
        data[int(rng.integers(len(data)))] ^= 1 << int(rng.integers(8))
        b.data = bytes(data)
    elif kind == "replay":
        j = min(i, len(old_store.bins) - 1)
        store.bins[i].data = old_store.bins[j].data
    elif kind != "clean":
        raise ValueError(f"unknown trial kind {kind!r}")
    _, state = memsim.open_store(store, key, state)
    return not state.verify()


# -- leakage --------------------------------------------------------------


@dataclass
class FeatureSet:
    """Per-ensemble features: pooled word popcounts, per-probe popcount and runs p-value."""

    word_counts: np.ndarray
    scalars: np.ndarray
    runs_p: np.ndarray
    sizes: np.ndarray

    @classmethod
    def collect(cls, payloads) -> "FeatureSet":
        counts = np.zeros(33)
        scalars, ps, sizes = [], [], []
        for d in payloads:
            counts += np.bincount(leakage.popcount_words(d), minlength=33)
            scalars.append(leakage.popcount(d))
            ps.append(leakage.runs_test(leakage.bits_of(d)).p_value)
            sizes.append(len(d))
        return cls(counts, np.array(scalars), np.array(ps), np.array(sizes))

    def fi(self) -> float:
        """FI of the pooled word-popcount law (bus content)."""
        return leakage.fisher_discrete(leakage.EmpiricalDist.from_counts(leakage.WORD_SUPPORT, self.word_counts))

    def fi_size(self) -> float:
        """FI of the per-probe transfer size law (bus volume, the HuffDuff channel)."""
        return leakage.fisher_discrete(leakage.EmpiricalDist.from_samples(self.sizes))

    def report(self, secret, reference: "FeatureSet", label: str) -> leakage.LeakageReport:
        fi = self.fi()
        try:
            r = leakage.pearson(self.scalars, secret)
        except leakage.UndefinedCorrelation:
            r = None
        return leakage.LeakageReport(fi, leakage.cramer_rao(fi), leakage.mutual_information(secret, self.scalars),
                                     r, float(self.runs_p.mean()), leakage.cvm_distance(self.scalars, reference.scalars),
                                     label)


def _leak_probe(seed: int):
    rng = np.random.default_rng(seed)
    f = FILTER_SIZES[int(rng.integers(len(FILTER_SIZES)))]
    spec, w = probe_layer(f, rng)
    pos = int(rng.integers(spec.spatial_shape[0]))
    wl = memsim.Workload(convnet.make_impulse(spec.in_shape, (0, pos)), [memsim.Layer(spec, w)])
    run = memsim.run_sparselock(wl, probe_config("sparselock", seed), SealKey.generate(rng))
    protected = b"".join(b.data for b in run.written[0])
    plain = hybrid.hybrid_compress(run.outputs[0], "sparse").payload
    return f, protected, plain


def leakage_ensemble(n_probes: int = 2048, seed: int = 0, workers: int = 1) -> dict:
    """Bus payloads of the ofmap writes for random victims and impulse positions.

    Returns feature sets for SparseLock, compression-only and a seeded
    random reference of the same byte count, plus the filter-size labels.
    """
    probes = parallel_map(_leak_probe, [seed * 1_000_003 + i for i in range(n_probes)], workers)
    secret = np.array([p[0] for p in probes])
    ref_rng = np.random.default_rng([seed, 0xFEED])
    protected = FeatureSet.collect(p[1] for p in probes)
    plain = FeatureSet.collect(p[2] for p in probes)
    reference = FeatureSet.collect(ref_rng.bytes(len(p[1])) for p in probes)
    return {"secret": secret, "sparselock": protected, "compress": plain, "random": reference}


def leakage_reports(ens: dict) -> list[leakage.LeakageReport]:
    ref = ens["random"]
    return [ens[k].report(ens["secret"], ref, k) for k in ("sparselock", "compress", "random")]


def depth_size_fi(n_probes: int = 256, seed: int = 0, n_layers: int = 4, n: int = 64,
                  channels: int = 16, requant_shift: int = 4, mode: str = "compress") -> list[float]:
    """Per-layer FI of ofmap write sizes over impulse probes of random 1D ReLU stacks."""
    sizes: list[list[int]] = [[] for _ in range(n_layers)]
    cfg = probe_config(mode, seed)
    for i in range(n_probes):
        rng = np.random.default_rng([seed, i])
        f = FILTER_SIZES[i % len(FILTER_SIZES)]
        layers, cin = [], 1
        for li in range(n_layers):
            spec = LayerSpec(in_shape=(cin, n), filter_shape=(f,), out_channels=channels, padding="same",
                             activation="relu", requant_shift=requant_shift if li else 0)
            layers.append(memsim.Layer(spec, convnet.random_weights(spec, rng, rng.uniform(0, MAX_PROBE_SPARSITY))))
            cin = channels
        x = convnet.make_impulse((1, n), (0, int(rng.integers(n))))
        for e in memsim.run(memsim.Workload(x, layers), cfg).events:
            if e.op == "W" and not e.fake:
                sizes[e.layer].append(e.bytes)
    return [leakage.fisher_discrete(leakage.EmpiricalDist.from_samples(s)) for s in sizes]
