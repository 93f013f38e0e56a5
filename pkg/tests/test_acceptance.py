"""Acceptance criteria, one test each, with their stated tolerances and time limits.

Each test prints ``PASS``/``FAIL`` with the measured values; the lines are
also collected into a summary section at the end of the pytest run.
"""
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

from sparselock import attacks, convnet, experiments, leakage, memsim  # noqa: E402
from sparselock.compress import (  # noqa: E402
    bdi_compress, bdi_decompress, compression_ratio, csc_decode, csc_encode, fpc_compress, fpc_decompress,
    huffman_compress, huffman_decompress, hybrid_compress, hybrid_decompress, rle_compress, rle_decompress,
)
from sparselock.memsim import SimConfig  # noqa: E402
from sparselock.sealing import next_fit_pack  # noqa: E402

WORKERS = min(4, os.cpu_count() or 1)


@contextmanager
def criterion(number: int, title: str, limit_s: float):
    """Run a criterion body; it fills `info` with `ok` and a detail string."""
    info = {"ok": False, "detail": ""}
    t0 = time.perf_counter()
    try:
        yield info
    finally:
        dt = time.perf_counter() - t0
        in_time = dt < limit_s
        ok = info["ok"] and in_time
        line = (f"[{number:2d}] {'PASS' if ok else 'FAIL'} {title}: {info['detail']}"
                f" ({dt:.2f} s, limit {limit_s:g} s)")
        print(line)
        ACCEPTANCE_LINES.append(line)
    assert info["ok"], info["detail"]
    assert in_time, f"took {dt:.2f} s, limit {limit_s} s"


def test_01_boundary_effect_oracle():
    with criterion(1, "boundary-effect oracle", 1.0) as c:
        bad = [(n, k) for n in (10, 32, 64) for k in range(4)
               if convnet.conv1d(np.ones(n), np.ones(2 * k + 1)).tolist() != convnet.boundary_counts(n, k).tolist()]
        c["ok"] = not bad
        c["detail"] = f"12 (n, k) pairs, mismatches {bad}"


def test_02_huffduff_unprotected():
    with criterion(2, "HuffDuff on compression-only traces", 30.0) as c:
        trials = experiments.huffduff_ensemble(100, "compress", seed=0, workers=WORKERS)
        hits = sum(t["estimate"] == t["true"] for t in trials)
        c["ok"] = hits >= 95
        c["detail"] = f"{hits}/100 filter sizes recovered (need >= 95)"


def test_03_huffduff_protected():
    with criterion(3, "HuffDuff defeated under SparseLock", 30.0) as c:
        trials = experiments.huffduff_ensemble(100, "sparselock", seed=0, workers=WORKERS)
        identical = sum(t["identical"] for t in trials)
        failed = sum(t["estimate"] is None for t in trials)
        c["ok"] = identical == failed == 100
        c["detail"] = f"identical views {identical}/100, estimation failures {failed}/100"


def test_04_fft_periodicity():
    with criterion(4, "FFT loop-stride attack", 10.0) as c:
        found = attacks.detected_periods(memsim.strided_trace((15, 65, 85)))
        rng = np.random.default_rng(4)
        leaks = 0
        for _ in range(100):
            strides = rng.choice(np.arange(4, 129), 3, replace=False).tolist()
            t = memsim.strided_trace(strides, n_events=3 * max(strides) * 4, mode="sparselock")
            leaks += bool(attacks.detected_periods(t) & set(strides))
        c["ok"] = found == {15, 65, 85} and leaks == 0
        c["detail"] = f"baseline periods {sorted(found)}, protected triples with a matching period {leaks}/100"


def test_05_leakage_close_to_random():
    with criterion(5, "leakage metrics close to random", 120.0) as c:
        ens = experiments.leakage_ensemble(2048, seed=0, workers=WORKERS)
        prot, rand, secret = ens["sparselock"], ens["random"], ens["secret"]
        fi_p, fi_r = prot.fi(), rand.fi()
        gap = abs(fi_p - fi_r) / fi_r
        mi_p = leakage.mutual_information(secret, prot.scalars)
        mi_r = leakage.mutual_information(secret, rand.scalars)
        cvm = leakage.cvm_distance(prot.scalars, rand.scalars)
        runs_p = float(prot.runs_p.mean())
        c["ok"] = gap <= 0.10 and mi_p <= mi_r + 0.05 and cvm < leakage.CVM_CRITICAL_5PCT and runs_p > 0.05
        c["detail"] = (f"FI gap {gap:.4f} (<= 0.10), MI {mi_p:.4f} vs random {mi_r:.4f} (+0.05), "
                       f"CVM {cvm:.4f} (< {leakage.CVM_CRITICAL_5PCT}), runs p {runs_p:.3f} (> 0.05)")


def _multipass(n_layers, seed):
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(n_layers):
        spec = convnet.LayerSpec(in_shape=(4, 16), filter_shape=(3,), out_channels=4, padding="same",
                                 requant_shift=4)
        layers.append(memsim.Layer(spec, convnet.random_weights(spec, rng, 0.5), ofmap_tile=(2, 16),
                                   weight_tile=(2, 2, 3)))
    return memsim.Workload(convnet.random_sparse_tensor((4, 16), 0.5, rng), layers, input_tile=(2, 16))


def test_06_raw_obliteration():
    with criterion(6, "read-after-write distance obliterated", 10.0) as c:
        prot_nonempty = base_empty = 0
        for seed in range(20):
            wl = _multipass(1 + seed % 3, seed)
            base_empty += attacks.raw_distance(memsim.run(wl, SimConfig(mode="compress"))) == {}
            prot_nonempty += attacks.raw_distance(memsim.run(wl, SimConfig(mode="sparselock"))) != {}
        for seed in range(20):
            spec, w = experiments.probe_layer(experiments.FILTER_SIZES[seed % 3], np.random.default_rng(seed))
            for t in attacks.probe_traces(spec, w, (0, 7, 31), "sparselock",
                                          experiments.probe_config("sparselock", seed)):
                prot_nonempty += attacks.raw_distance(t) != {}
        c["ok"] = prot_nonempty == 0 and base_empty == 0
        c["detail"] = (f"protected traces with RAW pairs {prot_nonempty}/80, "
                       f"multi-pass baseline traces without {base_empty}/20")


def _random_block(rng):
    n = int(rng.integers(1, 9)) * 32
    kind = int(rng.integers(3))
    if kind == 0:
        return convnet.random_sparse_tensor((n // 4,), rng.uniform(0, 1), rng, "q16").astype("<i4").tobytes()
    if kind == 1:
        return rng.bytes(n)
    return np.repeat(rng.integers(0, 256, n // 8, dtype=np.uint8), 8).tobytes()


def _random_matrix(rng):
    shape = (int(rng.integers(1, 9)), int(rng.integers(1, 9)))
    return convnet.random_sparse_tensor(shape, rng.uniform(0, 1), rng, "q16")


def test_07_compression():
    with criterion(7, "compression round trips and hybrid vs BDI", 60.0) as c:
        rng = np.random.default_rng(7)
        n = 10_000
        blocks = [_random_block(rng) for _ in range(n)]
        fails = {}
        for name, enc, dec in (("bdi", bdi_compress, bdi_decompress), ("fpc", fpc_compress, fpc_decompress),
                               ("rle", rle_compress, rle_decompress),
                               ("huffman", huffman_compress, huffman_decompress)):
            fails[name] = sum(dec(enc(b)) != b for b in blocks)
        mats = [_random_matrix(rng) for _ in range(n)]
        fails["csc"] = sum(not np.array_equal(csc_decode(csc_encode(m), m.shape), m) for m in mats)
        fails["hybrid"] = sum(not np.array_equal(hybrid_decompress(hybrid_compress(m, "auto"), m.shape), m)
                              for m in mats)
        better = 0
        for _ in range(100):
            tile = convnet.random_sparse_tensor((64, 64), rng.uniform(0.6, 0.8), rng, "q16")
            r_bdi = compression_ratio(bdi_compress(tile.astype("<i4").tobytes()))
            better += compression_ratio(hybrid_compress(tile)) >= 1.5 * r_bdi
        c["ok"] = not any(fails.values()) and better >= 90
        c["detail"] = f"{n} blocks per codec, failures {fails}; hybrid >= 1.5x BDI on {better}/100 tiles"


def test_08_traffic():
    with criterion(8, "compression-only traffic at 70% sparsity", 10.0) as c:
        r = experiments.traffic_comparison(experiments.sparse_workload(0.7, seed=0))
        c["ok"] = r["ratio"] <= 0.5
        c["detail"] = f"compressed/baseline bytes {r['ratio']:.3f} (<= 0.50)"


def test_09_integrity():
    with criterion(9, "integrity MACs", 10.0) as c:
        tamper = sum(experiments.integrity_trial("tamper", s) for s in range(100))
        replay = sum(experiments.integrity_trial("replay", s) for s in range(100))
        false_alarms = sum(experiments.integrity_trial("clean", s) for s in range(100))
        c["ok"] = tamper == replay == 100 and false_alarms == 0
        c["detail"] = f"tamper {tamper}/100, replay {replay}/100, false alarms {false_alarms}/100"


def optimal_bins(sizes, capacity):
    """Exact bin-packing optimum by depth-first search with first-bin symmetry breaking."""
    items = sorted(sizes, reverse=True)
    best = [len(items)]

    def place(i, loads):
        if len(loads) >= best[0]:
            return
        if i == len(items):
            best[0] = len(loads)
            return
        seen = set()
        for j, load in enumerate(loads):
            if load + items[i] <= capacity and load not in seen:
                seen.add(load)
                loads[j] += items[i]
                place(i + 1, loads)
                loads[j] -= items[i]
        loads.append(items[i])
        place(i + 1, loads)
        loads.pop()

    place(0, [])
    return best[0]


def test_10_bin_packing():
    with criterion(10, "next-fit bin packing invariants", 60.0) as c:
        rng = np.random.default_rng(10)
        cap = 100
        violations = bound_fail = checked = 0
        for _ in range(10_000):
            n = int(rng.integers(1, 21))
            sizes = rng.integers(1, cap + 1, n).tolist()
            tiles = [bytes([i % 256]) * s for i, s in enumerate(sizes)]
            bins, tmt = next_fit_pack(tiles, cap, rng=rng)
            order = [t for b in bins for t, _, _ in b.segments]
            ok = order == list(range(n))
            ok &= all(b.fill <= cap and len(b.data) == cap for b in bins)
            for i, t in enumerate(tiles):
                e = tmt.lookup(i)
                ok &= e.addr + e.length <= cap and bins[e.bin_id].segment(e.addr, e.length) == t
            violations += not ok
            if n <= 10:
                checked += 1
                bound_fail += len(bins) > 2 * optimal_bins(sizes, cap)
        c["ok"] = violations == 0 and bound_fail == 0
        c["detail"] = (f"10000 sequences, invariant violations {violations}; "
                       f"next-fit > 2x optimum on {bound_fail}/{checked} instances with <= 10 tiles")


def _partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def test_optimal_bins_matches_partition_enumeration():
    rng = np.random.default_rng(0)
    assert optimal_bins([60, 50, 40, 30, 20], 100) == 2
    for _ in range(200):
        sizes = rng.integers(1, 101, int(rng.integers(1, 8))).tolist()
        brute = min(len(p) for p in _partitions(sizes) if all(sum(b) <= 100 for b in p))
        assert optimal_bins(sizes, 100) == brute


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
