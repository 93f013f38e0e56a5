from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparselock import convnet, experiments, memsim
from sparselock.convnet import LayerSpec
from sparselock.errors import ConfigurationError, SimulationError
from sparselock.memsim import IntegrityState, Layer, SimConfig, Workload
from sparselock.sealing import SealKey


def hand_layer(weight_tile=(2, 4, 3)):
    """4 input channels of length 8, one channel per ifmap tile; 2 ofmap tiles."""
    spec = LayerSpec(in_shape=(4, 8), filter_shape=(3,), out_channels=2, padding="same")
    rng = np.random.default_rng(0)
    w = convnet.random_weights(spec, rng)
    return Workload(rng.integers(-5, 5, (4, 8)), [Layer(spec, w, ofmap_tile=(1, 8), weight_tile=weight_tile)],
                    input_tile=(1, 8))


def two_layer_workload(seed=0, n=16):
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(2):
        spec = LayerSpec(in_shape=(4, n), filter_shape=(3,), out_channels=4, padding="same", requant_shift=4)
        layers.append(Layer(spec, convnet.random_weights(spec, rng), ofmap_tile=(2, n), weight_tile=(2, 2, 3)))
    return Workload(rng.integers(-9, 9, (4, n)), layers, input_tile=(2, n))


def counts(trace, wl):
    bases = memsim._object_ids(wl.schedules())[0]
    roles = sorted(bases.items(), key=lambda kv: kv[1])

    def role(i):
        return [r for r, b in roles if b <= i][-1]

    return Counter((e.op, role(e.id)) for e in trace.events)


# -- config and traces ----------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SimConfig(mode="bogus")
    with pytest.raises(ConfigurationError):
        SimConfig(residency=0)
    with pytest.raises(ConfigurationError):
        SimConfig(loop_order="random")


def test_trace_seq_must_increase():
    e = memsim.MemEvent(0, "R", "tile", 0, 1, 0)
    with pytest.raises(ValueError):
        memsim.Trace((e, e))


def test_jsonl_field_order_and_round_trip():
    t = memsim.run(hand_layer(), SimConfig())
    line = t.to_jsonl().splitlines()[0]
    assert line.startswith('{"seq": 0, "op": "R", "unit": "tile", "id": ')
    assert "fake" not in line and '"fake": false' in t.to_jsonl(oracle=True).splitlines()[0]
    assert memsim.Trace.from_jsonl(t.to_jsonl()).attacker_view() == t.attacker_view()


def test_traffic_of_empty_trace():
    assert memsim.traffic_bytes(memsim.Trace(()))["total"] == 0


# -- baseline loop nest ---------------------------------------------------


def test_weight_stationary_hand_enumeration():
    wl = hand_layer()
    c = counts(memsim.run(wl, SimConfig()), wl)
    assert c == {("R", "ifmap"): 8, ("R", "weight"): 1, ("W", "ofmap"): 2}


def test_output_stationary_rereads_weights():
    wl = hand_layer()
    c = counts(memsim.run(wl, SimConfig(loop_order="output_stationary")), wl)
    assert c == {("R", "ifmap"): 8, ("R", "weight"): 2, ("W", "ofmap"): 2}


def test_weights_read_only_and_ofmaps_written_then_read_in_multipass():
    wl = hand_layer(weight_tile=(2, 2, 3))
    t = memsim.run(wl, SimConfig())
    bases = memsim._object_ids(wl.schedules())[0]
    weight_ids = {bases["weight"], bases["weight"] + 1}
    assert all(e.op == "R" for e in t.events if e.id in weight_ids)
    assert memsim.raw_pairs(t) == 2  # each ofmap tile: partial written, read back, finished


def test_multipass_raw_gap_is_tiling_period():
    wl = hand_layer(weight_tile=(2, 2, 3))
    from sparselock import attacks
    d = attacks.raw_distance(memsim.run(wl, SimConfig()))
    # R w0 | R i0 R i1 W o0@3 | R i0 R i1 W o1@6 | R w1 | R o0@8 ... W o0 | R o1@12
    assert d == {5: 0.5, 6: 0.5}


def test_baseline_sizes_are_raw_tile_bytes():
    wl = hand_layer()
    t = memsim.run(wl, SimConfig())
    assert {e.bytes for e in t.events} == {4 * 8, 4 * 2 * 4 * 3}


def test_compressed_write_sizes_match_hybrid():
    from sparselock.compress import hybrid_compress
    wl = hand_layer()
    t = memsim.run(wl, SimConfig(mode="compress"))
    out = wl.forward()[1]
    writes = [e.bytes for e in t.events if e.op == "W"]
    assert writes == [len(hybrid_compress(out[i : i + 1], "auto")) for i in range(2)]


def test_schedule_mismatch_raises():
    wl = hand_layer()
    other = two_layer_workload().schedules()[:1]
    with pytest.raises(SimulationError):
        memsim.gen_baseline_trace(wl, SimConfig(), other)


def test_strided_trace_periods():
    from sparselock import attacks
    assert attacks.detected_periods(memsim.strided_trace((15, 65, 85))) == {15, 65, 85}


def test_compress_only_halves_traffic_at_70_percent():
    r = experiments.traffic_comparison(experiments.sparse_workload(0.7))
    assert r["ratio"] <= 0.5


# -- protected traces -----------------------------------------------------


def test_protected_events_are_whole_bins():
    t = memsim.run(two_layer_workload(), SimConfig(mode="sparselock"))
    assert {(e.unit, e.bytes) for e in t.events} == {("bin", 61440)}
    assert memsim.traffic_bytes(t)["total"] == 61440 * len(t)


def test_protected_round_structure():
    t = memsim.run(two_layer_workload(), SimConfig(mode="sparselock", residency=3))
    ops = "".join(e.op for e in t.events)
    assert ops == "RRRW" * (len(ops) // 4)


def test_single_bin_layer_one_round():
    spec = LayerSpec(in_shape=(1, 8), filter_shape=(3,), out_channels=1, padding="same")
    wl = Workload(convnet.make_impulse((1, 8), (0, 3)), [Layer(spec, np.ones((1, 1, 3)))])
    run = memsim.run_sparselock(wl, SimConfig(mode="sparselock", residency=3))
    assert run.trace.attacker_view() == [("R", "bin", i, 61440) for i in range(3)] + [("W", "bin", 3, 61440)]
    assert [e.fake for e in run.trace.events] == [False, False, True, False]


def test_fakes_only_in_oracle_view():
    t = memsim.run(two_layer_workload(), SimConfig(mode="sparselock"))
    assert any(e.fake for e in t.events)
    assert all(len(v) == 4 for v in t.attacker_view())
    assert "fake" not in t.to_jsonl()


def test_protected_trace_has_no_raw_pairs():
    base = memsim.run(two_layer_workload(), SimConfig(mode="compress"))
    prot = memsim.run(two_layer_workload(), SimConfig(mode="sparselock"))
    assert memsim.raw_pairs(base) >= 1
    assert memsim.raw_pairs(prot) == 0


@pytest.mark.parametrize("positions", [(0, 31), (5, 16), (2, 30)])
def test_impulse_positions_give_identical_protected_views(positions):
    rng = np.random.default_rng(1)
    spec, w = experiments.probe_layer(5, rng)
    views = []
    for p in positions:
        wl = Workload(convnet.make_impulse(spec.in_shape, (0, p)), [Layer(spec, w)])
        views.append(memsim.run(wl, experiments.probe_config("sparselock")).attacker_view())
    assert views[0] == views[1]


def test_compress_only_views_differ_by_position():
    rng = np.random.default_rng(1)
    spec, w = experiments.probe_layer(5, rng)
    sizes = [memsim.run(Workload(convnet.make_impulse(spec.in_shape, (0, p)), [Layer(spec, w)]),
                        experiments.probe_config("compress")).attacker_view() for p in (0, 16)]
    assert sizes[0] != sizes[1]


def test_protected_run_reconstructs_outputs():
    wl = two_layer_workload(3)
    run = memsim.run_sparselock(wl, SimConfig(mode="sparselock"), SealKey(bytes(32)))
    key = SealKey(bytes(32))
    for li, st_ in enumerate(run.stores):
        tiles, _ = memsim.open_store(st_["ofmap"], key, run.integrity[li])
        grid = st_["ofmap"].grid
        rebuilt = convnet.untile([convnet.Tile(i, tiles[i], np.ones(grid.tile_shape, bool))
                                  for i in range(grid.n_tiles)], grid)
        assert np.array_equal(rebuilt, wl.forward()[li + 1])
    assert all(s.verify() for s in run.integrity)


def test_protected_trace_rejects_overfull_layer():
    lt = memsim.LayerTraffic([], 0, [object(), object()], 1)
    with pytest.raises(SimulationError):
        memsim.gen_protected_trace([lt])


def test_tmt_miss_is_simulation_error():
    rng = np.random.default_rng(0)
    grid = convnet.TileGrid((2, 8), (1, 8))
    store, state = memsim.seal_store([np.zeros((1, 8), np.int32)] * 2, grid, "ofmap", 0,
                                     SealKey(bytes(32)), IntegrityState(), SimConfig(mode="sparselock"), rng)
    with pytest.raises(SimulationError):
        memsim.open_store(store, SealKey(bytes(32)), state, [7])


def test_strided_trace_protected_is_fresh_bins():
    t = memsim.strided_trace((15, 65, 85), mode="sparselock")
    assert t.ids().tolist() == list(range(len(t)))


# -- integrity ------------------------------------------------------------


def test_matched_replay_verifies():
    s = IntegrityState()
    for t in range(5):
        s = memsim.vn_mac_update(s, t, "compress", bytes([t]))
    for t in range(5):
        s = memsim.vn_mac_update(s, t, "decompress", bytes([t]))
    assert s.verify()


def test_stale_version_is_detected():
    s = memsim.vn_mac_update(IntegrityState(), 0, "compress", b"v1")
    s = s.new_epoch()
    s = memsim.vn_mac_update(s, 0, "compress", b"v2")
    s = memsim.vn_mac_update(s, 0, "decompress", b"v1", vn=1)
    assert not s.verify()


def test_unknown_tile_decompress_raises():
    with pytest.raises(SimulationError):
        memsim.vn_mac_update(IntegrityState(), 3, "decompress", b"")


@settings(max_examples=100)
@given(st.permutations(list(range(8))), st.permutations(list(range(8))))
def test_mac_is_order_insensitive(write_order, read_order):
    s = IntegrityState()
    for t in write_order:
        s = memsim.vn_mac_update(s, t, "compress", bytes([t, 7]))
    for t in read_order:
        s = memsim.vn_mac_update(s, t, "decompress", bytes([t, 7]))
    assert s.verify()


@pytest.mark.parametrize("kind,flagged", [("clean", False), ("tamper", True), ("replay", True)])
def test_integrity_trials(kind, flagged):
    assert [experiments.integrity_trial(kind, s) for s in range(10)] == [flagged] * 10


def test_tampered_padding_is_detected():
    rng = np.random.default_rng(2)
    grid = convnet.TileGrid((2, 8), (1, 8))
    key = SealKey(bytes(32))
    store, state = memsim.seal_store([np.zeros((1, 8), np.int32)] * 2, grid, "ofmap", 0, key,
                                     IntegrityState(), SimConfig(mode="sparselock", bin_capacity=256), rng)
    b = store.bins[0]
    b.data = b.data[:-1] + bytes([b.data[-1] ^ 1])
    _, state = memsim.open_store(store, key, state)
    assert not state.verify()


def test_worst_case_tile_must_fit_a_bin():
    with pytest.raises(ConfigurationError):
        memsim.worst_case_bins(convnet.TileGrid((64, 64), (64, 64)), 1024)
