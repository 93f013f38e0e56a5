import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparselock import convnet
from sparselock.compress import (
    CompressedBlock,
    bdi_compress,
    bdi_decompress,
    compression_ratio,
    csc_decode,
    csc_encode,
    fpc_compress,
    fpc_decompress,
    huffman_compress,
    huffman_decompress,
    hybrid_compress,
    hybrid_decompress,
    rle_compress,
    rle_decompress,
    worst_case_size,
)
from sparselock.compress import bdi, characterize, fpc, huffman, hybrid, rle
from sparselock.errors import CorruptBlockError, ShapeError, SizeError

words = st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=64)


def word_bytes(ws):
    return np.array(ws, dtype="<u4").tobytes()


# -- BDI ------------------------------------------------------------------


def test_bdi_zero_granule():
    blk = bdi_compress(bytes(32))
    assert blk.payload == b"\x00"
    assert compression_ratio(blk) >= 8


def test_bdi_base4_delta1_hand_example():
    vals = [1000, 1001, 1003, 1007, 1015, 1031, 1063, 1127]
    blk = bdi_compress(word_bytes(vals))
    # id byte, 4-byte base, eight 1-byte deltas
    assert blk.payload[0] == 5
    assert len(blk.payload) == 1 + 4 + 8
    assert blk.payload[1:5] == struct.pack("<I", 1000)
    assert list(blk.payload[5:]) == [0, 1, 3, 7, 15, 31, 63, 127]
    assert bdi_decompress(blk) == word_bytes(vals)


def test_bdi_random_granule_is_raw():
    data = bytes(np.random.default_rng(3).integers(0, 256, 32, dtype=np.uint8))
    blk = bdi_compress(data)
    assert blk.payload[0] == bdi.RAW
    assert compression_ratio(blk) <= 1


def test_bdi_misaligned():
    with pytest.raises(SizeError):
        bdi_compress(bytes(33))


def test_bdi_rejects_unknown_encoding():
    with pytest.raises(CorruptBlockError):
        bdi_decompress(b"\x09" + bytes(32))


@settings(max_examples=300)
@given(st.binary(min_size=0, max_size=8).flatmap(
    lambda seed: st.lists(st.integers(0, 255), min_size=0, max_size=256)))
def test_bdi_round_trip_and_bound(vals):
    data = bdi.pad_to_granule(bytes(vals))
    blk = bdi_compress(data)
    assert bdi_decompress(blk) == data
    assert len(blk.payload) <= len(data) + len(data) // 32


@settings(max_examples=300)
@given(base=st.integers(0, 2**32 - 1), deltas=st.lists(st.integers(-300, 300), min_size=8, max_size=8))
def test_bdi_round_trip_near_base(base, deltas):
    data = word_bytes([(base + d) % 2**32 for d in deltas])
    assert bdi_decompress(bdi_compress(data)) == data


# -- FPC ------------------------------------------------------------------


def test_fpc_zero_run_single_token():
    blk = fpc_compress(bytes(32))
    assert blk.payload == bytes([0b000_111_00])


def test_fpc_small_value_sign_extended_4():
    blk = fpc_compress(word_bytes([5]))
    # prefix 001 then 0101
    assert blk.payload == bytes([0b001_0101_0])


def test_fpc_uncompressed_fallback():
    assert fpc.classify(np.array([0xDEADBEEF], dtype=np.uint32))[0] == fpc.UNCOMPRESSED
    assert len(fpc_compress(word_bytes([0xDEADBEEF])).payload) == 5  # 35 bits


def test_fpc_misaligned():
    with pytest.raises(SizeError):
        fpc_compress(b"abc")


@settings(max_examples=300)
@given(words)
def test_fpc_round_trip_and_bound(ws):
    data = word_bytes(ws)
    blk = fpc_compress(data)
    assert fpc_decompress(blk) == data
    assert len(blk.payload) <= -(-35 * len(ws) // 8)


@settings(max_examples=300)
@given(st.lists(st.sampled_from([0, 1, 7, 0xFFFFFFFF, 0x80, 0x12340000, 0x00450012, 0x7F7F7F7F, 0xFFFF8000]),
                min_size=1, max_size=80))
def test_fpc_round_trip_pattern_words(ws):
    data = word_bytes(ws)
    assert fpc_decompress(fpc_compress(data)) == data


# -- RLE and Huffman ------------------------------------------------------


def test_rle_pairs():
    assert rle.rle_runs(b"aaaabbb") == [(ord("a"), 4), (ord("b"), 3)]


def test_rle_empty():
    with pytest.raises(SizeError):
        rle_compress(b"")


def test_huffman_single_symbol():
    blk = huffman_compress(b"z" * 4096)
    assert huffman.code_lengths({ord("z"): 4096}) == {ord("z"): 1}
    assert compression_ratio(blk) == pytest.approx(8, rel=0.01)


def test_huffman_frequent_symbol_gets_shorter_code():
    lengths = huffman.code_lengths({1: 3, 2: 1, 3: 1})
    assert lengths[1] < lengths[2]


def test_huffman_empty():
    with pytest.raises(SizeError):
        huffman_compress(b"")


@settings(max_examples=300)
@given(st.binary(min_size=1, max_size=300))
def test_rle_huffman_round_trip(data):
    assert rle_decompress(rle_compress(data)) == data
    assert huffman_decompress(huffman_compress(data)) == data


# -- CSC ------------------------------------------------------------------


def test_csc_hand_example():
    e = csc_encode([[0, 5], [7, 0]])
    assert e.nnz_values.tolist() == [7, 5]
    assert e.row_ids.tolist() == [1, 0]
    assert e.col_counts.tolist() == [1, 1]


def test_csc_zero_matrix():
    e = csc_encode(np.zeros((3, 4)))
    assert e.nnz_values.size == 0 and e.row_ids.size == 0 and e.col_counts.tolist() == [0] * 4


def test_csc_dense_larger_than_raw():
    m = np.ones((6, 6))
    assert csc_encode(m).nbytes > 4 * m.size


def test_csc_rank_check():
    with pytest.raises(ShapeError):
        csc_encode(np.ones(4))


@settings(max_examples=300)
@given(st.integers(1, 9), st.integers(1, 9), st.floats(0, 1), st.integers(0, 9999))
def test_csc_round_trip(r, c, s, seed):
    rng = np.random.default_rng(seed)
    m = rng.integers(-99, 99, (r, c)) * (rng.random((r, c)) > s)
    e = csc_encode(m)
    assert len(e.nnz_values) == len(e.row_ids) == e.col_counts.sum()
    assert np.array_equal(csc_decode(e, m.shape), m)


# -- hybrid ---------------------------------------------------------------


def test_hybrid_zero_tile_is_header_sized():
    blk = hybrid_compress(np.zeros((8, 8), dtype=np.int32))
    assert len(blk.payload) <= hybrid.HEADER_SIZE + 8
    assert np.array_equal(hybrid_decompress(blk), np.zeros((8, 8)))


def test_hybrid_dense_is_bdi_plus_header():
    t = np.random.default_rng(1).integers(-2**31, 2**31, (8, 16))
    raw = t.astype("<i4").tobytes()
    assert len(hybrid_compress(t, "dense").payload) == len(bdi_compress(raw).payload) + hybrid.HEADER_SIZE


def test_hybrid_beats_bdi_on_sparse_tile():
    t = convnet.random_sparse_tensor((64, 64), 0.7, np.random.default_rng(0), "q16")
    bdi_ratio = compression_ratio(bdi_compress(t.astype("<i4").tobytes()))
    hyb_ratio = compression_ratio(hybrid_compress(t))
    assert hyb_ratio >= 1.5 * bdi_ratio
    assert bdi_ratio > 1


def test_hybrid_segments_decode_independently():
    t = convnet.random_sparse_tensor((16, 16), 0.7, np.random.default_rng(2))
    blk = hybrid_compress(t)
    mode, (vals, rows, counts) = hybrid.split_segments(blk.payload)
    bad = hybrid.HEADER.pack(mode, len(vals), len(rows), len(counts)) + vals + rows + b"\xff" * len(counts)
    _, (v2, r2, _) = hybrid.split_segments(bad)
    e = csc_encode(t)
    assert hybrid.decode_values(v2)[: e.nnz_values.size].tolist() == e.nnz_values.tolist()
    assert hybrid.decode_values(r2)[: e.row_ids.size].tolist() == e.row_ids.tolist()


def test_hybrid_parallel_matches_sequential():
    t = convnet.random_sparse_tensor((32, 32), 0.6, np.random.default_rng(4))
    assert hybrid_compress(t, parallel=True).payload == hybrid_compress(t).payload


@settings(max_examples=200)
@given(st.integers(1, 12), st.integers(1, 12), st.floats(0, 0.95), st.integers(0, 9999),
       st.sampled_from(["sparse", "dense", "auto"]))
def test_hybrid_round_trip_and_worst_case(r, c, s, seed, mode):
    t = convnet.random_sparse_tensor((r, c), s, np.random.default_rng(seed), "q16")
    blk = hybrid_compress(t, mode)
    assert np.array_equal(hybrid_decompress(blk, t.shape), t)
    assert len(blk.payload) <= worst_case_size(t.shape, mode)


# -- blocks and ratios ----------------------------------------------------


def test_block_serialization_round_trip():
    blk = fpc_compress(word_bytes([1, 2, 3]))
    assert CompressedBlock.from_bytes(blk.to_bytes()) == blk


def test_ratio_nonincreasing_in_payload():
    ratios = [compression_ratio(CompressedBlock("bdi", bytes(n), 256)) for n in range(1, 300)]
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))


def test_ratio_empty_payload():
    with pytest.raises(ValueError):
        compression_ratio(CompressedBlock("bdi", b"", 32))


def test_characterization_csv():
    rows = characterize.characterize(n_tiles=3, shape=(16, 16))
    text = characterize.to_csv(rows)
    assert text.splitlines()[0] == "tensor_id,sparsity,codec,ratio,time"
    assert len(text.splitlines()) == 1 + 3 * len(characterize.CODECS)
    assert (characterize.hybrid_over_bdi(rows) > 1).all()
