"""Block codecs and the two-level tile compressor."""
from .bdi import bdi_compress, bdi_decompress
from .block import CompressedBlock, compression_ratio
from .csc import CscEncoding, csc_decode, csc_encode
from .fpc import fpc_compress, fpc_decompress
from .huffman import huffman_compress, huffman_decompress
from .hybrid import hybrid_compress, hybrid_decompress, worst_case_size
from .rle import rle_compress, rle_decompress

__all__ = [
    "CompressedBlock",
    "CscEncoding",
    "bdi_compress",
    "bdi_decompress",
    "compression_ratio",
    "csc_decode",
    "csc_encode",
    "fpc_compress",
    "fpc_decompress",
    "huffman_compress",
    "huffman_decompress",
    "hybrid_compress",
    "hybrid_decompress",
    "rle_compress",
    "rle_decompress",
    "worst_case_size",
]
