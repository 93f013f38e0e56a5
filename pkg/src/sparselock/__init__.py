"""Leakage analysis of tiled sparse-accelerator memory traffic with a binning countermeasure."""
__version__ = "0.1.0"
