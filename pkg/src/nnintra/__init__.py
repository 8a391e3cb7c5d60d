"""Intra codec with per-mode neural predictors replacing the 35 HEVC intra modes."""

__version__ = "0.1.0"
