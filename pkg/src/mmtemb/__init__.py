"""Pretrained-embedding post-processing and multimodal NMT models on numpy."""

__version__ = "0.1.0"
