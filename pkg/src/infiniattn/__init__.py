"""Segment-recurrent attention with a bounded compressive memory.

A small library and CLI: local causal attention fused per head with a
fixed-size associative memory read by linear attention, a toy decoder-only
language model built on it, segment-unrolled training, and retrieval /
perplexity / footprint evaluation tools.
"""

from .tensor import Tensor, Tape, ShapeError, checkpoint, finite_diff_check

__version__ = "0.1.0"

__all__ = ["Tensor", "Tape", "ShapeError", "checkpoint", "finite_diff_check", "__version__"]
