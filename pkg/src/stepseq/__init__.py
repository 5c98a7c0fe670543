"""Stepped sub-batch sampling for recurrent sequence training."""

from .sampler import SamplerConfig, WindowPlan, iteration_count, restore, stepped_stream, sub_batches, window_starts
from .seqnet import ModelSpec

__all__ = [
    "ModelSpec",
    "SamplerConfig",
    "WindowPlan",
    "iteration_count",
    "restore",
    "stepped_stream",
    "sub_batches",
    "window_starts",
]
