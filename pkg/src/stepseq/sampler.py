"""Stepped sub-batch sampling.

A batch of ``L`` consecutive indices is cut into windows of ``m`` items whose
starts advance by ``n``. Adjacent windows share ``m - n`` items. A trailing
stretch of the batch that cannot fill a whole window is dropped and reported.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence


class SamplerConfigError(ValueError):
    """Raised when a (batch_size, step_size, step_stride) triple is unusable."""


class InconsistentOverlapError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    batch_size: int  # L
    step_size: int  # m
    step_stride: int  # n

    def validate(self) -> "SamplerConfig":
        validate_config(self)
        return self


@dataclass(frozen=True)
class WindowPlan:
    starts: tuple[int, ...]
    window_len: int
    dropped_tail_len: int

    @property
    def window_count(self) -> int:
        return len(self.starts)


def validate_config(cfg: SamplerConfig) -> None:
    for name in ("batch_size", "step_size", "step_stride"):
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, int):
            raise SamplerConfigError(f"{name} must be an integer, got {value!r}")
        if value < 1:
            raise SamplerConfigError(f"zero field: {name} must be >= 1, got {value}")
    if cfg.step_size > cfg.batch_size:
        raise SamplerConfigError(
            f"m > L: step_size {cfg.step_size} exceeds batch_size {cfg.batch_size}"
        )
    if cfg.step_stride > cfg.step_size:
        raise SamplerConfigError(
            f"n > m: step_stride {cfg.step_stride} exceeds step_size {cfg.step_size}"
        )


def window_starts(cfg: SamplerConfig) -> WindowPlan:
    validate_config(cfg)
    L, m, n = cfg.batch_size, cfg.step_size, cfg.step_stride
    starts = tuple(range(0, L - m + 1, n))
    return WindowPlan(starts=starts, window_len=m, dropped_tail_len=L - (starts[-1] + m))


def iteration_count(cfg: SamplerConfig) -> tuple[Fraction, int]:
    """Return the exact per-batch iteration number (L - m) / n and the window count.

    The window count is ``floor(d) + 1``: with L=5, m=3, n=1 the iteration
    number is 2 and three windows are produced.
    """
    validate_config(cfg)
    d = Fraction(cfg.batch_size - cfg.step_size, cfg.step_stride)
    return d, d.numerator // d.denominator + 1


def sub_batches(batch: Sequence[int], cfg: SamplerConfig) -> list[list[int]]:
    if len(batch) != cfg.batch_size:
        raise ValueError(
            f"length mismatch: batch has {len(batch)} items, batch_size is {cfg.batch_size}"
        )
    plan = window_starts(cfg)
    m = plan.window_len
    return [list(batch[s : s + m]) for s in plan.starts]


def restore(windows: Sequence[Sequence[int]], cfg: SamplerConfig) -> tuple[list[int], int]:
    """Undo the overlap: return the covered batch prefix and the dropped tail length.

    Each window after the first contributes only its last ``n`` items; the
    ``m - n`` items it shares with its predecessor are checked, not copied.
    """
    plan = window_starts(cfg)
    m, n = cfg.step_size, cfg.step_stride
    if len(windows) != plan.window_count:
        raise InconsistentOverlapError(
            f"expected {plan.window_count} windows for {cfg}, got {len(windows)}"
        )
    keep = m - n
    covered: list[int] = []
    prev = None
    for k, w in enumerate(windows):
        w = list(w)
        if len(w) != m:
            raise InconsistentOverlapError(f"window {k} has length {len(w)}, expected {m}")
        if prev is None:
            covered.extend(w)
        else:
            if prev[len(prev) - keep :] != w[:keep]:
                raise InconsistentOverlapError(
                    f"window {k} does not start with the last {keep} items of window {k - 1}"
                )
            covered.extend(w[keep:])
        prev = w
    return covered, plan.dropped_tail_len


def stepped_stream(
    dataset_len: int, cfg: SamplerConfig, drop_last_batch: bool = False
) -> Iterator[tuple[int, list[int]]]:
    """Yield ``(batch_index, window)`` over sequential indices ``0..dataset_len``.

    A short trailing batch is dropped when ``drop_last_batch`` is set. Otherwise
    it is windowed with its own length as ``L``, or skipped (with a warning) if
    it cannot hold even one window.
    """
    validate_config(cfg)
    L = cfg.batch_size
    for b, lo in enumerate(range(0, dataset_len, L)):
        batch = list(range(lo, min(lo + L, dataset_len)))
        if len(batch) < L:
            if drop_last_batch:
                return
            if len(batch) < cfg.step_size:
                warnings.warn(
                    f"skipping trailing batch of {len(batch)} items: "
                    f"shorter than step_size {cfg.step_size}",
                    stacklevel=2,
                )
                return
            short = SamplerConfig(len(batch), cfg.step_size, cfg.step_stride)
            windows = sub_batches(batch, short)
        else:
            windows = sub_batches(batch, cfg)
        for w in windows:
            yield b, w


def batch_stream(
    dataset_len: int, batch_size: int, drop_last_batch: bool = False
) -> Iterator[tuple[int, list[int]]]:
    """Plain sequential batching, the reference the stepped stream reduces to at m = L."""
    if batch_size < 1:
        raise SamplerConfigError(f"zero field: batch_size must be >= 1, got {batch_size}")
    for b, lo in enumerate(range(0, dataset_len, batch_size)):
        batch = list(range(lo, min(lo + batch_size, dataset_len)))
        if len(batch) < batch_size and drop_last_batch:
            return
        yield b, batch


def plan_report(cfg: SamplerConfig, dataset_len: int | None = None) -> dict:
    plan = window_starts(cfg)
    d, count = iteration_count(cfg)
    report = {
        "batch_size": cfg.batch_size,
        "step_size": cfg.step_size,
        "step_stride": cfg.step_stride,
        "starts": list(plan.starts),
        "window_count": count,
        "d_exact": str(d),
        "dropped_tail_len": plan.dropped_tail_len,
    }
    if dataset_len is not None:
        report["dataset_len"] = dataset_len
        with warnings.catch_warnings():
            # the report counts what survives; a skipped tail is not news here
            warnings.simplefilter("ignore")
            report["total_sub_batches"] = sum(1 for _ in stepped_stream(dataset_len, cfg))
    return report
