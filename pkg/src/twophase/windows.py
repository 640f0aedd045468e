"""Per-window returns and fluctuations at a given scale.

For a window of `scale` consecutive increments, the return Z is their sum
(equivalently y(t+scale) - y(t)) and the fluctuation r is the mean absolute
deviation of the one-step increments around the window mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError
from .series import IncrementSeries


@dataclass(frozen=True)
class WindowStats:
    """Window statistics at one scale.

    Attributes:
        scale: window length in series steps
        stride: spacing between window starts
        starts: start index of each window into the increment series
        z: window return, sum of signed increments
        r: window fluctuation, mean absolute deviation of increments
        valid: False where the window contains a flagged increment
    """

    scale: int
    stride: int
    starts: np.ndarray
    z: np.ndarray
    r: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.r[self.valid] < 0):
            raise InputError("window fluctuation r must be non-negative")

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def z_valid(self) -> np.ndarray:
        return self.z[self.valid]

    @property
    def r_valid(self) -> np.ndarray:
        return self.r[self.valid]

    def __len__(self) -> int:
        return len(self.starts)


def window_stats(incs: IncrementSeries, scale: int, stride: int | None = None) -> WindowStats:
    """Compute Z and r for windows of `scale` increments every `stride` steps.

    Defaults to disjoint windows (stride = scale).  Windows containing a
    flagged increment are marked invalid rather than shortened.
    """
    if scale < 2:
        raise InputError(f"scale must be >= 2, got {scale}")
    stride = scale if stride is None else stride
    if stride < 1:
        raise InputError(f"stride must be >= 1, got {stride}")
    n = len(incs)
    if n < scale:
        raise InputError(f"scale {scale} exceeds increment series length {n}")

    signed = incs.signed
    if stride == scale:
        m = n // scale
        view = signed[: m * scale].reshape(m, scale)
        starts = np.arange(m, dtype=np.int64) * scale
        flag_view = incs.flags[: m * scale].reshape(m, scale)
    else:
        view = sliding_window_view(signed, scale)[::stride]
        starts = np.arange(0, n - scale + 1, stride, dtype=np.int64)
        flag_view = sliding_window_view(incs.flags, scale)[::stride]
    z = view.sum(axis=1)
    mu = view.mean(axis=1)
    r = np.abs(view - mu[:, None]).mean(axis=1)
    valid = ~flag_view.any(axis=1)
    return WindowStats(scale=scale, stride=stride, starts=starts, z=z, r=r, valid=valid)


def scale_grid(lo: int, hi: int, count: int) -> list[int]:
    """Deduplicated integer scales spanning [lo, hi], linearly spaced."""
    if lo < 2:
        raise InputError(f"minimum scale must be >= 2, got {lo}")
    if hi < lo:
        raise InputError(f"scale range is empty: [{lo}, {hi}]")
    if count < 1:
        raise InputError(f"scale count must be >= 1, got {count}")
    if count == 1:
        return [lo]
    pts = np.linspace(lo, hi, count)
    scales = sorted(set(int(round(p)) for p in pts))
    return scales
