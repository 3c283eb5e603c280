"""Pure-Python kernels, used when the compiled extension is unavailable."""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_SQRT2 = math.sqrt(2.0)


def window_stats(values, n):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if n < 2:
        raise ValueError("window size must be >= 2")
    if values.shape[0] < n:
        raise ValueError("insufficient data: series shorter than window")
    windows = sliding_window_view(values, n)
    mean = windows.mean(axis=1)
    std = np.sqrt(((windows - mean[:, None]) ** 2).sum(axis=1) / (n - 1))
    return mean, std


def _phi(z):
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


def prob_in_band(mean, std, lo=-1.0, hi=1.0):
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if mean.shape != std.shape:
        raise ValueError("mean and std lengths differ")
    out = np.empty(mean.shape[0], dtype=np.float64)
    for i, (mu, s) in enumerate(zip(mean.tolist(), std.tolist())):
        if s < 0.0:
            raise ValueError("standard deviation must be non-negative")
        if s == 0.0:
            out[i] = 1.0 if lo <= mu <= hi else 0.0
        else:
            out[i] = _phi((hi - mu) / s) - _phi((lo - mu) / s)
    return out


def segment(decisions, min_duration, merge_gap):
    runs = []
    start = None
    for i, d in enumerate(np.asarray(decisions, dtype=bool).tolist()):
        if d and start is None:
            start = i
        elif not d and start is not None:
            runs.append([start, i - 1])
            start = None
    if start is not None:
        runs.append([start, len(decisions) - 1])

    merged = []
    for run in runs:
        if merged and run[0] - merged[-1][1] - 1 <= merge_gap:
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    kept = [r for r in merged if r[1] - r[0] + 1 >= min_duration]
    starts = np.array([r[0] for r in kept], dtype=np.int64)
    ends = np.array([r[1] for r in kept], dtype=np.int64)
    return starts, ends
