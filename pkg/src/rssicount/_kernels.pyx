# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sliding-window kernels. Mirrors :mod:`rssicount._fallback`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport erf, sqrt, fabs

cnp.import_array()

# full recompute cadence; bounds drift of the running update
cdef Py_ssize_t RESYNC = 4096
cdef double SQRT2 = 1.4142135623730951
# keeps n * sum(x^2) inside int64 for any practical window
cdef double INT_BOUND = 1e6


cdef bint _integral(const double[::1] values):
    cdef Py_ssize_t i
    cdef double v
    for i in range(values.shape[0]):
        v = values[i]
        if v != <double>(<long long>v) or fabs(v) > INT_BOUND:
            return False
    return True


cdef void _window_stats_int(const double[::1] values, Py_ssize_t n, double[::1] om, double[::1] os):
    # exact sliding sums for integer-valued input (RSSI differences)
    cdef Py_ssize_t i, j, k = values.shape[0] - n + 1
    cdef long long s1 = 0, s2 = 0, x, old, num
    for j in range(n):
        x = <long long>values[j]
        s1 += x
        s2 += x * x
    for i in range(k):
        if i > 0:
            old = <long long>values[i - 1]
            x = <long long>values[i + n - 1]
            s1 += x - old
            s2 += x * x - old * old
        num = n * s2 - s1 * s1
        om[i] = <double>s1 / n
        os[i] = sqrt(<double>num / (n * (n - 1))) if num > 0 else 0.0


cdef void _window_stats_float(const double[::1] values, Py_ssize_t n, double[::1] om, double[::1] os):
    cdef Py_ssize_t i, j, k = values.shape[0] - n + 1
    cdef double mean = 0.0, m2 = 0.0, delta, old, new, new_mean
    for i in range(k):
        if i % RESYNC == 0:
            mean = 0.0
            m2 = 0.0
            for j in range(n):
                delta = values[i + j] - mean
                mean += delta / (j + 1)
                m2 += delta * (values[i + j] - mean)
        else:
            old = values[i - 1]
            new = values[i + n - 1]
            new_mean = mean + (new - old) / n
            m2 += (new - old) * (new - new_mean + old - mean)
            mean = new_mean
        om[i] = mean
        os[i] = sqrt(m2 / (n - 1)) if m2 > 0.0 else 0.0


def window_stats(const double[::1] values, Py_ssize_t n):
    """Trailing-window mean and sample std, one entry per full window."""
    cdef Py_ssize_t m = values.shape[0]
    if n < 2:
        raise ValueError("window size must be >= 2")
    if m < n:
        raise ValueError("insufficient data: series shorter than window")
    out_mean = np.empty(m - n + 1, dtype=np.float64)
    out_std = np.empty(m - n + 1, dtype=np.float64)
    if n <= 2048 and _integral(values):
        _window_stats_int(values, n, out_mean, out_std)
    else:
        _window_stats_float(values, n, out_mean, out_std)
    return out_mean, out_std


cdef inline double _phi(double z) nogil:
    return 0.5 * (1.0 + erf(z / SQRT2))


def prob_in_band(const double[::1] mean, const double[::1] std, double lo=-1.0, double hi=1.0):
    cdef Py_ssize_t i, m = mean.shape[0]
    if std.shape[0] != m:
        raise ValueError("mean and std lengths differ")
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef double mu, s
    for i in range(m):
        mu = mean[i]
        s = std[i]
        if s < 0.0:
            raise ValueError("standard deviation must be non-negative")
        if s == 0.0:
            o[i] = 1.0 if lo <= mu <= hi else 0.0
        else:
            o[i] = _phi((hi - mu) / s) - _phi((lo - mu) / s)
    return out


def segment(const unsigned char[::1] decisions, Py_ssize_t min_duration, Py_ssize_t merge_gap):
    cdef Py_ssize_t m = decisions.shape[0]
    starts = np.empty(m, dtype=np.int64)
    ends = np.empty(m, dtype=np.int64)
    cdef long long[::1] s = starts
    cdef long long[::1] e = ends
    cdef Py_ssize_t i, nrun = 0, out = 0
    cdef bint inside = False
    for i in range(m):
        if decisions[i]:
            if not inside:
                if nrun > 0 and i - e[nrun - 1] - 1 <= merge_gap:
                    nrun -= 1
                else:
                    s[nrun] = i
                inside = True
            e[nrun] = i
        elif inside:
            inside = False
            nrun += 1
    if inside:
        nrun += 1
    for i in range(nrun):
        if e[i] - s[i] + 1 >= min_duration:
            s[out] = s[i]
            e[out] = e[i]
            out += 1
    return starts[:out].copy(), ends[:out].copy()
