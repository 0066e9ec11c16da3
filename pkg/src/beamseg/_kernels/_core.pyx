# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loops: fractional-delay FIR application, single-channel and
steered-sweep variants.  Semantics match ``_fallback`` exactly (up to float64
rounding); the pure-NumPy module is the reference implementation."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()


def delay_sum_sweep(const double[:, ::1] padded, const int[:, ::1] starts,
                    const double[:, :, ::1] taps, double[:, ::1] out,
                    int n_samples, int n_threads):
    """Steered delay-and-sum over many directions.

    padded  : (n_ch, L) zero-padded context window
    starts  : (n_dir, n_ch) first-tap index into ``padded`` per direction/channel
    taps    : (n_dir, n_ch, 8) FIR coefficients
    out     : (n_dir, n_samples) channel-averaged output, overwritten
    """
    cdef Py_ssize_t n_dir = starts.shape[0]
    cdef Py_ssize_t n_ch = starts.shape[1]
    cdef Py_ssize_t d, n, t, o
    cdef double h0, h1, h2, h3, h4, h5, h6, h7, inv_n
    inv_n = 1.0 / n_ch
    for d in prange(n_dir, nogil=True, schedule='static',
                    num_threads=n_threads):
        for t in range(n_samples):
            out[d, t] = 0.0
        for n in range(n_ch):
            o = starts[d, n]
            h0 = taps[d, n, 0]; h1 = taps[d, n, 1]
            h2 = taps[d, n, 2]; h3 = taps[d, n, 3]
            h4 = taps[d, n, 4]; h5 = taps[d, n, 5]
            h6 = taps[d, n, 6]; h7 = taps[d, n, 7]
            for t in range(n_samples):
                out[d, t] += (h0 * padded[n, o + t]
                              + h1 * padded[n, o + t + 1]
                              + h2 * padded[n, o + t + 2]
                              + h3 * padded[n, o + t + 3]
                              + h4 * padded[n, o + t + 4]
                              + h5 * padded[n, o + t + 5]
                              + h6 * padded[n, o + t + 6]
                              + h7 * padded[n, o + t + 7])
        for t in range(n_samples):
            out[d, t] *= inv_n


def delay_channels(const double[::1] padded, const int[::1] starts,
                   const double[:, ::1] taps, double[:, ::1] out, int n_samples):
    """Apply a per-channel fractional delay to one padded source signal.

    padded : (L,) zero-padded source
    starts : (n_ch,) first-tap index per channel
    taps   : (n_ch, 8) FIR coefficients
    out    : (n_ch, n_samples) delayed copies, overwritten
    """
    cdef Py_ssize_t n_ch = starts.shape[0]
    cdef Py_ssize_t n, t, o
    cdef double h0, h1, h2, h3, h4, h5, h6, h7
    for n in range(n_ch):
        o = starts[n]
        h0 = taps[n, 0]; h1 = taps[n, 1]; h2 = taps[n, 2]; h3 = taps[n, 3]
        h4 = taps[n, 4]; h5 = taps[n, 5]; h6 = taps[n, 6]; h7 = taps[n, 7]
        for t in range(n_samples):
            out[n, t] = (h0 * padded[o + t]
                         + h1 * padded[o + t + 1]
                         + h2 * padded[o + t + 2]
                         + h3 * padded[o + t + 3]
                         + h4 * padded[o + t + 4]
                         + h5 * padded[o + t + 5]
                         + h6 * padded[o + t + 6]
                         + h7 * padded[o + t + 7])
