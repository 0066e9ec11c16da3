"""Pure-NumPy reference implementations of the compiled kernels.

Same call signatures as ``_core``; used when the extension is unavailable or
when ``BEAMSEG_FORCE_FALLBACK=1``.  Vectorized, but roughly an order of
magnitude slower than the compiled sweep on long grids.
"""

from __future__ import annotations

import numpy as np

from .taps import TAP_COUNT


def delay_sum_sweep(padded, starts, taps, out, n_samples, n_threads=1):
    n_dir, n_ch = starts.shape
    out[:] = 0.0
    idx = np.arange(n_samples + TAP_COUNT - 1)
    for n in range(n_ch):
        # gather each direction's context slice once, then 8 shifted FMAs
        gathered = padded[n][starts[:, n][:, None] + idx[None, :]]
        for k in range(TAP_COUNT):
            out += taps[:, n, k, None] * gathered[:, k:k + n_samples]
    out /= n_ch
    return out


def delay_channels(padded, starts, taps, out, n_samples):
    for n in range(starts.shape[0]):
        o = starts[n]
        acc = np.zeros(n_samples)
        for k in range(TAP_COUNT):
            acc += taps[n, k] * padded[o + k:o + k + n_samples]
        out[n] = acc
    return out
