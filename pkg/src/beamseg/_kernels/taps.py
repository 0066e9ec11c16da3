"""Windowed-sinc fractional-delay filter design shared by all kernel backends.

A delay of ``d`` samples (``d`` may be negative = advance) is realized as an
8-tap FIR read from index ``i + base`` of the source signal:

    y[i] = sum_k taps[k] * x[i + base + k]

with ``base = floor(-d) - 3``.  Taps are a Hann-windowed sinc evaluated at the
offsets ``frac + 3 - k`` where ``frac = -d - floor(-d)``.  For integer delays
this reduces exactly to a single unit tap.
"""

from __future__ import annotations

import numpy as np

TAP_COUNT = 8
HALF_SUPPORT = TAP_COUNT // 2  # taps reach 4 samples either side


def delay_filter(delay_samples):
    """FIR taps and base offsets realizing x(i - delay) for each delay.

    Parameters
    ----------
    delay_samples : array_like
        Delays in samples, any shape.  Positive values delay the signal.

    Returns
    -------
    base : int32 ndarray, same shape
        Index offset of the first tap relative to the output index.
    taps : float64 ndarray, shape ``delay_samples.shape + (8,)``
        Filter coefficients.
    """
    d = np.asarray(delay_samples, dtype=np.float64)
    neg_floor = np.floor(-d)
    base = (neg_floor - 3).astype(np.int32)
    frac = -d - neg_floor  # in [0, 1)
    # offsets of each tap from the ideal (continuous) sample position
    k = np.arange(TAP_COUNT, dtype=np.float64)
    offs = frac[..., None] + 3.0 - k
    taps = np.sinc(offs) * hann_window(offs)
    return base, taps


def hann_window(x):
    """Hann window of half-width 4 samples, zero outside [-4, 4]."""
    x = np.asarray(x, dtype=np.float64)
    w = 0.5 * (1.0 + np.cos(np.pi * x / HALF_SUPPORT))
    return np.where(np.abs(x) < HALF_SUPPORT, w, 0.0)
