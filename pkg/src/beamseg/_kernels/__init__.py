"""Kernel backend selection: compiled extension if available, NumPy otherwise.

``BEAMSEG_FORCE_FALLBACK=1`` forces the NumPy path (used by the benchmark and
by equivalence tests).  ``BEAMSEG_THREADS`` caps the compiled sweep's OpenMP
threads; default is one thread per CPU.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback
from .taps import TAP_COUNT, delay_filter, hann_window

try:
    from . import _core
    HAVE_COMPILED = True
except ImportError:
    _core = None
    HAVE_COMPILED = False

USING_COMPILED = HAVE_COMPILED and os.environ.get("BEAMSEG_FORCE_FALLBACK") != "1"
_impl = _core if USING_COMPILED else _fallback


def backend_name():
    return "compiled" if USING_COMPILED else "numpy"


def _thread_count():
    env = os.environ.get("BEAMSEG_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def delay_sum_sweep(padded, starts, taps, n_samples):
    """Steered delay-and-sum: returns (n_dir, n_samples) float64 array."""
    out = np.empty((starts.shape[0], n_samples))
    if USING_COMPILED:
        _impl.delay_sum_sweep(padded, starts, taps, out, n_samples,
                              _thread_count())
    else:
        _impl.delay_sum_sweep(padded, starts, taps, out, n_samples)
    return out


def delay_channels(padded, starts, taps, n_samples):
    """Per-channel fractional delay of one source: (n_ch, n_samples) float64."""
    out = np.empty((starts.shape[0], n_samples))
    _impl.delay_channels(padded, starts, taps, out, n_samples)
    return out


__all__ = [
    "TAP_COUNT", "delay_filter", "hann_window", "delay_sum_sweep",
    "delay_channels", "backend_name", "HAVE_COMPILED", "USING_COMPILED",
]
