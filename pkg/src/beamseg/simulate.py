"""Synthetic multichannel scene rendering.

A moving point source is rendered under the far-field assumption: each 100 ms
frame gets the plane-wave inter-channel delays of the source direction at the
frame center, applied by windowed-sinc fractional-delay interpolation.  This
matches the beamformer's propagation model, so downstream errors are
attributable to the pipeline rather than to a model mismatch.  Doppler,
reverberation and wind are out of scope.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import MicArrayGeometry, steering_delays, SteeringDirection

SAMPLE_RATE_HZ = 48000
FRAME_SAMPLES = 4800  # 100 ms
NYQUIST_HZ = SAMPLE_RATE_HZ // 2


@dataclass(frozen=True)
class SourceTrajectory:
    """Time-stamped source positions (seconds, meters, array frame)."""

    times_s: np.ndarray
    positions: np.ndarray  # (n, 3)

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=np.float64)
        p = np.asarray(self.positions, dtype=np.float64)
        if t.ndim != 1 or p.shape != (t.size, 3):
            raise ValueError("need times (n,) and positions (n, 3)")
        if t.size < 1:
            raise ValueError("empty trajectory")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(np.linalg.norm(p, axis=1) <= 0):
            raise ValueError("source must never sit at the array origin")
        t = t.copy(); t.setflags(write=False)
        p = p.copy(); p.setflags(write=False)
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "positions", p)

    def position_at(self, t: float) -> np.ndarray:
        """Piecewise-linear position; clamps outside the sampled span."""
        return np.array([np.interp(t, self.times_s, self.positions[:, i])
                         for i in range(3)])

    def spans(self, t0: float, t1: float) -> bool:
        return self.times_s[0] <= t0 and self.times_s[-1] >= t1

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time_s,x,y,z\n")
        for t, p in zip(self.times_s, self.positions):
            buf.write(f"{float(t)!r},{float(p[0])!r},"
                      f"{float(p[1])!r},{float(p[2])!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SourceTrajectory":
        rows = [ln for ln in text.strip().splitlines()[1:] if ln]
        vals = np.array([[float(v) for v in ln.split(",")] for ln in rows])
        return cls(times_s=vals[:, 0], positions=vals[:, 1:4])


@dataclass(frozen=True)
class MultichannelRecording:
    """Synchronized channel waveforms, one per microphone, at 48 kHz.

    Amplitudes are nominally in [-1, 1]; float64 so algebraic identities on
    rendered signals hold to near machine precision.
    """

    channels: np.ndarray  # (n_ch, n_samples)
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self):
        ch = np.ascontiguousarray(self.channels, dtype=np.float64)
        if ch.ndim != 2:
            raise ValueError("channels must be 2-D (n_ch, n_samples)")
        if self.sample_rate_hz != SAMPLE_RATE_HZ:
            raise ValueError(f"pipeline runs at {SAMPLE_RATE_HZ} Hz only")
        if not np.all(np.isfinite(ch)):
            raise ValueError("non-finite samples")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def n_frames(self) -> int:
        return self.n_samples // FRAME_SAMPLES

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


def synth_source_waveform(duration_s, fundamental_hz, n_harmonics=10,
                          harmonic_decay=0.7, noise_floor=0.05,
                          seed=0) -> np.ndarray:
    """Harmonic-stack source signal with a broadband noise floor.

    Harmonic k (k = 0 .. n-1) has amplitude ``harmonic_decay**k`` and a
    random phase drawn from ``seed``; ``noise_floor`` sets the white-noise
    RMS relative to the harmonic stack's RMS.  Peak-normalized to 0.9.
    """
    if fundamental_hz < 50:
        raise ValueError("fundamental below 50 Hz")
    if n_harmonics < 1:
        raise ValueError("need at least one harmonic")
    if fundamental_hz * n_harmonics >= NYQUIST_HZ:
        raise ValueError("harmonic stack exceeds Nyquist")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * SAMPLE_RATE_HZ))
    t = np.arange(n) / SAMPLE_RATE_HZ
    sig = np.zeros(n)
    for k in range(n_harmonics):
        phase = rng.uniform(0, 2 * np.pi)
        sig += harmonic_decay ** k * np.sin(
            2 * np.pi * fundamental_hz * (k + 1) * t + phase)
    if noise_floor > 0:
        rms = np.sqrt(np.mean(sig ** 2))
        sig = sig + rng.standard_normal(n) * noise_floor * rms
    return sig * (0.9 / np.max(np.abs(sig)))


def context_pad(geom: MicArrayGeometry) -> int:
    """Samples of context needed around a frame to apply any steering delay."""
    return int(np.ceil(geom.aperture / geom.speed_of_sound
                       * SAMPLE_RATE_HZ)) + 8


def render_clean(geom: MicArrayGeometry, traj: SourceTrajectory, source,
                 amplitude_rolloff=False, reference_range_m=50.0,
                 start_time_s=0.0) -> np.ndarray:
    """Noiseless channels for a moving source; see render_scene.

    ``start_time_s`` places the first source sample on the trajectory's
    clock, so long recordings can be rendered in aligned chunks.
    """
    src = np.asarray(source, dtype=np.float64)
    n = src.size
    duration = n / SAMPLE_RATE_HZ
    if not traj.spans(start_time_s, start_time_s + duration):
        raise ValueError("trajectory does not cover the recording duration")

    pad = context_pad(geom)
    padded = np.zeros(n + 2 * pad)
    padded[pad:pad + n] = src

    n_frames = int(np.ceil(n / FRAME_SAMPLES))
    out = np.empty((geom.mic_count, n))
    for f in range(n_frames):
        lo = f * FRAME_SAMPLES
        hi = min(lo + FRAME_SAMPLES, n)
        center = start_time_s + (lo + hi) / 2 / SAMPLE_RATE_HZ
        pos = traj.position_at(center)
        rng_m = float(np.linalg.norm(pos))
        az = np.degrees(np.arctan2(pos[1], pos[0]))
        el = np.degrees(np.arcsin(np.clip(pos[2] / rng_m, -1.0, 1.0)))
        if el < 0:
            raise ValueError("source below the horizon is not representable")
        arrival = steering_delays(geom, SteeringDirection(az, el)).delays
        # advance each channel by its arrival-time offset
        base, taps = _kernels.delay_filter(-arrival * SAMPLE_RATE_HZ)
        starts = (base + pad + lo).astype(np.int32)
        block = _kernels.delay_channels(padded, starts,
                                        np.ascontiguousarray(taps), hi - lo)
        if amplitude_rolloff:
            block = block * (reference_range_m / rng_m)
        out[:, lo:hi] = block
    return out


def render_scene(geom: MicArrayGeometry, traj: SourceTrajectory, source,
                 snr_db=None, seed=0, amplitude_rolloff=False,
                 reference_range_m=50.0) -> MultichannelRecording:
    """Render a moving source plus per-channel white noise.

    ``snr_db`` is the per-channel broadband SNR of the rendered signal
    against the added noise; None (or +inf) disables noise.  Noise streams
    are seeded per channel, so results do not depend on evaluation order.
    """
    clean = render_clean(geom, traj, source=source,
                         amplitude_rolloff=amplitude_rolloff,
                         reference_range_m=reference_range_m)
    if snr_db is None or np.isinf(snr_db):
        return MultichannelRecording(channels=clean)
    out = np.empty_like(clean)
    for ch in range(clean.shape[0]):
        rms = np.sqrt(np.mean(clean[ch] ** 2))
        sigma = rms / 10 ** (snr_db / 20)
        rng = np.random.default_rng([seed, ch])
        out[ch] = clean[ch] + rng.standard_normal(clean.shape[1]) * sigma
    return MultichannelRecording(channels=out)


def render_noise_only(geom: MicArrayGeometry, duration_s, seed=0,
                      noise_rms=0.1) -> MultichannelRecording:
    """Per-channel independent white noise; no source present."""
    n = int(round(duration_s * SAMPLE_RATE_HZ))
    out = np.empty((geom.mic_count, n))
    for ch in range(geom.mic_count):
        rng = np.random.default_rng([seed, ch])
        out[ch] = rng.standard_normal(n) * noise_rms
    return MultichannelRecording(channels=out)


def mix(recordings) -> MultichannelRecording:
    """Sample-wise sum of equally shaped recordings (scene compositing)."""
    recs = list(recordings)
    total = recs[0].channels.copy()
    for r in recs[1:]:
        if r.channels.shape != total.shape:
            raise ValueError("recordings differ in shape")
        total += r.channels
    return MultichannelRecording(channels=total)
