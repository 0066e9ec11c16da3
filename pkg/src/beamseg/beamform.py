"""Delay-and-sum beamforming over an azimuth/elevation grid.

For every grid direction the channel signals are delayed by the direction's
steering delays and averaged, yielding a time-domain waveform per direction
for one 100 ms frame.  Signals arriving from the steered direction add
coherently; everything else is attenuated by roughly 1/N in power.

Samples needed from before and after the frame (steering delays reach up to
aperture/c either way) are taken from the recording where available and
zero-padded at the edges, so a frame's beamformed output is independent of
its neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import MicArrayGeometry, SteeringDirection, steering_delay_matrix
from .simulate import FRAME_SAMPLES, MultichannelRecording, context_pad


@dataclass(frozen=True)
class BeamGrid:
    """Uniform look-direction grid: azimuth x elevation, degrees."""

    azimuths_deg: np.ndarray
    elevations_deg: np.ndarray

    def __post_init__(self):
        az = np.asarray(self.azimuths_deg, dtype=np.float64)
        el = np.asarray(self.elevations_deg, dtype=np.float64)
        for name, v in (("azimuths", az), ("elevations", el)):
            if v.ndim != 1 or v.size == 0:
                raise ValueError(f"{name} must be a nonempty 1-D array")
            if v.size > 1:
                steps = np.diff(v)
                if steps[0] <= 0 or not np.allclose(steps, steps[0]):
                    raise ValueError(f"{name} must increase uniformly")
        if az.min() < -180.0 or az.max() >= 180.0:
            raise ValueError("azimuths must lie in [-180, 180)")
        if el.min() < 0.0 or el.max() > 90.0:
            raise ValueError("elevations must lie in [0, 90]")
        az = az.copy(); az.setflags(write=False)
        el = el.copy(); el.setflags(write=False)
        object.__setattr__(self, "azimuths_deg", az)
        object.__setattr__(self, "elevations_deg", el)

    @classmethod
    def from_steps(cls, az_step_deg=4.0, el_step_deg=4.0) -> "BeamGrid":
        if az_step_deg <= 0 or el_step_deg <= 0:
            raise ValueError("grid steps must be positive")
        if 360.0 % az_step_deg != 0:
            raise ValueError("azimuth step must divide 360")
        return cls(azimuths_deg=np.arange(-180.0, 180.0, az_step_deg),
                   elevations_deg=np.arange(0.0, 90.0, el_step_deg))

    @classmethod
    def default(cls) -> "BeamGrid":
        """4 degree spacing on both axes: 90 azimuths x 23 elevations."""
        return cls.from_steps(4.0, 4.0)

    @property
    def n_az(self) -> int:
        return self.azimuths_deg.size

    @property
    def n_el(self) -> int:
        return self.elevations_deg.size

    @property
    def n_directions(self) -> int:
        return self.n_az * self.n_el

    @property
    def az_step_deg(self) -> float:
        a = self.azimuths_deg
        return float(a[1] - a[0]) if a.size > 1 else 360.0

    @property
    def el_step_deg(self) -> float:
        e = self.elevations_deg
        return float(e[1] - e[0]) if e.size > 1 else 90.0

    def direction_grids(self):
        """Az and el broadcast to (n_az, n_el) arrays."""
        return np.meshgrid(self.azimuths_deg, self.elevations_deg,
                           indexing="ij")

    def cache_key(self):
        return (self.azimuths_deg.tobytes(), self.elevations_deg.tobytes())


@dataclass(frozen=True)
class SnapshotTensor:
    """Beamformed waveforms for one frame: (n_az, n_el, 4800) at 48 kHz."""

    data: np.ndarray
    frame_index: int
    azimuths_deg: np.ndarray
    elevations_deg: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        az = np.asarray(self.azimuths_deg, dtype=np.float64)
        el = np.asarray(self.elevations_deg, dtype=np.float64)
        if data.ndim != 3 or data.shape[:2] != (az.size, el.size):
            raise ValueError("data must have shape (n_az, n_el, n_samples)")
        if data.shape[2] != FRAME_SAMPLES:
            raise ValueError(f"frame must hold {FRAME_SAMPLES} samples")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite beamformed samples")
        for arr in (data, az, el):
            arr.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "azimuths_deg", az)
        object.__setattr__(self, "elevations_deg", el)

    @property
    def grid(self) -> BeamGrid:
        return BeamGrid(azimuths_deg=self.azimuths_deg,
                        elevations_deg=self.elevations_deg)


@dataclass(frozen=True)
class EnergyMap:
    """Per-direction RMS of a snapshot: (n_az, n_el), nonnegative."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("energy map must be 2-D")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValueError("energies must be finite and nonnegative")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)


# steering-delay FIR tables are pure functions of (geometry, grid) and
# dominate setup cost, so they are built once and reused
_tap_cache: dict = {}


def steering_taps(geom: MicArrayGeometry, grid: BeamGrid):
    """Per-(direction, mic) fractional-delay FIR table for the grid sweep.

    Returns (base, taps): base is (n_dir, n_mic) int32 sample offsets
    relative to the output sample, taps is (n_dir, n_mic, 8) float64.
    Directions are ordered azimuth-major: d = i_az * n_el + i_el.
    """
    key = (geom.mic_positions.tobytes(), geom.speed_of_sound,
           grid.cache_key())
    hit = _tap_cache.get(key)
    if hit is not None:
        return hit
    az, el = grid.direction_grids()
    delays = steering_delay_matrix(geom, az.ravel(), el.ravel())
    base, taps = _kernels.delay_filter(delays * 48000.0)
    taps = np.ascontiguousarray(taps)
    base.setflags(write=False)
    taps.setflags(write=False)
    _tap_cache[key] = (base, taps)
    return base, taps


def frame_with_context(rec: MultichannelRecording, frame_index: int,
                       pad: int) -> np.ndarray:
    """Frame samples plus ``pad`` context samples each side, zero-padded."""
    lo = frame_index * FRAME_SAMPLES
    hi = lo + FRAME_SAMPLES
    if frame_index < 0 or hi > rec.n_samples:
        raise ValueError(f"frame {frame_index} outside recording")
    out = np.zeros((rec.n_channels, FRAME_SAMPLES + 2 * pad))
    src_lo = max(0, lo - pad)
    src_hi = min(rec.n_samples, hi + pad)
    out[:, src_lo - (lo - pad):src_hi - (lo - pad)] = \
        rec.channels[:, src_lo:src_hi]
    return out


def das_snapshot(rec: MultichannelRecording, frame_index: int,
                 grid: BeamGrid, geom: MicArrayGeometry) -> SnapshotTensor:
    """Beamform one frame over every grid direction."""
    if rec.n_channels != geom.mic_count:
        raise ValueError(f"recording has {rec.n_channels} channels but the "
                         f"geometry has {geom.mic_count} microphones")
    pad = context_pad(geom)
    padded = frame_with_context(rec, frame_index, pad)
    base, taps = steering_taps(geom, grid)
    starts = base + np.int32(pad)
    out = _kernels.delay_sum_sweep(padded, starts, taps, FRAME_SAMPLES)
    data = out.reshape(grid.n_az, grid.n_el, FRAME_SAMPLES)
    return SnapshotTensor(data=data, frame_index=frame_index,
                          azimuths_deg=grid.azimuths_deg,
                          elevations_deg=grid.elevations_deg)


def energy_map(snap: SnapshotTensor) -> EnergyMap:
    """Per-direction RMS over the frame."""
    return EnergyMap(data=np.sqrt(np.mean(snap.data ** 2, axis=2)))


def bf_argmax(emap: EnergyMap, grid: BeamGrid):
    """Direction of the strongest cell, or None for an all-zero map.

    Ties go to the lowest elevation, then the lowest azimuth index, so the
    result is deterministic.
    """
    data = emap.data
    if data.shape != (grid.n_az, grid.n_el):
        raise ValueError("energy map does not match grid")
    if not np.any(data > 0):
        return None
    peak = data.max()
    cand = np.argwhere(data == peak)
    order = np.lexsort((cand[:, 0], cand[:, 1]))  # elevation first, then az
    ia, ie = cand[order[0]]
    return SteeringDirection(azimuth_deg=grid.azimuths_deg[ia],
                            elevation_deg=grid.elevations_deg[ie])
