"""Spectral band features and polar-disk reprojection of the beam grid.

Each steered waveform is reduced to mean power in F contiguous frequency
bands, the whole frame is min-max normalized, and the azimuth/elevation
rectangle is resampled onto a disk whose center is the zenith and whose rim
is the horizon.  On the disk, azimuthal wraparound is a rotation instead of
a seam, which suits convolutional models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamform import BeamGrid, SnapshotTensor
from .geometry import SteeringDirection
from .simulate import FRAME_SAMPLES, SAMPLE_RATE_HZ

BAND_LO_HZ = 200.0
BAND_HI_HZ = 2200.0
N_BANDS = 16


def band_edges_hz(n_bands=N_BANDS, lo_hz=BAND_LO_HZ, hi_hz=BAND_HI_HZ):
    """Band boundaries, uniform in Hz; band b covers [edge[b], edge[b+1])."""
    if n_bands < 1:
        raise ValueError("need at least one band")
    if not 0 <= lo_hz < hi_hz <= SAMPLE_RATE_HZ / 2:
        raise ValueError("band range must satisfy 0 <= lo < hi <= Nyquist")
    return np.linspace(lo_hz, hi_hz, n_bands + 1)


def band_bin_ranges(edges_hz, n_samples=FRAME_SAMPLES):
    """FFT-bin index range [start, stop) for each band.

    A bin belongs to the band whose half-open frequency interval contains
    its center frequency.
    """
    df = SAMPLE_RATE_HZ / n_samples
    freqs = np.arange(n_samples // 2 + 1) * df
    starts = np.searchsorted(freqs, edges_hz[:-1], side="left")
    stops = np.searchsorted(freqs, edges_hz[1:], side="left")
    if np.any(stops <= starts):
        raise ValueError("a band contains no FFT bins at this resolution")
    return np.stack([starts, stops], axis=1)


def band_mean_powers(waveforms, edges_hz):
    """Mean spectral power per band: (..., T) -> (..., n_bands)."""
    spec = np.fft.rfft(waveforms, axis=-1)
    power = spec.real ** 2 + spec.imag ** 2
    ranges = band_bin_ranges(edges_hz, waveforms.shape[-1])
    out = np.empty(waveforms.shape[:-1] + (len(edges_hz) - 1,))
    for b, (k0, k1) in enumerate(ranges):
        out[..., b] = power[..., k0:k1].mean(axis=-1)
    return out


def normalize_unit_range(raw):
    """Min-max normalize an entire frame to [0, 1]; flat frames map to 0."""
    lo = raw.min()
    hi = raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


@dataclass(frozen=True)
class SpectralMap:
    """Normalized band powers per direction: (n_az, n_el, n_bands) in [0,1]."""

    data: np.ndarray
    azimuths_deg: np.ndarray
    elevations_deg: np.ndarray
    band_edges_hz: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        az = np.asarray(self.azimuths_deg, dtype=np.float64)
        el = np.asarray(self.elevations_deg, dtype=np.float64)
        edges = np.asarray(self.band_edges_hz, dtype=np.float64)
        if data.ndim != 3 or data.shape != (az.size, el.size, edges.size - 1):
            raise ValueError("data must be (n_az, n_el, n_bands)")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite band powers")
        if data.size and (data.min() < 0 or data.max() > 1):
            raise ValueError("band powers must be normalized to [0, 1]")
        for arr in (data, az, el, edges):
            arr.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "azimuths_deg", az)
        object.__setattr__(self, "elevations_deg", el)
        object.__setattr__(self, "band_edges_hz", edges)

    @property
    def n_bands(self) -> int:
        return self.data.shape[2]

    @property
    def grid(self) -> BeamGrid:
        return BeamGrid(azimuths_deg=self.azimuths_deg,
                        elevations_deg=self.elevations_deg)


def spectral_features(snap: SnapshotTensor, n_bands=N_BANDS,
                      lo_hz=BAND_LO_HZ, hi_hz=BAND_HI_HZ) -> SpectralMap:
    """Reduce a snapshot to normalized per-direction band powers."""
    if snap.data.shape[-1] != FRAME_SAMPLES:
        raise ValueError(f"snapshot frames must hold {FRAME_SAMPLES} samples")
    edges = band_edges_hz(n_bands, lo_hz, hi_hz)
    raw = band_mean_powers(snap.data, edges)
    return SpectralMap(data=normalize_unit_range(raw),
                       azimuths_deg=snap.azimuths_deg,
                       elevations_deg=snap.elevations_deg,
                       band_edges_hz=edges)


@dataclass(frozen=True)
class PolarLayout:
    """Disk mapping for a square image of ``side`` pixels.

    Pixel (px, py) = (column, row); the disk center sits between pixels at
    ((side-1)/2, (side-1)/2).  Angle is azimuth measured counterclockwise
    from +x with +y upward (row index decreasing); radius r maps elevation
    as theta = 90 * (1 - r / radius_px), so the zenith is the center and
    the horizon the rim.
    """

    side: int

    def __post_init__(self):
        if self.side < 4 or self.side % 2:
            raise ValueError("side must be an even integer >= 4")

    @property
    def center(self) -> float:
        return (self.side - 1) / 2.0

    @property
    def radius_px(self) -> float:
        return self.side / 2.0

    @classmethod
    def for_grid(cls, grid: BeamGrid) -> "PolarLayout":
        return cls(side=2 * grid.n_el)


def direction_to_polar(layout: PolarLayout, direction: SteeringDirection):
    """Continuous pixel coordinates (px, py) of a direction."""
    r = (90.0 - direction.elevation_deg) / 90.0 * layout.radius_px
    az = np.deg2rad(direction.azimuth_deg)
    return (layout.center + r * np.cos(az),
            layout.center - r * np.sin(az))


def polar_to_direction(layout: PolarLayout, px, py) -> SteeringDirection:
    """Direction of a (possibly fractional) pixel; rejects out-of-disk."""
    dx = px - layout.center
    dy = layout.center - py
    r = float(np.hypot(dx, dy))
    if r > layout.radius_px + 1e-9:
        raise ValueError("pixel lies outside the polar disk")
    elevation = 90.0 * (1.0 - r / layout.radius_px)
    azimuth = float(np.degrees(np.arctan2(dy, dx)))
    return SteeringDirection(azimuth_deg=azimuth, elevation_deg=elevation)


def pixel_angles(layout: PolarLayout):
    """Per-pixel (azimuth_deg, elevation_deg, valid) arrays, (side, side).

    Angles are meaningful only where valid; invalid entries are zeroed.
    """
    cols = np.arange(layout.side, dtype=np.float64)
    dx = cols[None, :] - layout.center
    dy = layout.center - cols[:, None]
    r = np.hypot(dx, dy)
    valid = r <= layout.radius_px + 1e-9
    elevation = np.where(valid, 90.0 * (1.0 - r / layout.radius_px), 0.0)
    azimuth = np.where(valid, np.degrees(np.arctan2(dy, dx)), 0.0)
    return azimuth, elevation, valid


def valid_disk(layout: PolarLayout) -> np.ndarray:
    return pixel_angles(layout)[2]


@dataclass(frozen=True)
class PolarImage:
    """Disk-projected band powers: (side, side, n_bands), zero off-disk."""

    data: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        valid = np.asarray(self.validity, dtype=bool)
        if data.ndim != 3 or valid.shape != data.shape[:2]:
            raise ValueError("data (side, side, F) and validity (side, side)")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite pixels")
        if np.any(data[~valid] != 0):
            raise ValueError("pixels outside the disk must be zero")
        data.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "validity", valid)

    @property
    def side(self) -> int:
        return self.data.shape[0]


# bilinear resampling weights depend only on (layout, grid); built once
_project_cache: dict = {}


def _projection_operator(layout: PolarLayout, grid: BeamGrid):
    key = (layout.side, grid.cache_key())
    hit = _project_cache.get(key)
    if hit is not None:
        return hit
    if abs(grid.az_step_deg * grid.n_az - 360.0) > 1e-9:
        raise ValueError("polar projection needs full-circle azimuth coverage")
    az, el, valid = pixel_angles(layout)
    az_v = az[valid]
    el_v = el[valid]

    a = (az_v - grid.azimuths_deg[0]) / grid.az_step_deg
    i0 = np.floor(a).astype(np.intp)
    wa = a - i0
    i0 %= grid.n_az
    i1 = (i0 + 1) % grid.n_az

    e = (el_v - grid.elevations_deg[0]) / grid.el_step_deg
    e = np.clip(e, 0.0, grid.n_el - 1.0)
    j0 = np.floor(e).astype(np.intp)
    j0 = np.minimum(j0, grid.n_el - 2) if grid.n_el > 1 else j0
    j1 = np.minimum(j0 + 1, grid.n_el - 1)
    we = e - j0

    idx = np.stack([i0 * grid.n_el + j0, i0 * grid.n_el + j1,
                    i1 * grid.n_el + j0, i1 * grid.n_el + j1], axis=1)
    w = np.stack([(1 - wa) * (1 - we), (1 - wa) * we,
                  wa * (1 - we), wa * we], axis=1)
    op = (valid, idx, w)
    _project_cache[key] = op
    return op


def polar_project(sm: SpectralMap, layout: PolarLayout) -> PolarImage:
    """Resample the grid onto the disk, bilinear with azimuth wraparound."""
    grid = sm.grid
    valid, idx, w = _projection_operator(layout, grid)
    flat = sm.data.reshape(grid.n_directions, sm.n_bands)
    vals = np.einsum("pk,pkf->pf", w, flat[idx])
    out = np.zeros((layout.side, layout.side, sm.n_bands))
    out[valid] = vals
    return PolarImage(data=out, validity=valid)
