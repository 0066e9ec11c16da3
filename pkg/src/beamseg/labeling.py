"""Ground-truth handling: coordinate conversion and supervision masks.

Source positions become (azimuth, elevation, range); a frame's label is a
binary disk image marking every pixel whose direction lies within a fixed
angular tolerance of the true direction.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .features import PolarLayout, pixel_angles
from .geometry import SteeringDirection, unit_vector, unit_vectors

DELTA_DEG_DEFAULT = 10.0

# WGS-84 ellipsoid
_WGS84_A = 6378137.0
_WGS84_F = 1.0 / 298.257223563
_WGS84_E2 = _WGS84_F * (2.0 - _WGS84_F)


def cartesian_to_spherical(p):
    """(x, y, z) meters -> (azimuth_deg, elevation_deg, range_m).

    Elevation may be negative for points below the horizon.  At the zenith
    the azimuth is degenerate and reported as 0.
    """
    p = np.asarray(p, dtype=np.float64)
    r = float(np.linalg.norm(p))
    if r <= 0:
        raise ValueError("cannot convert the zero vector")
    azimuth = float(np.degrees(np.arctan2(p[1], p[0])))
    elevation = float(np.degrees(np.arcsin(np.clip(p[2] / r, -1.0, 1.0))))
    return azimuth, elevation, r


def gps_to_local(lat, lon, alt, ref_lat, ref_lon, ref_alt):
    """Geodetic coordinates -> local East-North-Up meters about a reference.

    Small-area tangent-plane approximation using the WGS-84 curvature radii
    at the reference latitude; adequate for scenes within about a kilometer.
    """
    for v in (lat, ref_lat):
        if not -90.0 <= v <= 90.0:
            raise ValueError("latitude outside [-90, 90]")
    phi = np.deg2rad(ref_lat)
    s2 = np.sin(phi) ** 2
    # prime-vertical and meridian curvature radii
    n_rad = _WGS84_A / np.sqrt(1.0 - _WGS84_E2 * s2)
    m_rad = _WGS84_A * (1.0 - _WGS84_E2) / (1.0 - _WGS84_E2 * s2) ** 1.5
    east = np.deg2rad(lon - ref_lon) * (n_rad + ref_alt) * np.cos(phi)
    north = np.deg2rad(lat - ref_lat) * (m_rad + ref_alt)
    up = alt - ref_alt
    return np.array([east, north, up])


def angular_distance(a: SteeringDirection, b: SteeringDirection) -> float:
    """Great-circle angle between two directions, degrees."""
    dot = float(np.dot(unit_vector(a), unit_vector(b)))
    return float(np.degrees(np.arccos(np.clip(dot, -1.0, 1.0))))


@dataclass(frozen=True)
class GroundTruthFrame:
    """Per-frame annotation: where the source is, if present at all."""

    frame_index: int
    present: bool
    direction: Optional[SteeringDirection] = None
    range_m: float = 0.0

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")
        if self.present:
            if self.direction is None:
                raise ValueError("present frames need a direction")
            if not self.range_m > 0:
                raise ValueError("present frames need a positive range")


@dataclass(frozen=True)
class BinaryMask:
    """Supervision label on the disk: uint8 {0,1} plus the validity disk."""

    grid: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.uint8)
        v = np.asarray(self.validity, dtype=bool)
        if g.ndim != 2 or g.shape != v.shape:
            raise ValueError("grid and validity must be equal 2-D shapes")
        if np.any(g > 1):
            raise ValueError("mask values must be 0 or 1")
        if np.any(g[~v] != 0):
            raise ValueError("mask must be zero outside the valid disk")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "validity", v)

    @property
    def area_px(self) -> int:
        return int(self.grid.sum())


def make_mask(gt: GroundTruthFrame, layout: PolarLayout,
              delta_deg=DELTA_DEG_DEFAULT) -> BinaryMask:
    """1 on pixels whose center direction is within delta of the truth."""
    az, el, valid = pixel_angles(layout)
    if not gt.present:
        return BinaryMask(grid=np.zeros(az.shape, dtype=np.uint8),
                          validity=valid)
    u = unit_vectors(az, el)
    dots = u @ unit_vector(gt.direction)
    sep = np.degrees(np.arccos(np.clip(dots, -1.0, 1.0)))
    grid = ((sep <= delta_deg) & valid).astype(np.uint8)
    return BinaryMask(grid=grid, validity=valid)


def truth_to_csv(frames) -> str:
    """Serialize ground truth, one row per frame.

    Absent frames leave the direction and range fields empty.
    """
    buf = io.StringIO()
    buf.write("frame,present,azimuth_deg,elevation_deg,range_m\n")
    for gt in frames:
        if gt.present:
            buf.write(f"{gt.frame_index},1,{gt.direction.azimuth_deg!r},"
                      f"{gt.direction.elevation_deg!r},{gt.range_m!r}\n")
        else:
            buf.write(f"{gt.frame_index},0,,,\n")
    return buf.getvalue()


def truth_from_csv(text: str):
    """Parse the truth CSV back into GroundTruthFrame objects."""
    frames = []
    lines = [ln for ln in text.strip().splitlines() if ln]
    for ln in lines[1:]:
        idx, present, az, el, rng = ln.split(",")
        if present == "1":
            frames.append(GroundTruthFrame(
                frame_index=int(idx), present=True,
                direction=SteeringDirection(float(az), float(el)),
                range_m=float(rng)))
        else:
            frames.append(GroundTruthFrame(frame_index=int(idx),
                                           present=False))
    return frames
