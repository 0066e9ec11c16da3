"""Microphone-array geometry, steering directions, and steering delays.

Conventions: Cartesian coordinates in meters with the array origin at (0,0,0),
x east, y north, z up.  Azimuth is measured counterclockwise from +x in
[-180, 180) degrees; elevation from the horizon in [0, 90] degrees.  Angles
are degrees everywhere at API boundaries and converted to radians only here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_SOUND_DEFAULT = 343.0


def _to_radians(deg):
    return np.deg2rad(deg)


@dataclass(frozen=True)
class SteeringDirection:
    """A look direction: azimuth in [-180, 180), elevation in [0, 90] degrees.

    Azimuth is wrapped modulo 360 into range on construction; elevation out of
    range raises.
    """

    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        az = float(self.azimuth_deg)
        el = float(self.elevation_deg)
        if not (np.isfinite(az) and np.isfinite(el)):
            raise ValueError("direction angles must be finite")
        if not 0.0 <= el <= 90.0:
            raise ValueError(f"elevation {el} outside [0, 90]")
        az = (az + 180.0) % 360.0 - 180.0
        object.__setattr__(self, "azimuth_deg", az)
        object.__setattr__(self, "elevation_deg", el)


def unit_vector(direction: SteeringDirection) -> np.ndarray:
    """Unit vector pointing from the array toward the given direction."""
    az = _to_radians(direction.azimuth_deg)
    el = _to_radians(direction.elevation_deg)
    return np.array([
        np.cos(el) * np.cos(az),
        np.cos(el) * np.sin(az),
        np.sin(el),
    ])


def unit_vectors(azimuth_deg, elevation_deg) -> np.ndarray:
    """Vectorized unit vectors; inputs broadcast, output shape (..., 3)."""
    az = _to_radians(np.asarray(azimuth_deg, dtype=np.float64))
    el = _to_radians(np.asarray(elevation_deg, dtype=np.float64))
    az, el = np.broadcast_arrays(az, el)
    return np.stack([np.cos(el) * np.cos(az),
                     np.cos(el) * np.sin(az),
                     np.sin(el)], axis=-1)


@dataclass(frozen=True)
class MicArrayGeometry:
    """Microphone positions (meters) and speed of sound (m/s)."""

    mic_positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND_DEFAULT

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("mic_positions must have shape (N, 3)")
        if pos.shape[0] < 1:
            raise ValueError("need at least 1 microphone")
        if not np.all(np.isfinite(pos)):
            raise ValueError("mic coordinates must be finite")
        if not self.speed_of_sound > 0:
            raise ValueError("speed_of_sound must be positive")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "mic_positions", pos)
        # single-mic rigs (aperture 0) are allowed as a degenerate case; an
        # actual array must not collapse to a point
        if pos.shape[0] >= 2 and self.aperture <= 0:
            raise ValueError("aperture must be positive (duplicate mics?)")

    @property
    def mic_count(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def aperture(self) -> float:
        """Maximum pairwise microphone distance in meters."""
        diff = self.mic_positions[:, None, :] - self.mic_positions[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    @property
    def min_spacing(self) -> float:
        if self.mic_count < 2:
            return 0.0
        diff = self.mic_positions[:, None, :] - self.mic_positions[None, :, :]
        d = np.sqrt((diff ** 2).sum(-1))
        return float(d[~np.eye(self.mic_count, dtype=bool)].min())

    def to_json(self) -> str:
        return json.dumps({"c": self.speed_of_sound,
                           "mics": self.mic_positions.tolist()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MicArrayGeometry":
        obj = json.loads(text)
        return cls(mic_positions=np.array(obj["mics"], dtype=np.float64),
                   speed_of_sound=float(obj.get("c", SPEED_OF_SOUND_DEFAULT)))


@dataclass(frozen=True)
class DelayVector:
    """Per-microphone steering delays in seconds."""

    delays: np.ndarray
    aperture: float = field(default=0.0, compare=False)
    speed_of_sound: float = field(default=SPEED_OF_SOUND_DEFAULT, compare=False)

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=np.float64)
        if self.aperture > 0:
            bound = self.aperture / self.speed_of_sound
            if np.any(np.abs(d) > bound + 1e-12):
                raise ValueError("delay exceeds aperture / c")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "delays", d)


def steering_delays(geom: MicArrayGeometry,
                    direction: SteeringDirection) -> DelayVector:
    """Per-mic arrival-time offsets for a plane wave from ``direction``.

    A mic displaced toward the source hears the wavefront early by the
    projection of its position onto the look direction, divided by c.
    """
    u = unit_vector(direction)
    d = geom.mic_positions @ u / geom.speed_of_sound
    return DelayVector(delays=d, aperture=geom.aperture,
                       speed_of_sound=geom.speed_of_sound)


def steering_delay_matrix(geom: MicArrayGeometry, azimuth_deg,
                          elevation_deg) -> np.ndarray:
    """Delays for many directions at once: shape (n_dir, n_mic), seconds."""
    u = unit_vectors(azimuth_deg, elevation_deg)
    return u @ geom.mic_positions.T / geom.speed_of_sound


# Default 24-mic rig: three slanted 6-mic legs from an apex plus a 6-mic
# horizontal ring.  Constants chosen so pairwise distances run 4 cm .. 1.08 m.
_APEX_Z = 0.52
_LEG_TILT_DEG = 45.0
_LEG_AZIMUTHS_DEG = (90.0, 210.0, 330.0)
_LEG_MIC_DISTANCES = (0.06, 0.10, 0.18, 0.34, 0.60, 0.88)
_RING_RADIUS = 0.46
_RING_Z = -0.08
_RING_PHASE_DEG = 30.0


def default_array() -> MicArrayGeometry:
    """The reference 24-microphone tripod-plus-ring geometry."""
    mics = []
    tilt = _to_radians(_LEG_TILT_DEG)
    apex = np.array([0.0, 0.0, _APEX_Z])
    for az_deg in _LEG_AZIMUTHS_DEG:
        az = _to_radians(az_deg)
        leg_dir = np.array([np.sin(tilt) * np.cos(az),
                            np.sin(tilt) * np.sin(az),
                            -np.cos(tilt)])
        for dist in _LEG_MIC_DISTANCES:
            mics.append(apex + dist * leg_dir)
    for i in range(6):
        az = _to_radians(_RING_PHASE_DEG + 60.0 * i)
        mics.append(np.array([_RING_RADIUS * np.cos(az),
                              _RING_RADIUS * np.sin(az),
                              _RING_Z]))
    return MicArrayGeometry(mic_positions=np.array(mics))
