"""Probability mask to direction estimate.

Threshold, one erosion pass to kill speckle, keep the largest 8-connected
component, and map its centroid back to a direction.  The centroid is taken
in disk-plane Cartesian coordinates, never in angle space, so components
straddling the azimuth wrap contribute no bias.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .features import PolarLayout, polar_to_direction
from .geometry import SteeringDirection
from .unet.model import ProbabilityMask

THRESHOLD_DEFAULT = 0.5

_STRUCT8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class DoAEstimate:
    direction: SteeringDirection
    confidence: float  # mean probability over the selected component
    component_area_px: int

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.component_area_px < 1:
            raise ValueError("an estimate needs at least one pixel")


def segment_to_doa(yhat: ProbabilityMask, layout: PolarLayout,
                   threshold: float = THRESHOLD_DEFAULT
                   ) -> Optional[DoAEstimate]:
    """Reduce a probability mask to one direction, or None if nothing
    survives thresholding and erosion."""
    binary = yhat.data > threshold
    eroded = ndimage.binary_erosion(binary, structure=_STRUCT8)
    if not eroded.any():
        return None
    labels, n = ndimage.label(eroded, structure=_STRUCT8)
    sizes = np.bincount(labels.ravel())[1:]  # skip background
    best = None
    for comp in range(1, n + 1):
        size = int(sizes[comp - 1])
        mean_p = float(yhat.data[labels == comp].mean())
        key = (size, mean_p)
        if best is None or key > best[0]:
            best = (key, comp)
    comp = best[1]
    rows, cols = np.nonzero(labels == comp)
    cy = float(rows.mean())
    cx = float(cols.mean())
    direction = polar_to_direction(layout, cx, cy)
    return DoAEstimate(direction=direction,
                       confidence=float(yhat.data[labels == comp].mean()),
                       component_area_px=int(rows.size))


def estimates_to_csv(estimates) -> str:
    """Per-frame rows; frames without a detection have empty value fields."""
    lines = ["frame,detected,azimuth_deg,elevation_deg,confidence,area_px"]
    for frame, est in enumerate(estimates):
        if est is None:
            lines.append(f"{frame},0,,,,")
        else:
            lines.append(f"{frame},1,{est.direction.azimuth_deg!r},"
                         f"{est.direction.elevation_deg!r},"
                         f"{est.confidence!r},{est.component_area_px}")
    return "\n".join(lines) + "\n"


def estimates_from_csv(text: str):
    estimates = []
    for ln in text.strip().splitlines()[1:]:
        if not ln:
            continue
        _, detected, az, el, conf, area = ln.split(",")
        if detected == "1":
            estimates.append(DoAEstimate(
                direction=SteeringDirection(float(az), float(el)),
                confidence=float(conf), component_area_px=int(area)))
        else:
            estimates.append(None)
    return estimates
