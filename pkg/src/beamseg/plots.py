"""PNG heatmap rendering for energy maps, polar images, masks and
predictions.

Markers follow one convention everywhere: ground truth is an X, the
beamforming argmax a dot, the segmentation centroid a triangle.  Each plot
function returns the data coordinates it drew markers at, so callers can
cross-check marker geometry against reported metrics.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .beamform import BeamGrid
from .features import PolarLayout, direction_to_polar
from .geometry import SteeringDirection

_MARKERS = {"truth": ("x", "#ffffff"),
            "argmax": ("o", "#00e5ff"),
            "centroid": ("^", "#ff4081")}


def _draw_markers(ax, coords: Dict[str, Tuple[float, float]]) -> None:
    for name, (x, y) in coords.items():
        marker, color = _MARKERS[name]
        ax.scatter([x], [y], marker=marker, s=120, c=color,
                   edgecolors="black" if marker != "x" else None,
                   linewidths=1.5, zorder=5, label=name)
    if coords:
        ax.legend(loc="upper right", fontsize=8, framealpha=0.85)


def plot_energy_map(energy: np.ndarray, grid: BeamGrid, out_path,
                    truth: Optional[SteeringDirection] = None,
                    argmax: Optional[SteeringDirection] = None,
                    title: str = "beamformed energy"
                    ) -> Dict[str, Tuple[float, float]]:
    """Azimuth-elevation heatmap in degrees; returns marker coordinates."""
    data = np.asarray(energy, dtype=np.float64)
    if data.shape != (grid.n_az, grid.n_el):
        raise ValueError("energy map shape does not match the grid")
    az = grid.azimuths_deg
    el = grid.elevations_deg
    daz = grid.az_step_deg
    de = grid.el_step_deg
    fig, ax = plt.subplots(figsize=(8, 3.2), dpi=110)
    im = ax.imshow(data.T, origin="lower", aspect="auto",
                   extent=(az[0] - daz / 2, az[-1] + daz / 2,
                           el[0] - de / 2, el[-1] + de / 2),
                   cmap="magma")
    coords: Dict[str, Tuple[float, float]] = {}
    if truth is not None:
        coords["truth"] = (truth.azimuth_deg, truth.elevation_deg)
    if argmax is not None:
        coords["argmax"] = (argmax.azimuth_deg, argmax.elevation_deg)
    _draw_markers(ax, coords)
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("elevation (deg)")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.9)
    fig.tight_layout()
    fig.savefig(Path(out_path))
    plt.close(fig)
    return coords


def plot_polar_field(field: np.ndarray, layout: PolarLayout, out_path,
                     truth: Optional[SteeringDirection] = None,
                     argmax: Optional[SteeringDirection] = None,
                     centroid: Optional[SteeringDirection] = None,
                     title: str = "polar field", vmax: Optional[float] = None
                     ) -> Dict[str, Tuple[float, float]]:
    """Disk-image heatmap in pixel coordinates; returns marker coordinates.

    Works for feature channels, masks and probability maps alike.
    """
    data = np.asarray(field, dtype=np.float64)
    if data.shape != (layout.side, layout.side):
        raise ValueError("field shape does not match the layout")
    fig, ax = plt.subplots(figsize=(4.6, 4.6), dpi=110)
    im = ax.imshow(data, origin="upper", cmap="viridis",
                   vmin=0.0, vmax=vmax)
    coords: Dict[str, Tuple[float, float]] = {}
    for name, direction in (("truth", truth), ("argmax", argmax),
                            ("centroid", centroid)):
        if direction is not None:
            coords[name] = direction_to_polar(layout, direction)
    _draw_markers(ax, coords)
    circle = plt.Circle((layout.center, layout.center), layout.radius_px,
                        fill=False, color="white", linewidth=0.8, alpha=0.6)
    ax.add_patch(circle)
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(Path(out_path))
    plt.close(fig)
    return coords


def plot_training_history(history, out_path) -> None:
    """Loss curves over epochs (train and validation)."""
    hist = list(history)
    epochs = [h[0] for h in hist]
    train = [h[1] for h in hist]
    val = [h[2] for h in hist]
    fig, ax = plt.subplots(figsize=(6, 3.4), dpi=110)
    ax.plot(epochs, train, label="train")
    if any(v is not None for v in val):
        ax.plot([e for e, v in zip(epochs, val) if v is not None],
                [v for v in val if v is not None], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training history")
    ax.legend()
    fig.tight_layout()
    fig.savefig(Path(out_path))
    plt.close(fig)
