"""Track-level detection metrics.

A detection on frame f counts as stable only when f and its two predecessors
all produced estimates and those three directions cluster within 10 degrees
(RMS great-circle distance from their normalized vector mean).  Frames whose
source is present but whose detection is not stable are false negatives;
angular error is averaged over the remaining frames.  Ranges are grouped
into 0-50 m, 50-100 m, and 100-200 m bins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .geometry import unit_vector
from .labeling import GroundTruthFrame, angular_distance
from .postprocess import DoAEstimate

STABILITY_WINDOW = 3
STABILITY_MAX_RMS_DEG = 10.0

RANGE_BINS_M: Tuple[Tuple[float, float], ...] = (
    (0.0, 50.0), (50.0, 100.0), (100.0, 200.0))


def _bin_name(bin_m: Tuple[float, float]) -> str:
    return f"{bin_m[0]:g}-{bin_m[1]:g}"


@dataclass(frozen=True)
class TrackRecord:
    """One recording's worth of per-frame estimates and ground truth."""

    estimates: Tuple[Optional[DoAEstimate], ...]
    truths: Tuple[GroundTruthFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, "estimates", tuple(self.estimates))
        object.__setattr__(self, "truths", tuple(self.truths))
        if len(self.estimates) != len(self.truths):
            raise ValueError("one estimate slot per ground-truth frame")
        if not self.truths:
            raise ValueError("track must contain at least one frame")
        start = self.truths[0].frame_index
        for i, gt in enumerate(self.truths):
            if gt.frame_index != start + i:
                raise ValueError("ground-truth frames must be contiguous")

    def __len__(self) -> int:
        return len(self.truths)


def stability_flag(track: TrackRecord, frame: int) -> bool:
    """True when the last 3 frames (inclusive) all detected something and
    the detections agree to within 10 degrees RMS."""
    if frame < 0:
        raise ValueError("frame index must be nonnegative")
    if frame >= len(track):
        raise ValueError("frame index beyond end of track")
    if frame < STABILITY_WINDOW - 1:
        return False
    window = track.estimates[frame - STABILITY_WINDOW + 1:frame + 1]
    if any(e is None for e in window):
        return False
    vecs = np.stack([unit_vector(e.direction) for e in window])
    mean = vecs.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        return False  # perfectly scattered, no meaningful centroid
    mean /= norm
    dots = np.clip(vecs @ mean, -1.0, 1.0)
    devs = np.degrees(np.arccos(dots))
    rms = float(np.sqrt(np.mean(devs ** 2)))
    return rms <= STABILITY_MAX_RMS_DEG


def _bin_of(range_m: float) -> Optional[Tuple[float, float]]:
    for lo, hi in RANGE_BINS_M:
        if lo <= range_m < hi:
            return (lo, hi)
    return None


def fnr_by_bin(track: TrackRecord) -> Dict[str, float]:
    """False-negative rate per range bin; bins with no frames are omitted."""
    present_ct: Dict[str, int] = {}
    fn_ct: Dict[str, int] = {}
    any_present = False
    for f, gt in enumerate(track.truths):
        if not gt.present:
            continue
        any_present = True
        b = _bin_of(gt.range_m)
        if b is None:
            continue
        name = _bin_name(b)
        present_ct[name] = present_ct.get(name, 0) + 1
        if not stability_flag(track, f):
            fn_ct[name] = fn_ct.get(name, 0) + 1
    if not any_present:
        raise ValueError("track has no source-present frames")
    return {name: fn_ct.get(name, 0) / ct for name, ct in present_ct.items()}


def angular_error_by_bin(track: TrackRecord) -> Dict[str, float]:
    """Mean angular error in degrees per range bin over frames that are not
    false negatives; bins with no contributing frames are omitted."""
    sums: Dict[str, float] = {}
    counts: Dict[str, int] = {}
    for f, gt in enumerate(track.truths):
        if not gt.present:
            continue
        b = _bin_of(gt.range_m)
        if b is None:
            continue
        if not stability_flag(track, f):
            continue
        est = track.estimates[f]
        err = angular_distance(est.direction, gt.direction)
        name = _bin_name(b)
        sums[name] = sums.get(name, 0.0) + err
        counts[name] = counts.get(name, 0) + 1
    return {name: sums[name] / counts[name] for name in sums}


def fpr_no_source(track: TrackRecord) -> float:
    """Fraction of frames flagged stable on a recording with no source."""
    if any(gt.present for gt in track.truths):
        raise ValueError("false-positive rate is defined on source-free tracks")
    stable = sum(1 for f in range(len(track)) if stability_flag(track, f))
    return stable / len(track)


@dataclass(frozen=True)
class EvalReport:
    fnr: Dict[str, float]
    angular_error_deg: Dict[str, float]
    bin_counts: Dict[str, int]
    fpr: Optional[float]  # None when the track has no source-free frames

    def __post_init__(self):
        for r in self.fnr.values():
            if not 0.0 <= r <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        for e in self.angular_error_deg.values():
            if e < 0.0:
                raise ValueError("angular errors must be nonnegative")
        if self.fpr is not None and not 0.0 <= self.fpr <= 1.0:
            raise ValueError("rates must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps({
            "fnr": self.fnr,
            "angular_error_deg": self.angular_error_deg,
            "bin_counts": self.bin_counts,
            "fpr": self.fpr,
        }, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        obj = json.loads(text)
        return cls(fnr=dict(obj["fnr"]),
                   angular_error_deg=dict(obj["angular_error_deg"]),
                   bin_counts={k: int(v) for k, v in obj["bin_counts"].items()},
                   fpr=obj["fpr"])

    def to_csv(self) -> str:
        """Flat metric,bin,value rows for plotting."""
        lines = ["metric,bin,value"]
        for name in sorted(self.fnr):
            lines.append(f"fnr,{name},{self.fnr[name]!r}")
        for name in sorted(self.angular_error_deg):
            lines.append(f"angular_error_deg,{name},"
                         f"{self.angular_error_deg[name]!r}")
        for name in sorted(self.bin_counts):
            lines.append(f"count,{name},{self.bin_counts[name]}")
        if self.fpr is not None:
            lines.append(f"fpr,,{self.fpr!r}")
        return "\n".join(lines) + "\n"


def evaluate_track(track: TrackRecord) -> EvalReport:
    """Full report for a mixed track.  FNR and angular error come from the
    source-present frames; FPR from the source-absent frames, evaluated as
    their own sub-track so the stability window never mixes regimes."""
    counts: Dict[str, int] = {}
    for gt in track.truths:
        if gt.present:
            b = _bin_of(gt.range_m)
            if b is not None:
                name = _bin_name(b)
                counts[name] = counts.get(name, 0) + 1

    if counts:
        fnr = fnr_by_bin(track)
        err = angular_error_by_bin(track)
    else:
        fnr, err = {}, {}

    absent = [i for i, gt in enumerate(track.truths) if not gt.present]
    fpr: Optional[float] = None
    if absent:
        # evaluate contiguous absent runs independently
        runs = []
        run = [absent[0]]
        for i in absent[1:]:
            if i == run[-1] + 1:
                run.append(i)
            else:
                runs.append(run)
                run = [i]
        runs.append(run)
        stable = 0
        total = 0
        for run in runs:
            sub = TrackRecord(
                estimates=tuple(track.estimates[i] for i in run),
                truths=tuple(
                    GroundTruthFrame(frame_index=j, present=False)
                    for j, _ in enumerate(run)))
            stable += sum(1 for f in range(len(sub))
                          if stability_flag(sub, f))
            total += len(sub)
        fpr = stable / total
    return EvalReport(fnr=fnr, angular_error_deg=err,
                      bin_counts=counts, fpr=fpr)
