"""End-to-end orchestration.

Two execution paths share the same contracts:

* Stage functions (`stage_simulate` .. `stage_eval`, chained by
  `run_pipeline`) work file-to-file through the time-domain beamformer.
  Each stage validates its inputs, writes its outputs plus a manifest, and
  produces files the next stage accepts unchanged.

* `run_benchmark` evaluates the trained segmentation pipeline against the
  beamforming-argmax baseline on a long synthetic flight.  Long runs make
  the per-direction time-domain sweep impractical, so the benchmark uses
  `FrequencyDomainSweep`: delays become per-bin phase rotations applied by
  batched complex matmuls, which yields band powers and frame RMS for every
  direction in one pass.  Consistency with the time-domain path is covered
  by tests.
"""

from __future__ import annotations

import json
import math
import platform
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import __version__, _kernels
from .beamform import BeamGrid, EnergyMap, bf_argmax, das_snapshot, \
    energy_map
from .config import config_hash
from .evaluate import TrackRecord, evaluate_track
from .features import PolarLayout, SpectralMap, band_edges_hz, \
    band_bin_ranges, normalize_unit_range, polar_project, spectral_features, \
    valid_disk
from .geometry import MicArrayGeometry, SteeringDirection, default_array, \
    steering_delay_matrix, steering_delays
from .labeling import GroundTruthFrame, cartesian_to_spherical, make_mask, \
    truth_from_csv, truth_to_csv
from .postprocess import DoAEstimate, estimates_from_csv, estimates_to_csv, \
    segment_to_doa
from .simulate import FRAME_SAMPLES, SAMPLE_RATE_HZ, MultichannelRecording, \
    SourceTrajectory, context_pad, render_clean, render_scene, \
    synth_source_waveform
from .storage import read_tensor, read_wav, write_tensor, write_wav
from .unet.model import ProbabilityMask, UNetConfig, infer_probabilities, \
    pad_image, pad_to_multiple
from .unet.train import TrainingSet, load_checkpoint, save_checkpoint, train


# ---------------------------------------------------------------------------
# manifests

def write_manifest(out_dir, name: str, cfg: dict,
                   inputs: Sequence[str], outputs: Sequence[str],
                   extra: Optional[dict] = None) -> Path:
    """Provenance record beside a stage's outputs.

    Paths are recorded relative to the output directory so identical runs
    in different directories produce identical manifests.
    """
    doc = {
        "stage": name,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "config": cfg,
        "inputs": sorted(str(p) for p in inputs),
        "outputs": sorted(str(p) for p in outputs),
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "kernel_backend": _kernels.backend_name(),
        },
    }
    path = Path(out_dir) / f"{name}.manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _grid_from_config(cfg: dict) -> BeamGrid:
    return BeamGrid.from_steps(cfg["grid"]["az_step_deg"],
                               cfg["grid"]["el_step_deg"])


def _unet_config(cfg: dict, base_filters: Optional[int] = None,
                 learning_rate: Optional[float] = None) -> UNetConfig:
    return UNetConfig(
        in_channels=int(cfg["band"]["n_bands"]),
        base_filters=int(base_filters if base_filters is not None
                         else cfg["network"]["base_filters"]),
        depth=int(cfg["network"]["depth"]),
        attention=cfg["network"]["attention"],
        learning_rate=float(learning_rate if learning_rate is not None
                            else cfg["train"]["learning_rate"]),
        seed=int(cfg["seed"]),
        alpha=float(cfg["train"]["alpha"]),
        beta=float(cfg["train"]["beta"]),
    )


# ---------------------------------------------------------------------------
# frequency-domain sweep

class FrequencyDomainSweep:
    """All-direction band powers and frame RMS via per-bin phase steering.

    Beamforming a frame at direction d is, bin by bin, a phase-weighted
    average of the channel spectra.  The in-band bins (those feeding the
    spectral features) are all kept; out-of-band bins enter only through
    the broadband RMS, so they are decimated by ``oob_stride`` and
    reweighted to preserve the Parseval sum for spectrally flat content.
    Delays are modeled as exact phase shifts circular within the frame,
    whereas the time-domain path interpolates with an 8-tap FIR over real
    context samples; agreement between the two is a test concern, not
    assumed here.
    """

    def __init__(self, geom: MicArrayGeometry, grid: BeamGrid,
                 n_bands: int = 16, lo_hz: float = 200.0,
                 hi_hz: float = 2200.0, oob_stride: int = 8):
        if oob_stride < 1:
            raise ValueError("oob_stride must be >= 1")
        self.geom = geom
        self.grid = grid
        self.edges_hz = band_edges_hz(n_bands, lo_hz, hi_hz)
        ranges = band_bin_ranges(self.edges_hz, FRAME_SAMPLES)
        n_rfft = FRAME_SAMPLES // 2 + 1
        in_lo = int(ranges[0, 0])
        in_hi = int(ranges[-1, 1])

        low = list(range(0, in_lo, oob_stride))
        mid = list(range(in_lo, in_hi))
        high = list(range(in_hi, n_rfft, oob_stride))
        self.kept = np.array(low + mid + high, dtype=np.intp)

        # Parseval weights: every rfft bin contributes c_k (2, except DC and
        # Nyquist) through the kept bin that stands for it
        c = np.full(n_rfft, 2.0)
        c[0] = 1.0
        if FRAME_SAMPLES % 2 == 0:
            c[-1] = 1.0
        weights = np.zeros(self.kept.size)
        for k in range(n_rfft):
            if k < in_lo:
                pos = k // oob_stride
            elif k < in_hi:
                pos = len(low) + (k - in_lo)
            else:
                pos = len(low) + len(mid) + (k - in_hi) // oob_stride
            weights[pos] += c[k]
        self.rms_weights = weights

        self.band_offsets = (len(low) + ranges[:, 0] - in_lo).astype(np.intp)
        self.band_counts = (ranges[:, 1] - ranges[:, 0]).astype(np.float64)
        self._in_slice = slice(len(low), len(low) + len(mid))

        az, el = grid.direction_grids()
        delays = steering_delay_matrix(geom, az.ravel(), el.ravel())
        d_samp = delays * SAMPLE_RATE_HZ  # (n_dir, n_mic)
        n_dir, n_mic = d_samp.shape
        steer = np.empty((self.kept.size, n_dir, n_mic), dtype=np.complex64)
        for j, k in enumerate(self.kept):
            phase = (-2.0 * np.pi * k / FRAME_SAMPLES) * d_samp
            steer[j] = np.exp(1j * phase) / n_mic
        self.steer = steer

    def process(self, frames: np.ndarray,
                batch: int = 32) -> Tuple[np.ndarray, np.ndarray]:
        """(n_frames, n_ch, 4800) -> band means (n_frames, A, E, n_bands)
        and RMS maps (n_frames, A, E)."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != FRAME_SAMPLES:
            raise ValueError("frames must be (n_frames, n_ch, 4800)")
        if frames.shape[1] != self.geom.mic_count:
            raise ValueError("channel count does not match the geometry")
        nf = frames.shape[0]
        na, ne = self.grid.n_az, self.grid.n_el
        nb = self.band_counts.size
        bands = np.empty((nf, na, ne, nb))
        rms = np.empty((nf, na, ne))
        for b0 in range(0, nf, batch):
            b1 = min(b0 + batch, nf)
            spec = np.fft.rfft(frames[b0:b1], axis=-1)
            x = np.ascontiguousarray(
                spec[:, :, self.kept].transpose(2, 1, 0)).astype(np.complex64)
            y = self.steer @ x  # (n_kept, n_dir, B)
            p = np.square(y.real) + np.square(y.imag)
            seg = np.add.reduceat(p[self._in_slice],
                                  self.band_offsets - self._in_slice.start,
                                  axis=0)
            means = seg / self.band_counts[:, None, None]
            bands[b0:b1] = means.transpose(2, 1, 0).reshape(b1 - b0, na, ne,
                                                            nb)
            total = np.einsum("k,kdb->db", self.rms_weights, p)
            rms[b0:b1] = np.sqrt(total / FRAME_SAMPLES ** 2).T.reshape(
                b1 - b0, na, ne)
        return bands, rms


# ---------------------------------------------------------------------------
# deterministic signal generators for chunked rendering

_NOISE_BLOCK = FRAME_SAMPLES * 120
_BLOCK_BIAS = 1_000_000  # keeps block indices nonnegative for seeding


def _white_span(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """White noise as a pure function of absolute sample position, so
    chunks and their margins agree no matter how the span is cut."""
    out = np.empty(count)
    filled = 0
    while filled < count:
        pos = start + filled
        block = pos // _NOISE_BLOCK
        rng = np.random.default_rng([seed, stream, _BLOCK_BIAS + block])
        blk = rng.standard_normal(_NOISE_BLOCK)
        lo = pos - block * _NOISE_BLOCK
        take = min(_NOISE_BLOCK - lo, count - filled)
        out[filled:filled + take] = blk[lo:lo + take]
        filled += take
    return out


class _HarmonicSource:
    """Harmonic stack evaluated at absolute time; peak-normalized to 0.9."""

    def __init__(self, fundamental_hz: float, n_harmonics: int,
                 harmonic_decay: float, seed: int):
        rng = np.random.default_rng([seed, 11])
        self.f0 = float(fundamental_hz)
        self.amps = harmonic_decay ** np.arange(n_harmonics)
        self.phases = rng.uniform(0.0, 2.0 * np.pi, n_harmonics)
        period = np.arange(int(round(SAMPLE_RATE_HZ / self.f0)) + 1)
        probe = self._raw(period)
        self.scale = 0.9 / np.max(np.abs(probe))
        self.rms = float(np.sqrt(np.mean((probe * self.scale) ** 2)))

    def _raw(self, sample_idx: np.ndarray) -> np.ndarray:
        t = sample_idx / SAMPLE_RATE_HZ
        sig = np.zeros(t.shape)
        for k, (a, ph) in enumerate(zip(self.amps, self.phases)):
            sig += a * np.sin(2.0 * np.pi * self.f0 * (k + 1) * t + ph)
        return sig

    def samples(self, start: int, count: int) -> np.ndarray:
        return self._raw(np.arange(start, start + count)) * self.scale


def render_static_source(geom: MicArrayGeometry,
                         direction: SteeringDirection, seed: int,
                         stream: int, start_sample: int, n_samples: int,
                         rms: float) -> np.ndarray:
    """Far-field white-noise source at a fixed direction, rendered for an
    arbitrary span of the recording timeline."""
    pad = context_pad(geom)
    src = _white_span(seed, stream, start_sample - pad,
                      n_samples + 2 * pad) * rms
    arrival = steering_delays(geom, direction).delays
    base, taps = _kernels.delay_filter(-arrival * SAMPLE_RATE_HZ)
    starts = (base + pad).astype(np.int32)
    return _kernels.delay_channels(src, starts, np.ascontiguousarray(taps),
                                   n_samples)


# ---------------------------------------------------------------------------
# synthetic flights

def orbit_trajectory(duration_s: float, range_start_m: float,
                     range_end_m: float, elevation_deg: float,
                     revolutions: float) -> SourceTrajectory:
    """Constant-elevation arc with a linear range sweep (margins included
    so chunked rendering can look slightly past both ends)."""
    t = np.arange(-2.0, duration_s + 2.0 + 1e-9, min(1.0, duration_s / 8))
    u = np.clip(t / duration_s, 0.0, 1.0)
    r = range_start_m + (range_end_m - range_start_m) * u
    az = np.deg2rad(360.0 * revolutions * u)
    el = np.deg2rad(elevation_deg)
    pos = np.stack([r * np.cos(el) * np.cos(az),
                    r * np.cos(el) * np.sin(az),
                    r * np.sin(el)], axis=1)
    return SourceTrajectory(times_s=t, positions=pos)


def benchmark_trajectory(flight_s: float, range_min_m: float,
                         range_max_m: float) -> SourceTrajectory:
    """Spiraling flight: triangle range sweeps 3x over the flight, slow
    azimuth revolutions, elevation oscillating well above the horizon."""
    t = np.arange(-2.0, flight_s + 2.0 + 1e-9, 1.0)
    u = np.clip(t, 0.0, flight_s)
    phase = (u / (flight_s / 3.0)) % 1.0
    r = range_min_m + (range_max_m - range_min_m) * (
        1.0 - 2.0 * np.abs(phase - 0.5))
    az = np.deg2rad(360.0 * u / 300.0)
    el = np.deg2rad(35.0 + 25.0 * np.sin(2.0 * np.pi * u / 240.0))
    pos = np.stack([r * np.cos(el) * np.cos(az),
                    r * np.cos(el) * np.sin(az),
                    r * np.sin(el)], axis=1)
    return SourceTrajectory(times_s=t, positions=pos)


def truth_for_trajectory(traj: SourceTrajectory,
                         n_frames: int) -> List[GroundTruthFrame]:
    out = []
    for f in range(n_frames):
        center = (f + 0.5) * FRAME_SAMPLES / SAMPLE_RATE_HZ
        az, el, rng_m = cartesian_to_spherical(traj.position_at(center))
        out.append(GroundTruthFrame(
            frame_index=f, present=True,
            direction=SteeringDirection(az, el), range_m=rng_m))
    return out


# ---------------------------------------------------------------------------
# stage functions (time-domain contract path)

def stage_simulate(cfg: dict, out_dir) -> Dict[str, Path]:
    """Render the configured scene to scene.wav + truth.csv + traj.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    s = cfg["simulate"]
    geom = default_array()
    traj = orbit_trajectory(s["duration_s"], s["range_start_m"],
                            s["range_end_m"], s["elevation_deg"],
                            s["revolutions"])
    source = synth_source_waveform(s["duration_s"], s["fundamental_hz"],
                                   n_harmonics=s["n_harmonics"],
                                   seed=cfg["seed"])
    rec = render_scene(geom, traj, source, snr_db=s["snr_db"],
                       seed=cfg["seed"],
                       amplitude_rolloff=s["amplitude_rolloff"])
    truths = truth_for_trajectory(traj, rec.n_frames)

    wav = out_dir / "scene.wav"
    write_wav(wav, rec.channels, SAMPLE_RATE_HZ, sample_format="float32")
    truth_csv = out_dir / "truth.csv"
    truth_csv.write_text(truth_to_csv(truths))
    traj_csv = out_dir / "trajectory.csv"
    traj_csv.write_text(traj.to_csv())
    write_manifest(out_dir, "simulate", cfg, [],
                   [wav.name, truth_csv.name, traj_csv.name])
    return {"wav": wav, "truth": truth_csv, "trajectory": traj_csv}


def _read_recording(wav_path) -> MultichannelRecording:
    rate, channels = read_wav(wav_path, enforce_rate_hz=SAMPLE_RATE_HZ)
    return MultichannelRecording(channels=channels)


def stage_beamform(cfg: dict, wav_path, out_dir) -> Dict[str, Path]:
    """Per-frame energy maps (energy.spht) and argmax track (baseline.csv)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    geom = default_array()
    grid = _grid_from_config(cfg)
    rec = _read_recording(wav_path)
    maps = np.empty((rec.n_frames, grid.n_az, grid.n_el), dtype=np.float32)
    estimates: List[Optional[DoAEstimate]] = []
    for f in range(rec.n_frames):
        snap = das_snapshot(rec, f, grid, geom)
        emap = energy_map(snap)
        maps[f] = emap.data.astype(np.float32)
        peak = bf_argmax(emap, grid)
        estimates.append(None if peak is None else DoAEstimate(
            direction=peak, confidence=1.0, component_area_px=1))
    energy_path = out_dir / "energy.spht"
    write_tensor(energy_path, maps)
    baseline_csv = out_dir / "baseline.csv"
    baseline_csv.write_text(estimates_to_csv(estimates))
    write_manifest(out_dir, "beamform", cfg, [Path(wav_path).name],
                   [energy_path.name, baseline_csv.name])
    return {"energy": energy_path, "baseline": baseline_csv}


def stage_featurize(cfg: dict, wav_path, out_dir) -> Dict[str, Path]:
    """Per-frame polar feature images (features.spht, frames x bands x px)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    geom = default_array()
    grid = _grid_from_config(cfg)
    layout = PolarLayout.for_grid(grid)
    b = cfg["band"]
    rec = _read_recording(wav_path)
    feats = np.empty((rec.n_frames, int(b["n_bands"]), layout.side,
                      layout.side), dtype=np.float32)
    for f in range(rec.n_frames):
        snap = das_snapshot(rec, f, grid, geom)
        sm = spectral_features(snap, n_bands=int(b["n_bands"]),
                               lo_hz=b["lo_hz"], hi_hz=b["hi_hz"])
        img = polar_project(sm, layout)
        feats[f] = np.moveaxis(img.data, -1, 0).astype(np.float32)
    features_path = out_dir / "features.spht"
    write_tensor(features_path, feats)
    write_manifest(out_dir, "featurize", cfg, [Path(wav_path).name],
                   [features_path.name])
    return {"features": features_path}


def stage_label(cfg: dict, truth_path, out_dir) -> Dict[str, Path]:
    """Ground-truth CSV -> binary supervision masks (masks.spht)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = _grid_from_config(cfg)
    layout = PolarLayout.for_grid(grid)
    truths = truth_from_csv(Path(truth_path).read_text())
    masks = np.empty((len(truths), layout.side, layout.side), dtype=np.uint8)
    for i, gt in enumerate(truths):
        masks[i] = make_mask(gt, layout,
                             delta_deg=cfg["label"]["delta_deg"]).grid
    masks_path = out_dir / "masks.spht"
    write_tensor(masks_path, masks)
    write_manifest(out_dir, "label", cfg, [Path(truth_path).name],
                   [masks_path.name])
    return {"masks": masks_path}


def _padded_inputs(feats: np.ndarray, depth: int) -> np.ndarray:
    """(frames, bands, side, side) -> zero-padded to the network's stride."""
    side = feats.shape[2]
    target = pad_to_multiple(side, depth)
    out = np.zeros(feats.shape[:2] + (target, target), dtype=np.float32)
    out[:, :, :side, :side] = feats
    return out


def stage_train(cfg: dict, features_path, masks_path,
                out_dir) -> Dict[str, Path]:
    """Fit the segmentation network; writes checkpoint + history."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = _grid_from_config(cfg)
    layout = PolarLayout.for_grid(grid)
    feats = read_tensor(features_path)
    masks = read_tensor(masks_path)
    if feats.ndim != 4 or masks.ndim != 3:
        raise ValueError("features must be rank 4 and masks rank 3")
    if feats.shape[0] != masks.shape[0]:
        raise ValueError("features and masks disagree on frame count")
    if feats.shape[1] != cfg["band"]["n_bands"]:
        raise ValueError("feature channel count does not match n_bands")
    ucfg = _unet_config(cfg)
    ds = TrainingSet(inputs=_padded_inputs(feats, ucfg.depth),
                     targets=masks.astype(np.uint8),
                     validity=valid_disk(layout))
    t = cfg["train"]
    result = train(ds, ucfg, epochs=int(t["epochs"]),
                   batch_size=int(t["batch_size"]),
                   val_fraction=float(t["val_fraction"]), dtype=np.float32)
    ckpt = out_dir / "checkpoint.spht"
    save_checkpoint(ckpt, result.params, ucfg)
    history = out_dir / "history.csv"
    history.write_text(result.history_csv())
    write_manifest(out_dir, "train", cfg,
                   [Path(features_path).name, Path(masks_path).name],
                   [ckpt.name, ckpt.name + ".json", history.name],
                   )
    return {"checkpoint": ckpt, "history": history}


def stage_infer(cfg: dict, features_path, checkpoint_path,
                out_dir) -> Dict[str, Path]:
    """Probability maps (probs.spht) + per-frame estimates (estimates.csv)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = _grid_from_config(cfg)
    layout = PolarLayout.for_grid(grid)
    disk = valid_disk(layout)
    feats = read_tensor(features_path)
    params, ucfg = load_checkpoint(checkpoint_path)
    if feats.shape[1] != ucfg.in_channels:
        raise ValueError("features do not match the checkpoint's channels")
    probs_full = infer_probabilities(params, ucfg,
                                     _padded_inputs(feats, ucfg.depth))
    side = layout.side
    probs = np.where(disk, probs_full[:, :side, :side], 0.0)
    estimates = []
    for f in range(probs.shape[0]):
        mask = ProbabilityMask(data=probs[f], validity=disk)
        estimates.append(segment_to_doa(
            mask, layout, threshold=cfg["postprocess"]["threshold"]))
    probs_path = out_dir / "probs.spht"
    write_tensor(probs_path, probs.astype(np.float32))
    est_csv = out_dir / "estimates.csv"
    est_csv.write_text(estimates_to_csv(estimates))
    write_manifest(out_dir, "infer", cfg,
                   [Path(features_path).name, Path(checkpoint_path).name],
                   [probs_path.name, est_csv.name])
    return {"probs": probs_path, "estimates": est_csv}


def stage_eval(cfg: dict, pred_path, truth_path, out_dir,
               report_name: str = "report") -> Dict[str, Path]:
    """Detection metrics from an estimate track and its ground truth."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    estimates = estimates_from_csv(Path(pred_path).read_text())
    truths = truth_from_csv(Path(truth_path).read_text())
    track = TrackRecord(estimates=tuple(estimates), truths=tuple(truths))
    report = evaluate_track(track)
    json_path = out_dir / f"{report_name}.json"
    json_path.write_text(report.to_json())
    csv_path = out_dir / f"{report_name}.csv"
    csv_path.write_text(report.to_csv())
    write_manifest(out_dir, f"eval-{report_name}", cfg,
                   [Path(pred_path).name, Path(truth_path).name],
                   [json_path.name, csv_path.name])
    return {"report_json": json_path, "report_csv": csv_path}


def stage_plot(cfg: dict, out_dir, frame: int = 0) -> Dict[str, Path]:
    """Render one frame's artifacts from a pipeline output directory."""
    from .plots import plot_energy_map, plot_polar_field

    out_dir = Path(out_dir)
    grid = _grid_from_config(cfg)
    layout = PolarLayout.for_grid(grid)
    truths = truth_from_csv((out_dir / "truth.csv").read_text())
    if not 0 <= frame < len(truths):
        raise ValueError(f"frame {frame} outside the recording")
    gt = truths[frame]
    truth_dir = gt.direction if gt.present else None

    baseline = estimates_from_csv((out_dir / "baseline.csv").read_text())
    estimates = estimates_from_csv((out_dir / "estimates.csv").read_text())
    argmax_dir = (baseline[frame].direction
                  if baseline[frame] is not None else None)
    centroid_dir = (estimates[frame].direction
                    if estimates[frame] is not None else None)

    outputs: Dict[str, Path] = {}
    energy = read_tensor(out_dir / "energy.spht")[frame]
    p = out_dir / f"energy_{frame:04d}.png"
    plot_energy_map(energy, grid, p, truth=truth_dir, argmax=argmax_dir,
                    title=f"beamformed energy, frame {frame}")
    outputs["energy"] = p

    feats = read_tensor(out_dir / "features.spht")[frame]
    p = out_dir / f"features_{frame:04d}.png"
    plot_polar_field(feats.mean(axis=0), layout, p, truth=truth_dir,
                     title=f"mean band power, frame {frame}")
    outputs["features"] = p

    masks = read_tensor(out_dir / "masks.spht")[frame]
    p = out_dir / f"mask_{frame:04d}.png"
    plot_polar_field(masks.astype(np.float64), layout, p, truth=truth_dir,
                     vmax=1.0, title=f"supervision mask, frame {frame}")
    outputs["mask"] = p

    probs = read_tensor(out_dir / "probs.spht")[frame]
    p = out_dir / f"probs_{frame:04d}.png"
    plot_polar_field(probs.astype(np.float64), layout, p, truth=truth_dir,
                     centroid=centroid_dir, vmax=1.0,
                     title=f"predicted probability, frame {frame}")
    outputs["probs"] = p
    write_manifest(out_dir, "plot", cfg,
                   ["truth.csv", "baseline.csv", "estimates.csv",
                    "energy.spht", "features.spht", "masks.spht",
                    "probs.spht"],
                   [q.name for q in outputs.values()])
    return outputs


def run_pipeline(cfg: dict, out_dir, log=None) -> Dict[str, Path]:
    """All stages chained in one directory; deterministic per config."""
    out_dir = Path(out_dir)

    def say(msg):
        if log:
            log(msg)

    say("simulate")
    sim = stage_simulate(cfg, out_dir)
    say("beamform")
    bf = stage_beamform(cfg, sim["wav"], out_dir)
    say("featurize")
    ft = stage_featurize(cfg, sim["wav"], out_dir)
    say("label")
    lb = stage_label(cfg, sim["truth"], out_dir)
    say("train")
    tr = stage_train(cfg, ft["features"], lb["masks"], out_dir)
    say("infer")
    inf = stage_infer(cfg, ft["features"], tr["checkpoint"], out_dir)
    say("eval")
    ev = stage_eval(cfg, inf["estimates"], sim["truth"], out_dir,
                    report_name="metrics")
    ev_b = stage_eval(cfg, bf["baseline"], sim["truth"], out_dir,
                      report_name="metrics_baseline")
    say("plot")
    pl = stage_plot(cfg, out_dir, frame=0)
    out = {}
    for d in (sim, bf, ft, lb, tr, inf, ev,
              {"baseline_json": ev_b["report_json"]}, pl):
        out.update(d)
    return out


# ---------------------------------------------------------------------------
# benchmark: trained pipeline vs beamforming argmax on a long flight

_AMBIENT_DIRECTIONS = (SteeringDirection(135.0, 12.0),
                       SteeringDirection(-40.0, 25.0))
_AMBIENT_RELATIVE = (1.0, 2.0 / 3.0)  # second source slightly weaker
_REFERENCE_RANGE_M = 50.0


def _estimate_from_argmax(peak: Optional[SteeringDirection]
                          ) -> Optional[DoAEstimate]:
    if peak is None:
        return None
    return DoAEstimate(direction=peak, confidence=1.0, component_area_px=1)


def run_benchmark(cfg: dict, out_dir, log=None,
                  keep_features: bool = False) -> dict:
    """Simulate a long flight plus a noise-only coda, train the network on
    a strided subset, and compare its track metrics against the argmax
    baseline computed from the very same frames.

    The scene holds one moving harmonic source (the target), two weak
    static broadband ambient sources, and diffuse per-channel noise whose
    level calibrates the requested flight-average SNR.  Frames stream
    through the frequency-domain sweep in chunks; per-frame features go to
    disk so training and inference never hold the whole run in memory.
    """
    def say(msg):
        if log:
            log(msg)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bench = cfg["benchmark"]
    seed = int(cfg["seed"])
    geom = default_array()
    grid = _grid_from_config(cfg)
    layout = PolarLayout.for_grid(grid)
    disk = valid_disk(layout)
    b = cfg["band"]
    n_bands = int(b["n_bands"])

    frame_s = FRAME_SAMPLES / SAMPLE_RATE_HZ
    flight_frames = int(round(bench["flight_s"] / frame_s))
    noise_frames = int(round(bench["noise_s"] / frame_s))
    total_frames = flight_frames + noise_frames
    chunk_frames = int(bench["chunk_frames"])

    traj = benchmark_trajectory(bench["flight_s"], bench["range_min_m"],
                                bench["range_max_m"])
    s = cfg["simulate"]
    drone = _HarmonicSource(s["fundamental_hz"], s["n_harmonics"],
                            harmonic_decay=0.7, seed=seed)

    # diffuse noise level from the flight-average received amplitude
    truths_flight = truth_for_trajectory(traj, flight_frames)
    gains2 = [( _REFERENCE_RANGE_M / gt.range_m) ** 2
              for gt in truths_flight]
    sigma = (drone.rms * math.sqrt(float(np.mean(gains2)))
             / 10.0 ** (bench["snr_db"] / 20.0))
    ambient_rms = [float(bench["ambient_level"]) * rel * sigma
                   for rel in _AMBIENT_RELATIVE]

    sweep = FrequencyDomainSweep(geom, grid, n_bands=n_bands,
                                 lo_hz=b["lo_hz"], hi_hz=b["hi_hz"])
    target = pad_to_multiple(layout.side, int(cfg["network"]["depth"]))

    truths: List[GroundTruthFrame] = list(truths_flight)
    for f in range(noise_frames):
        truths.append(GroundTruthFrame(frame_index=flight_frames + f,
                                       present=False))

    stride = int(bench["train_stride"])
    noise_stride = int(bench["noise_train_stride"])
    train_inputs: List[np.ndarray] = []
    train_targets: List[np.ndarray] = []
    baseline_est: List[Optional[DoAEstimate]] = []
    chunk_paths: List[Path] = []
    chunks_dir = out_dir / "feature_chunks"
    chunks_dir.mkdir(exist_ok=True)

    n_chunks = (total_frames + chunk_frames - 1) // chunk_frames
    for ci in range(n_chunks):
        f0 = ci * chunk_frames
        f1 = min(f0 + chunk_frames, total_frames)
        nf = f1 - f0
        start = f0 * FRAME_SAMPLES
        count = nf * FRAME_SAMPLES

        audio = np.zeros((geom.mic_count, count))
        # moving target, only while the flight lasts; rendered with one
        # margin frame on each side so frame edges see true context
        lo_f = max(f0 - 1, 0)
        hi_f = min(f1 + 1, flight_frames)
        if lo_f < hi_f and f0 < flight_frames:
            span0 = lo_f * FRAME_SAMPLES
            span1 = hi_f * FRAME_SAMPLES
            src = drone.samples(span0, span1 - span0)
            block = render_clean(geom, traj, src, amplitude_rolloff=True,
                                 reference_range_m=_REFERENCE_RANGE_M,
                                 start_time_s=span0 / SAMPLE_RATE_HZ)
            keep0 = start - span0
            keep1 = keep0 + min(count, span1 - start)
            audio[:, :keep1 - keep0] += block[:, keep0:keep1]
        for a, (direction, rms) in enumerate(zip(_AMBIENT_DIRECTIONS,
                                                 ambient_rms)):
            audio += render_static_source(geom, direction, seed, 500 + a,
                                          start, count, rms)
        for ch in range(geom.mic_count):
            rng = np.random.default_rng([seed, 900 + ch, ci])
            audio[ch] += rng.standard_normal(count) * sigma

        frames = audio.reshape(geom.mic_count, nf,
                               FRAME_SAMPLES).transpose(1, 0, 2)
        bands, rms_maps = sweep.process(frames)

        feats = np.empty((nf, n_bands, target, target), dtype=np.float32)
        for j in range(nf):
            sm = SpectralMap(data=normalize_unit_range(bands[j]),
                             azimuths_deg=grid.azimuths_deg,
                             elevations_deg=grid.elevations_deg,
                             band_edges_hz=sweep.edges_hz)
            img = polar_project(sm, layout)
            feats[j] = pad_image(img.data, target).astype(np.float32)
            g = f0 + j
            peak = bf_argmax(EnergyMap(data=rms_maps[j]), grid)
            baseline_est.append(_estimate_from_argmax(peak))
            # denser stride on the source-free segment keeps the class mix
            # from tipping so far toward present frames that the loss ratchet
            # saturates the output before the blobs get fit
            in_train = (g % stride == 0 if g < flight_frames
                        else (g - flight_frames) % noise_stride == 0)
            if in_train:
                train_inputs.append(feats[j])
                train_targets.append(make_mask(
                    truths[g], layout,
                    delta_deg=cfg["label"]["delta_deg"]).grid)
        path = chunks_dir / f"chunk_{ci:04d}.spht"
        write_tensor(path, feats)
        chunk_paths.append(path)
        if ci % 10 == 0 or ci == n_chunks - 1:
            say(f"chunk {ci + 1}/{n_chunks} featurized")

    say(f"training on {len(train_inputs)} frames")
    ucfg = _unet_config(cfg, base_filters=int(bench["base_filters"]),
                        learning_rate=float(bench["learning_rate"]))
    ds = TrainingSet(inputs=np.stack(train_inputs),
                     targets=np.stack(train_targets).astype(np.uint8),
                     validity=disk)
    epoch_log = None
    if log:
        epoch_log = lambda e, tr, va: say(  # noqa: E731
            f"epoch {e}: train {tr:.4f} val {va:.4f}")
    result = train(ds, ucfg, epochs=int(bench["epochs"]),
                   batch_size=int(bench["batch_size"]), dtype=np.float32,
                   log=epoch_log)
    ckpt = out_dir / "benchmark_checkpoint.spht"
    save_checkpoint(ckpt, result.params, ucfg)
    (out_dir / "benchmark_history.csv").write_text(result.history_csv())

    say("inference")
    unet_est: List[Optional[DoAEstimate]] = []
    side = layout.side
    threshold = float(cfg["postprocess"]["threshold"])
    for ci, path in enumerate(chunk_paths):
        feats = read_tensor(path)
        probs = infer_probabilities(result.params, ucfg, feats,
                                    batch_size=64)
        for j in range(probs.shape[0]):
            p = np.where(disk, probs[j, :side, :side], 0.0)
            unet_est.append(segment_to_doa(
                ProbabilityMask(data=p, validity=disk), layout,
                threshold=threshold))
        if not keep_features:
            path.unlink()
    if not keep_features:
        try:
            chunks_dir.rmdir()
        except OSError:
            pass

    say("scoring")
    truth_tuple = tuple(truths)
    unet_report = evaluate_track(TrackRecord(estimates=tuple(unet_est),
                                             truths=truth_tuple))
    base_report = evaluate_track(TrackRecord(estimates=tuple(baseline_est),
                                             truths=truth_tuple))

    bins = sorted(set(unet_report.angular_error_deg)
                  | set(base_report.angular_error_deg))
    error_ok = all(
        bname in unet_report.angular_error_deg
        and bname in base_report.angular_error_deg
        and unet_report.angular_error_deg[bname]
        <= base_report.angular_error_deg[bname]
        for bname in bins)
    fpr_ok = (unet_report.fpr is not None and base_report.fpr is not None
              and unet_report.fpr < base_report.fpr)

    report = {
        "n_frames": total_frames,
        "flight_frames": flight_frames,
        "noise_frames": noise_frames,
        "train_frames": len(train_inputs),
        "segmentation": json.loads(unet_report.to_json()),
        "baseline": json.loads(base_report.to_json()),
        "relational": {
            "angular_error_leq_baseline_all_bins": bool(error_ok),
            "fpr_strictly_below_baseline": bool(fpr_ok),
        },
    }
    report_path = out_dir / "benchmark_report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True)
                           + "\n")
    write_manifest(out_dir, "benchmark", cfg, [],
                   [report_path.name, ckpt.name, "benchmark_history.csv"])
    return report
