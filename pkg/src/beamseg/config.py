"""Run configuration: one versioned JSON schema shared by every stage.

Precedence is CLI flag > config file > built-in default.  Configs are hashed
(sha256 over the canonical JSON form) so manifests can state exactly what a
run saw.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Optional

CONFIG_VERSION = 1

DEFAULTS = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "grid": {
        "az_step_deg": 4.0,
        "el_step_deg": 4.0,
    },
    "band": {
        "lo_hz": 200.0,
        "hi_hz": 2200.0,
        "n_bands": 16,
    },
    "label": {
        "delta_deg": 10.0,
    },
    "network": {
        "base_filters": 64,
        "depth": 3,
        "attention": "none",
    },
    "train": {
        "learning_rate": 0.005,
        "epochs": 30,
        "batch_size": 8,
        "val_fraction": 0.2,
        "alpha": 0.3,
        "beta": 0.7,
    },
    "postprocess": {
        "threshold": 0.5,
    },
    "simulate": {
        "duration_s": 2.0,
        "fundamental_hz": 140.0,
        "n_harmonics": 10,
        "snr_db": 10.0,
        "range_start_m": 30.0,
        "range_end_m": 60.0,
        "elevation_deg": 40.0,
        "revolutions": 0.25,
        "amplitude_rolloff": False,
    },
    "benchmark": {
        "flight_s": 1800.0,
        "noise_s": 300.0,
        "snr_db": 10.0,
        "range_min_m": 10.0,
        "range_max_m": 200.0,
        "base_filters": 8,
        "learning_rate": 0.0005,
        "epochs": 16,
        "batch_size": 8,
        "train_stride": 20,
        "noise_train_stride": 6,
        "ambient_level": 0.3,
        "chunk_frames": 120,
    },
}


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def deep_merge(base: dict, override: dict) -> dict:
    """Nested-dict merge; override wins, scalars replace wholesale."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        if (key in out and isinstance(out[key], dict)
                and isinstance(val, dict)):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _check_known_keys(cfg: dict, ref: dict, path: str = "") -> None:
    for key, val in cfg.items():
        here = f"{path}{key}"
        if key not in ref:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(ref[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {here} must be a section")
            _check_known_keys(val, ref[key], here + ".")


def validate_config(cfg: dict) -> None:
    _check_known_keys(cfg, DEFAULTS)
    if cfg["version"] != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg['version']!r}; "
                          f"this build reads version {CONFIG_VERSION}")
    g = cfg["grid"]
    if g["az_step_deg"] <= 0 or g["el_step_deg"] <= 0:
        raise ConfigError("grid steps must be positive")
    if abs(360.0 / g["az_step_deg"] - round(360.0 / g["az_step_deg"])) > 1e-9:
        raise ConfigError("azimuth step must divide 360")
    b = cfg["band"]
    if not 0.0 < b["lo_hz"] < b["hi_hz"]:
        raise ConfigError("band edges must satisfy 0 < lo < hi")
    if not 1 <= int(b["n_bands"]) == b["n_bands"]:
        raise ConfigError("n_bands must be a positive integer")
    if cfg["label"]["delta_deg"] <= 0:
        raise ConfigError("delta_deg must be positive")
    n = cfg["network"]
    if n["base_filters"] < 1 or n["depth"] < 1:
        raise ConfigError("network size parameters must be positive")
    if n["attention"] not in ("none", "skip", "bottleneck", "both"):
        raise ConfigError(f"unknown attention mode {n['attention']!r}")
    t = cfg["train"]
    if t["learning_rate"] <= 0 or t["epochs"] < 1 or t["batch_size"] < 1:
        raise ConfigError("training hyperparameters out of range")
    if not 0.0 <= t["val_fraction"] < 1.0:
        raise ConfigError("val_fraction must lie in [0, 1)")
    if t["alpha"] <= 0 or t["beta"] <= 0:
        raise ConfigError("loss weights must be positive")
    p = cfg["postprocess"]
    if not 0.0 <= p["threshold"] < 1.0:
        raise ConfigError("threshold must lie in [0, 1)")
    s = cfg["simulate"]
    if s["duration_s"] <= 0:
        raise ConfigError("duration must be positive")
    if s["range_start_m"] <= 0 or s["range_end_m"] <= 0:
        raise ConfigError("ranges must be positive")
    if not 0.0 <= s["elevation_deg"] <= 90.0:
        raise ConfigError("elevation must lie in [0, 90]")
    k = cfg["benchmark"]
    if k["flight_s"] <= 0 or k["noise_s"] < 0:
        raise ConfigError("benchmark durations out of range")
    if k["range_min_m"] <= 0 or k["range_max_m"] <= k["range_min_m"]:
        raise ConfigError("benchmark range bounds out of order")
    if k["train_stride"] < 1 or k["noise_train_stride"] < 1 \
            or k["chunk_frames"] < 1:
        raise ConfigError("benchmark strides must be positive")
    if k["learning_rate"] <= 0:
        raise ConfigError("benchmark learning rate must be positive")
    if int(cfg["seed"]) != cfg["seed"]:
        raise ConfigError("seed must be an integer")


def load_config(path: Optional[Path] = None,
                overrides: Optional[dict] = None) -> dict:
    """Defaults, then the file (if any), then explicit overrides."""
    cfg = default_config()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        try:
            file_cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = deep_merge(cfg, file_cfg)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def save_config(cfg: dict, path: Path) -> None:
    Path(path).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
