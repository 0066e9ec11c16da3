"""Bit-exact file formats: the tensor container and multichannel WAV.

Both formats are little-endian regardless of host byte order and covered by
golden-file tests.  See docs/formats.md for the byte layouts.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CONTAINER_MAGIC = b"SPHT"
CONTAINER_VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("u1"): 2}
_CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("u1")}


class FormatError(Exception):
    """Malformed file: bad magic, unknown version, or inconsistent header."""


class TruncatedError(FormatError):
    """File ends before the declared payload does."""


def write_tensor(path, array) -> None:
    """Write a float32 or uint8 tensor; layout round-trips bit-exactly."""
    arr = np.ascontiguousarray(array)
    if arr.dtype == np.float64:
        arr = arr.astype("<f4")
    if arr.dtype.newbyteorder("<") not in _DTYPE_CODES:
        raise FormatError(f"unsupported dtype {arr.dtype}")
    arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    code = _DTYPE_CODES[arr.dtype.newbyteorder("<")]
    header = CONTAINER_MAGIC + struct.pack("<HBB", CONTAINER_VERSION, code,
                                           arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise TruncatedError(f"{path}: shorter than fixed header")
    if raw[:4] != CONTAINER_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, code, rank = struct.unpack_from("<HBB", raw, 4)
    if version < 1 or version > CONTAINER_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    offset = 8 + 4 * rank
    if len(raw) < offset:
        raise TruncatedError(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{rank}I", raw, 8)
    dtype = _CODE_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = raw[offset:]
    if len(payload) < expected:
        raise TruncatedError(f"{path}: payload {len(payload)} bytes, "
                             f"expected {expected}")
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


# --- WAV ---------------------------------------------------------------------

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


class WavFormatError(FormatError):
    pass


class WavRateError(WavFormatError):
    """Sample rate differs from the one the pipeline requires."""


def write_wav(path, channels, sample_rate_hz, sample_format="float32"):
    """Write a multichannel WAV file.

    channels : (n_ch, n_samples) array, values nominally in [-1, 1]
    sample_format : "float32", "int16", or "int24"
    """
    data = np.asarray(channels, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("channels must be 2-D (n_ch, n_samples)")
    n_ch, n_samples = data.shape
    interleaved = data.T  # frame-major

    if sample_format == "float32":
        fmt_tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
        payload = interleaved.astype("<f4").tobytes()
    elif sample_format == "int16":
        fmt_tag, bits = _WAVE_FORMAT_PCM, 16
        q = np.clip(np.round(interleaved * 32768.0), -32768, 32767)
        payload = q.astype("<i2").tobytes()
    elif sample_format == "int24":
        fmt_tag, bits = _WAVE_FORMAT_PCM, 24
        q = np.clip(np.round(interleaved * 8388608.0), -8388608, 8388607)
        b = np.ascontiguousarray(q, dtype="<i4").view("u1").reshape(-1, 4)
        payload = np.ascontiguousarray(b[:, :3]).tobytes()
    else:
        raise ValueError(f"unknown sample_format {sample_format!r}")

    block_align = n_ch * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, n_ch, int(sample_rate_hz),
                      int(sample_rate_hz) * block_align, block_align, bits)
    chunks = [(b"fmt ", fmt)]
    if fmt_tag == _WAVE_FORMAT_IEEE_FLOAT:
        chunks.append((b"fact", struct.pack("<I", n_samples)))
    chunks.append((b"data", payload))

    body = b""
    for cid, cdata in chunks:
        body += cid + struct.pack("<I", len(cdata)) + cdata
        if len(cdata) % 2:
            body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", 4 + len(body))
                           + b"WAVE" + body)


def read_wav(path, enforce_rate_hz=None):
    """Read a multichannel WAV file into float64 channels in [-1, 1].

    Returns (sample_rate_hz, channels) with channels shaped (n_ch, n_samples).
    Supports 16/24-bit PCM and 32-bit float.  ``enforce_rate_hz`` rejects
    files at any other rate (the pipeline runs at 48 kHz only).
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        size = struct.unpack_from("<I", raw, pos + 4)[0]
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise TruncatedError(f"{path}: chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size % 2)
    if fmt is None or data is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")

    fmt_tag, n_ch, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if enforce_rate_hz is not None and rate != enforce_rate_hz:
        raise WavRateError(f"{path}: sample rate {rate}, "
                           f"pipeline requires {enforce_rate_hz}")

    if fmt_tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        flat = np.frombuffer(data, dtype="<f4").astype(np.float64)
    elif fmt_tag == _WAVE_FORMAT_PCM and bits == 16:
        flat = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif fmt_tag == _WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(data, dtype="u1").reshape(-1, 3)
        as32 = np.zeros((b.shape[0], 4), dtype="u1")
        as32[:, 1:] = b
        flat = (as32.view("<i4").ravel() >> 8).astype(np.float64) / 8388608.0
    else:
        raise WavFormatError(f"{path}: unsupported format tag {fmt_tag} "
                             f"at {bits} bits")

    n_frames = flat.size // n_ch
    return rate, flat[:n_frames * n_ch].reshape(n_frames, n_ch).T.copy()
