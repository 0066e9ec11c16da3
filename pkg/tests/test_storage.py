"""Container and WAV formats: golden bytes, header arithmetic, rejection."""

import struct
from pathlib import Path

import numpy as np
import pytest

from beamseg.storage import (CONTAINER_MAGIC, CONTAINER_VERSION, FormatError,
                             TruncatedError, WavFormatError, WavRateError,
                             read_tensor, read_wav, write_tensor, write_wav)

GOLDEN = Path(__file__).parent / "golden"


def golden_f32():
    return ((np.arange(24).reshape(2, 3, 4) - 7.5) / 4.25).astype(np.float32)


def golden_u8():
    return np.arange(15, dtype=np.uint8).reshape(3, 5) * 7 % 4


def golden_ramp():
    n = 32
    return np.stack([np.linspace(-1.0, 1.0, n), np.linspace(1.0, -1.0, n)])


def golden_tone():
    t = np.arange(48) / 48000.0
    return np.stack([0.5 * np.sin(2 * np.pi * 1000 * t),
                     0.25 * np.cos(2 * np.pi * 2000 * t),
                     np.linspace(0, 0.9, 48)])


def test_golden_tensor_reads_back_exact():
    got = read_tensor(GOLDEN / "tensor_f32.spht")
    assert got.dtype == np.float32
    np.testing.assert_array_equal(got, golden_f32())
    got = read_tensor(GOLDEN / "tensor_u8.spht")
    assert got.dtype == np.uint8
    np.testing.assert_array_equal(got, golden_u8())


def test_writer_reproduces_golden_bytes(tmp_path):
    write_tensor(tmp_path / "a.spht", golden_f32())
    assert (tmp_path / "a.spht").read_bytes() == \
        (GOLDEN / "tensor_f32.spht").read_bytes()
    write_tensor(tmp_path / "b.spht", golden_u8())
    assert (tmp_path / "b.spht").read_bytes() == \
        (GOLDEN / "tensor_u8.spht").read_bytes()


def test_container_header_layout():
    raw = (GOLDEN / "tensor_f32.spht").read_bytes()
    assert raw[:4] == CONTAINER_MAGIC == b"SPHT"
    version, code, rank = struct.unpack_from("<HBB", raw, 4)
    assert version == CONTAINER_VERSION == 1
    assert code == 1  # float32
    assert rank == 3
    assert struct.unpack_from("<3I", raw, 8) == (2, 3, 4)
    # fixed header 8 + rank*4 dims + payload
    assert len(raw) == 8 + 12 + 24 * 4


def test_energy_tensor_file_size(tmp_path):
    arr = np.zeros((90, 23, 16), dtype=np.float32)
    write_tensor(tmp_path / "e.spht", arr)
    assert (tmp_path / "e.spht").stat().st_size == 8 + 12 + 90 * 23 * 16 * 4


def test_tensor_round_trip_random(tmp_path):
    rng = np.random.default_rng(0)
    for shape in [(7,), (3, 5), (2, 3, 4, 5)]:
        a = rng.standard_normal(shape).astype(np.float32)
        write_tensor(tmp_path / "t.spht", a)
        np.testing.assert_array_equal(read_tensor(tmp_path / "t.spht"), a)
        b = rng.integers(0, 2, shape).astype(np.uint8)
        write_tensor(tmp_path / "t.spht", b)
        np.testing.assert_array_equal(read_tensor(tmp_path / "t.spht"), b)


def test_float64_input_is_stored_as_float32(tmp_path):
    a = np.array([1.0, 1.0 + 1e-12])
    write_tensor(tmp_path / "t.spht", a)
    back = read_tensor(tmp_path / "t.spht")
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, a.astype(np.float32))


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(FormatError):
        write_tensor(tmp_path / "t.spht", np.zeros(3, dtype=np.int64))


def test_bad_magic_rejected(tmp_path):
    write_tensor(tmp_path / "t.spht", np.zeros(3, dtype=np.float32))
    raw = bytearray((tmp_path / "t.spht").read_bytes())
    raw[:4] = b"NOPE"
    (tmp_path / "bad.spht").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_tensor(tmp_path / "bad.spht")


def test_truncated_payload_rejected(tmp_path):
    write_tensor(tmp_path / "t.spht", np.zeros(10, dtype=np.float32))
    raw = (tmp_path / "t.spht").read_bytes()
    (tmp_path / "cut.spht").write_bytes(raw[:-5])
    with pytest.raises(TruncatedError):
        read_tensor(tmp_path / "cut.spht")
    (tmp_path / "hdr.spht").write_bytes(raw[:6])
    with pytest.raises(TruncatedError):
        read_tensor(tmp_path / "hdr.spht")


def test_trailing_bytes_rejected(tmp_path):
    write_tensor(tmp_path / "t.spht", np.zeros(4, dtype=np.uint8))
    raw = (tmp_path / "t.spht").read_bytes()
    (tmp_path / "fat.spht").write_bytes(raw + b"\x00")
    with pytest.raises(FormatError):
        read_tensor(tmp_path / "fat.spht")


def test_unknown_version_and_dtype_rejected(tmp_path):
    write_tensor(tmp_path / "t.spht", np.zeros(2, dtype=np.uint8))
    raw = bytearray((tmp_path / "t.spht").read_bytes())
    raw[4] = 99  # version low byte
    (tmp_path / "v.spht").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_tensor(tmp_path / "v.spht")
    raw = bytearray((tmp_path / "t.spht").read_bytes())
    raw[6] = 9  # dtype code
    (tmp_path / "d.spht").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_tensor(tmp_path / "d.spht")


# --- WAV ---------------------------------------------------------------------

def test_golden_wavs_read_back():
    rate, ch = read_wav(GOLDEN / "ramp_i16.wav")
    assert rate == 48000 and ch.shape == (2, 32)
    assert np.abs(ch - golden_ramp()).max() <= 2 ** -15
    rate, ch = read_wav(GOLDEN / "ramp_i24.wav")
    assert np.abs(ch - golden_ramp()).max() <= 2 ** -23
    rate, ch = read_wav(GOLDEN / "tone_f32.wav")
    assert ch.shape == (3, 48)
    assert np.abs(ch - golden_tone()).max() <= 2 ** -24


def test_wav_writer_reproduces_golden_bytes(tmp_path):
    for name, data, fmt in [("ramp_i16.wav", golden_ramp(), "int16"),
                            ("ramp_i24.wav", golden_ramp(), "int24"),
                            ("tone_f32.wav", golden_tone(), "float32")]:
        write_wav(tmp_path / name, data, 48000, sample_format=fmt)
        assert (tmp_path / name).read_bytes() == \
            (GOLDEN / name).read_bytes(), name


def test_float32_wav_round_trip_exact(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.uniform(-1, 1, (5, 333)).astype(np.float32).astype(np.float64)
    write_wav(tmp_path / "x.wav", data, 48000, sample_format="float32")
    rate, back = read_wav(tmp_path / "x.wav")
    assert rate == 48000
    np.testing.assert_array_equal(back, data)


def test_int24_quantization_bound(tmp_path):
    rng = np.random.default_rng(2)
    data = rng.uniform(-0.99, 0.99, (2, 500))
    write_wav(tmp_path / "x.wav", data, 48000, sample_format="int24")
    _, back = read_wav(tmp_path / "x.wav")
    assert np.abs(back - data).max() <= 2 ** -23


def test_int16_quantization_bound(tmp_path):
    rng = np.random.default_rng(3)
    data = rng.uniform(-0.99, 0.99, (2, 500))
    write_wav(tmp_path / "x.wav", data, 48000, sample_format="int16")
    _, back = read_wav(tmp_path / "x.wav")
    assert np.abs(back - data).max() <= 2 ** -15


def test_wrong_rate_rejected(tmp_path):
    write_wav(tmp_path / "x.wav", np.zeros((1, 10)), 44100,
              sample_format="int16")
    with pytest.raises(WavRateError):
        read_wav(tmp_path / "x.wav", enforce_rate_hz=48000)
    rate, _ = read_wav(tmp_path / "x.wav")  # fine without enforcement
    assert rate == 44100


def test_not_a_wav_rejected(tmp_path):
    (tmp_path / "x.wav").write_bytes(b"RIFFxxxxJUNK" + b"\x00" * 50)
    with pytest.raises(WavFormatError):
        read_wav(tmp_path / "x.wav")
    (tmp_path / "y.wav").write_bytes(b"abc")
    with pytest.raises(WavFormatError):
        read_wav(tmp_path / "y.wav")


def test_odd_data_chunk_is_padded(tmp_path):
    # 1 channel x 5 samples of int24 = 15 payload bytes, needs a pad byte
    data = np.linspace(-0.5, 0.5, 5)[None]
    write_wav(tmp_path / "x.wav", data, 48000, sample_format="int24")
    raw = (tmp_path / "x.wav").read_bytes()
    assert len(raw) % 2 == 0
    riff_size = struct.unpack_from("<I", raw, 4)[0]
    assert riff_size == len(raw) - 8
    _, back = read_wav(tmp_path / "x.wav")
    assert np.abs(back - data).max() <= 2 ** -23


def test_unknown_sample_format_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_wav(tmp_path / "x.wav", np.zeros((1, 4)), 48000,
                  sample_format="int32")
