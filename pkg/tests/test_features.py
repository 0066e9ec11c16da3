"""Band features and the polar-disk projection."""

import numpy as np
import pytest

from beamseg.beamform import BeamGrid, SnapshotTensor
from beamseg.features import (PolarImage, PolarLayout, SpectralMap,
                              band_bin_ranges, band_edges_hz,
                              band_mean_powers, direction_to_polar,
                              normalize_unit_range, pixel_angles,
                              polar_project, polar_to_direction,
                              spectral_features, valid_disk)
from beamseg.geometry import SteeringDirection
from beamseg.simulate import FRAME_SAMPLES, SAMPLE_RATE_HZ


def test_band_edges_uniform():
    edges = band_edges_hz(16, 200.0, 2200.0)
    assert edges.size == 17
    assert edges[0] == 200.0 and edges[-1] == 2200.0
    np.testing.assert_allclose(np.diff(edges), 125.0)
    with pytest.raises(ValueError):
        band_edges_hz(0)
    with pytest.raises(ValueError):
        band_edges_hz(4, 500.0, 100.0)
    with pytest.raises(ValueError):
        band_edges_hz(4, 0.0, 30000.0)  # above Nyquist


def test_band_bin_ranges_partition_in_band_bins():
    edges = band_edges_hz(16, 200.0, 2200.0)
    ranges = band_bin_ranges(edges, FRAME_SAMPLES)
    # 10 Hz resolution: 200 Hz -> bin 20, 2200 Hz -> bin 220
    assert ranges[0, 0] == 20
    assert ranges[-1, 1] == 220
    # contiguous, non-overlapping
    for b in range(15):
        assert ranges[b, 1] == ranges[b + 1, 0]
    counts = ranges[:, 1] - ranges[:, 0]
    assert counts.sum() == 200
    assert np.all(counts >= 12)


def test_band_bin_ranges_rejects_empty_band():
    # [101, 105) straddles no 10 Hz bin center
    edges = np.array([101.0, 105.0, 200.0])
    with pytest.raises(ValueError):
        band_bin_ranges(edges, FRAME_SAMPLES)


def test_band_mean_power_of_pure_tone():
    edges = band_edges_hz(4, 200.0, 1200.0)
    t = np.arange(FRAME_SAMPLES) / SAMPLE_RATE_HZ
    # 450 Hz sits inside band 1 ([450, 700) starts at bin 45)
    x = np.sin(2 * np.pi * 450.0 * t)
    powers = band_mean_powers(x[None], edges)[0]
    assert np.argmax(powers) == 1
    assert powers[1] > 50 * powers[0]
    assert powers[1] > 50 * powers[2]


def test_band_mean_powers_batch_shape():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 5, FRAME_SAMPLES))
    edges = band_edges_hz(8)
    out = band_mean_powers(x, edges)
    assert out.shape == (3, 5, 8)
    np.testing.assert_allclose(out[1, 2],
                               band_mean_powers(x[1, 2][None], edges)[0])


def test_normalize_unit_range():
    x = np.array([[2.0, 4.0], [6.0, 10.0]])
    n = normalize_unit_range(x)
    assert n.min() == 0.0 and n.max() == 1.0
    np.testing.assert_allclose(n, (x - 2) / 8)
    np.testing.assert_array_equal(normalize_unit_range(np.full((3, 3), 7.0)),
                                  np.zeros((3, 3)))


def test_spectral_features_shape_and_range():
    grid = BeamGrid.from_steps(45.0, 30.0)
    rng = np.random.default_rng(1)
    snap = SnapshotTensor(
        data=rng.standard_normal((grid.n_az, grid.n_el, FRAME_SAMPLES)),
        frame_index=0, azimuths_deg=grid.azimuths_deg,
        elevations_deg=grid.elevations_deg)
    sm = spectral_features(snap, n_bands=6)
    assert sm.data.shape == (grid.n_az, grid.n_el, 6)
    assert sm.data.min() >= 0.0 and sm.data.max() == 1.0


def test_layout_geometry():
    layout = PolarLayout(side=46)
    assert layout.center == 22.5
    assert layout.radius_px == 23.0
    grid = BeamGrid.default()
    assert PolarLayout.for_grid(grid).side == 46
    with pytest.raises(ValueError):
        PolarLayout(side=45)
    with pytest.raises(ValueError):
        PolarLayout(side=2)


def test_zenith_maps_to_center():
    layout = PolarLayout(side=46)
    px, py = direction_to_polar(layout, SteeringDirection(77.0, 90.0))
    assert px == pytest.approx(layout.center, abs=1e-9)
    assert py == pytest.approx(layout.center, abs=1e-9)


def test_horizon_maps_to_rim():
    layout = PolarLayout(side=46)
    px, py = direction_to_polar(layout, SteeringDirection(0.0, 0.0))
    assert px == pytest.approx(layout.center + layout.radius_px)
    assert py == pytest.approx(layout.center)
    # azimuth 90 is up in image coordinates (smaller row index)
    px, py = direction_to_polar(layout, SteeringDirection(90.0, 0.0))
    assert py == pytest.approx(layout.center - layout.radius_px)


def test_projection_round_trip_many_directions():
    layout = PolarLayout(side=46)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        d = SteeringDirection(rng.uniform(-180, 180), rng.uniform(0.5, 89.5))
        px, py = direction_to_polar(layout, d)
        back = polar_to_direction(layout, px, py)
        bx, by = direction_to_polar(layout, back)
        worst = max(worst, np.hypot(bx - px, by - py))
        assert back.elevation_deg == pytest.approx(d.elevation_deg,
                                                   abs=1e-9)
    assert worst < 0.5


def test_polar_to_direction_rejects_outside():
    layout = PolarLayout(side=46)
    with pytest.raises(ValueError):
        polar_to_direction(layout, -1.0, 22.5)


def test_pixel_angles_consistency():
    layout = PolarLayout(side=20)
    az, el, valid = pixel_angles(layout)
    assert az.shape == el.shape == valid.shape == (20, 20)
    assert np.array_equal(valid, valid_disk(layout))
    ys, xs = np.nonzero(valid)
    for y, x in zip(ys[::7], xs[::7]):
        d = polar_to_direction(layout, float(x), float(y))
        assert el[y, x] == pytest.approx(d.elevation_deg, abs=1e-9)
        if el[y, x] < 89.9:
            diff = (az[y, x] - d.azimuth_deg + 180) % 360 - 180
            assert abs(diff) < 1e-9
    assert not valid[0, 0]  # corners lie outside the disk


def test_constant_field_projects_constant():
    grid = BeamGrid.from_steps(10.0, 10.0)
    layout = PolarLayout.for_grid(grid)
    data = np.full((grid.n_az, grid.n_el, 3), 0.625)
    sm = SpectralMap(data=data, azimuths_deg=grid.azimuths_deg,
                     elevations_deg=grid.elevations_deg,
                     band_edges_hz=np.array([0.0, 1.0, 2.0, 3.0]))
    img = polar_project(sm, layout)
    assert np.allclose(img.data[img.validity], 0.625, atol=1e-12)
    assert np.all(img.data[~img.validity] == 0.0)


def test_projection_peak_lands_at_source_pixel():
    grid = BeamGrid.default()
    layout = PolarLayout.for_grid(grid)
    d = SteeringDirection(52.0, 36.0)
    ia = int(np.argmin(np.abs(grid.azimuths_deg - d.azimuth_deg)))
    ie = int(np.argmin(np.abs(grid.elevations_deg - d.elevation_deg)))
    data = np.zeros((grid.n_az, grid.n_el, 1))
    data[ia, ie, 0] = 1.0
    sm = SpectralMap(data=data, azimuths_deg=grid.azimuths_deg,
                     elevations_deg=grid.elevations_deg,
                     band_edges_hz=np.array([0.0, 1.0]))
    img = polar_project(sm, layout)
    py, px = np.unravel_index(np.argmax(img.data[:, :, 0]),
                              img.data.shape[:2])
    ex, ey = direction_to_polar(layout, d)
    assert np.hypot(px - ex, py - ey) < 1.5


def test_projection_wraps_azimuth_seam():
    # energy at the -180/+180 seam must not leak a discontinuity: rotate
    # the grid data by half a turn and the disk image rotates likewise
    grid = BeamGrid.from_steps(10.0, 10.0)
    layout = PolarLayout.for_grid(grid)
    rng = np.random.default_rng(3)
    data = rng.uniform(0, 1, (grid.n_az, grid.n_el, 1))
    sm = SpectralMap(data=data, azimuths_deg=grid.azimuths_deg,
                     elevations_deg=grid.elevations_deg,
                     band_edges_hz=np.array([0.0, 1.0]))
    rolled = SpectralMap(data=np.roll(data, grid.n_az // 2, axis=0),
                         azimuths_deg=grid.azimuths_deg,
                         elevations_deg=grid.elevations_deg,
                         band_edges_hz=np.array([0.0, 1.0]))
    img = polar_project(sm, layout).data[:, :, 0]
    img_r = polar_project(rolled, layout).data[:, :, 0]
    # a 180 degree rotation of the disk is flipping both axes about center
    np.testing.assert_allclose(img_r, img[::-1, ::-1], atol=1e-9)


def test_polar_image_validation():
    layout = PolarLayout(side=8)
    valid = valid_disk(layout)
    bad = np.ones((8, 8, 2))
    with pytest.raises(ValueError):
        PolarImage(data=bad, validity=valid)  # nonzero off-disk
