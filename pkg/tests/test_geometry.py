import json

import numpy as np
import pytest

from beamseg.geometry import (DelayVector, MicArrayGeometry,
                              SteeringDirection, default_array,
                              steering_delay_matrix, steering_delays,
                              unit_vector, unit_vectors)


def test_direction_wraps_azimuth():
    assert SteeringDirection(190.0, 10.0).azimuth_deg == -170.0
    assert SteeringDirection(-180.0, 0.0).azimuth_deg == -180.0
    assert SteeringDirection(180.0, 0.0).azimuth_deg == -180.0
    assert SteeringDirection(540.0, 5.0).azimuth_deg == 180.0 - 360.0


def test_direction_rejects_bad_elevation():
    with pytest.raises(ValueError):
        SteeringDirection(0.0, -1.0)
    with pytest.raises(ValueError):
        SteeringDirection(0.0, 90.1)
    with pytest.raises(ValueError):
        SteeringDirection(np.nan, 10.0)


def test_unit_vector_cardinal_points():
    np.testing.assert_allclose(unit_vector(SteeringDirection(0, 0)),
                               [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(unit_vector(SteeringDirection(90, 0)),
                               [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(unit_vector(SteeringDirection(0, 90)),
                               [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(unit_vector(SteeringDirection(-90, 0)),
                               [0, -1, 0], atol=1e-15)


def test_unit_vectors_match_scalar_version():
    rng = np.random.default_rng(3)
    az = rng.uniform(-180, 180, 40)
    el = rng.uniform(0, 90, 40)
    batch = unit_vectors(az, el)
    for i in range(40):
        one = unit_vector(SteeringDirection(az[i], el[i]))
        np.testing.assert_allclose(batch[i], one, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(batch, axis=-1), 1.0,
                               atol=1e-12)


def test_geometry_validation():
    with pytest.raises(ValueError):
        MicArrayGeometry(mic_positions=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        MicArrayGeometry(mic_positions=np.zeros((2, 3)))  # duplicate mics
    with pytest.raises(ValueError):
        MicArrayGeometry(mic_positions=np.array([[0, 0, np.inf]]))
    with pytest.raises(ValueError):
        MicArrayGeometry(mic_positions=np.array([[0.0, 0, 0], [1, 0, 0]]),
                         speed_of_sound=0.0)


def test_single_mic_rig_is_allowed():
    g = MicArrayGeometry(mic_positions=np.array([[0.1, 0.0, 0.0]]))
    assert g.mic_count == 1
    assert g.aperture == 0.0
    assert g.min_spacing == 0.0


def test_default_array_shape_and_spacing(rig):
    assert rig.mic_count == 24
    assert rig.mic_positions.shape == (24, 3)
    assert 0.03 < rig.min_spacing < 0.08
    assert 1.0 < rig.aperture < 1.2


def test_geometry_json_round_trip(rig):
    back = MicArrayGeometry.from_json(rig.to_json())
    np.testing.assert_array_equal(back.mic_positions, rig.mic_positions)
    assert back.speed_of_sound == rig.speed_of_sound
    assert "mics" in json.loads(rig.to_json())


def test_steering_delay_is_projection(rig):
    rng = np.random.default_rng(11)
    for _ in range(20):
        d = SteeringDirection(rng.uniform(-180, 180), rng.uniform(0, 90))
        dv = steering_delays(rig, d)
        u = unit_vector(d)
        expect = rig.mic_positions @ u / rig.speed_of_sound
        np.testing.assert_allclose(dv.delays, expect, atol=1e-15)


def test_steering_delays_bounded_by_aperture(rig):
    rng = np.random.default_rng(12)
    bound = rig.aperture / rig.speed_of_sound
    for _ in range(50):
        d = SteeringDirection(rng.uniform(-180, 180), rng.uniform(0, 90))
        dv = steering_delays(rig, d)
        assert np.all(np.abs(dv.delays) <= bound + 1e-12)


def test_delay_vector_rejects_overrun():
    with pytest.raises(ValueError):
        DelayVector(delays=np.array([0.01]), aperture=0.5,
                    speed_of_sound=343.0)


def test_delay_matrix_matches_single(rig):
    az = np.array([-120.0, 0.0, 45.0, 179.0])
    el = np.array([5.0, 30.0, 60.0, 88.0])
    mat = steering_delay_matrix(rig, az, el)
    assert mat.shape == (4, rig.mic_count)
    for i in range(4):
        one = steering_delays(rig, SteeringDirection(az[i], el[i]))
        np.testing.assert_allclose(mat[i], one.delays, atol=1e-15)


def test_opposite_directions_negate_delays(rig):
    d = SteeringDirection(30.0, 0.0)
    opp = SteeringDirection(-150.0, 0.0)
    a = steering_delays(rig, d).delays
    b = steering_delays(rig, opp).delays
    np.testing.assert_allclose(a, -b, atol=1e-15)
