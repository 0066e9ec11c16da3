import numpy as np
import pytest

from beamseg.geometry import MicArrayGeometry, default_array


@pytest.fixture(scope="session")
def rig() -> MicArrayGeometry:
    return default_array()


@pytest.fixture(scope="session")
def small_rig() -> MicArrayGeometry:
    # compact 8-mic cube, 30 cm edge; cheap enough for per-test rendering
    pts = np.array([[x, y, z] for x in (-0.15, 0.15)
                    for y in (-0.15, 0.15) for z in (-0.15, 0.15)])
    return MicArrayGeometry(mic_positions=pts)
