import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tfusplan.phantom import ShellPhantomSpec, make_shell_phantom
from tfusplan.volume import Unit, Volume, WorldPoint


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def small_hu_volume():
    data = np.zeros((8, 8, 8), dtype=np.float32)
    data[2:6, 2:6, 2:6] = 1200.0
    return Volume(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), unit=Unit.HU)


UNIFORM_SHELL = ShellPhantomSpec(
    outer_radius=30.0,
    inner_radius=24.0,
    cortical_thickness=3.0,
    cortical_hu=800.0,
    trabecular_hu=800.0,
    center=WorldPoint(0.0, 0.0, 0.0),
)

LAYERED_SHELL = ShellPhantomSpec(
    outer_radius=30.0,
    inner_radius=24.0,
    cortical_thickness=2.0,
    cortical_hu=2000.0,
    trabecular_hu=1000.0,
    center=WorldPoint(0.0, 0.0, 0.0),
)


@pytest.fixture(scope="session")
def uniform_shell_volume():
    # 800 HU against the 400 HU threshold puts the half-level crossing right
    # on the voxel-extent boundary, so thickness reads back unbiased.
    return make_shell_phantom(UNIFORM_SHELL, dims=(140, 140, 140), spacing=(0.5, 0.5, 0.5))


@pytest.fixture(scope="session")
def layered_shell_volume():
    return make_shell_phantom(LAYERED_SHELL, dims=(140, 140, 140), spacing=(0.5, 0.5, 0.5))
