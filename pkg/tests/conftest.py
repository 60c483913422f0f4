import sys

import numpy as np
import pytest

from levelqa.phantom import PhantomConfig, generate_phantom
from levelqa.schema import default_schema
from levelqa.volume_io import ImageVolume, LabelVolume, VoxelGrid


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Repeat the acceptance verdict lines after the run, outside capture."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICT_LINES", None)
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture
def small_phantom(schema):
    """Default 32x32x32 phantom with three stacked bilateral levels."""
    return generate_phantom(PhantomConfig(seed=0), schema)


def make_grid(dims=(8, 8, 8), spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    return VoxelGrid(dims=tuple(dims), spacing_mm=tuple(spacing), origin_mm=tuple(origin))


def label_volume(arr, spacing=(1.0, 1.0, 1.0), schema_id="hn-levels-20"):
    """Wrap a (nz, ny, nx) uint8 array in a LabelVolume on a unit grid."""
    arr = np.asarray(arr, dtype=np.uint8)
    nz, ny, nx = arr.shape
    grid = make_grid((nx, ny, nz), spacing)
    return LabelVolume(grid=grid, labels=arr, schema_id=schema_id)


def image_volume(arr, spacing=(1.0, 1.0, 1.0)):
    arr = np.asarray(arr, dtype=np.float32)
    nz, ny, nx = arr.shape
    grid = make_grid((nx, ny, nz), spacing)
    return ImageVolume(grid=grid, voxels=arr)
