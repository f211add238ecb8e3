"""Test fixtures for camtomo tests."""

import logging
import os
import tempfile

import numpy as np
import pytest

from camtomo.conditions.condition_checker import Sampling
from camtomo.geometry.builder import build_geometry
from camtomo.geometry.cam import Cam
from camtomo.geometry.surface import spherical_cap
from camtomo.utils.config import Config

from tests.fixtures.geometries import DEFAULT_GEOMETRY, FUNK_GEOMETRY


@pytest.fixture
def cap():
    """Unit-sphere cap {x3 >= 0.4}."""
    return spherical_cap(1.0, 0.4, 2)


@pytest.fixture
def hemisphere():
    """Unit-sphere cap {x3 >= 0.05}."""
    return spherical_cap(1.0, 0.05, 2)


@pytest.fixture
def sphere_cam():
    """Origin-centred spherical cam of radius 0.3."""
    return Cam.sphere(np.zeros(3), 0.3)


@pytest.fixture
def point_cam():
    """Point cam at the origin."""
    return Cam.point(np.zeros(3))


@pytest.fixture
def default_geometry():
    return build_geometry(DEFAULT_GEOMETRY)


@pytest.fixture
def funk_geometry():
    return build_geometry(FUNK_GEOMETRY)


@pytest.fixture
def quick_sampling():
    """Small deterministic sampling budget."""
    return Sampling(pairs=1024, directions=16, qn_pairs=3, incidences=8, nodes_per_incidence=4)


@pytest.fixture
def temp_config_file():
    """Create a temporary configuration file."""
    with tempfile.NamedTemporaryFile(mode="w+", suffix=".yaml", delete=False) as temp_file:
        temp_file.write(
            """
schema_version: 1
name: temp
geometry:
  cam: {variant: ellipsoid, center: [0, 0, 0], radius: 0.3}
  surface: {builtin: spherical_cap, radius: 1.0, level: 0.4, dimension: 2}
grids: {surface: 64, cam: [16, 32], cam_slice: 48}
schedule: {eps0: 8, levels: 3}
seed: 7
"""
        )
        temp_file_path = temp_file.name

    try:
        yield temp_file_path
    finally:
        if os.path.exists(temp_file_path):
            os.unlink(temp_file_path)


@pytest.fixture
def real_config(temp_config_file):
    """Create a Config object with the temp config file."""
    return Config(config_file=temp_config_file)


class RecordingHandler(logging.Handler):
    """Keeps every record it receives."""

    def __init__(self):
        super().__init__(logging.DEBUG)
        self.records = []

    def emit(self, record):
        self.records.append(record)

    def messages(self, level=logging.WARNING):
        return [r.getMessage() for r in self.records if r.levelno == level]


@pytest.fixture
def package_log():
    """Records of the camtomo loggers; the CLI detaches them from the root logger."""
    package_logger = logging.getLogger("camtomo")
    handler = RecordingHandler()
    package_logger.addHandler(handler)
    try:
        yield handler
    finally:
        package_logger.removeHandler(handler)
