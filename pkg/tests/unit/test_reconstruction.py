"""Unit tests for the normalizer, pointwise inversion and reports."""

import json
import math
import os
import tempfile

import numpy as np
import pytest

from camtomo.geometry.cam import Cam
from camtomo.inversion.reconstruction import (
    error_metrics,
    incidence_data,
    inversion_constant,
    normalizer,
    reconstruct,
    reconstruct_grid,
    sphere_area,
)
from camtomo.inversion.singular import RegularizationSchedule
from camtomo.transform.cam_grid import CamGrid
from camtomo.transform.sinogram import Sinogram
from camtomo.utils.errors import GeometryError, GeometryMismatchError


def _zero_sinogram(geometry, resolution=(8, 16)):
    grid = CamGrid.build(geometry.dimension, resolution)
    return Sinogram(grid=grid, values=np.zeros(len(grid)), meta={"hash": geometry.config_hash})


@pytest.mark.parametrize("dimension,expected", [(1, 2.0 * math.pi), (2, 4.0 * math.pi), (3, 2.0 * math.pi**2)])
def test_sphere_area(dimension, expected):
    assert sphere_area(dimension) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("u", [[0.0, 0.0], [0.2, -0.1], [-0.5, 0.6]])
def test_point_cam_normalizer_is_one(hemisphere, point_cam, u):
    """Funk case: D_2 = 1 everywhere on the sphere."""
    assert normalizer(np.array(u), point_cam, hemisphere, 192) == pytest.approx(1.0, abs=1e-3)


def test_normalizer_positive_for_sphere_cam(cap, sphere_cam):
    assert normalizer(np.array([0.1, 0.2]), sphere_cam, cap, 96) > 0.0


def test_singular_step_scales_with_cam_step(cap, sphere_cam):
    u = np.array([0.1, 0.2])
    coarse = incidence_data(u, sphere_cam, cap, 96, cam_step=0.2)
    fine = incidence_data(u, sphere_cam, cap, 96, cam_step=0.1)

    assert coarse.singular_step == pytest.approx(2.0 * fine.singular_step)
    assert fine.normalizer == pytest.approx(coarse.normalizer)


def test_normalizer_rejects_points_inside_cam(cap):
    with pytest.raises(GeometryError):
        normalizer(np.array([0.0, 0.0]), Cam.sphere(np.zeros(3), 1.5), cap)


def test_reconstruct_rejects_foreign_sinogram(default_geometry, funk_geometry):
    with pytest.raises(GeometryMismatchError):
        reconstruct(_zero_sinogram(funk_geometry), np.array([0.0, 0.0]), default_geometry)


def test_reconstruct_rejects_points_outside_domain(default_geometry):
    with pytest.raises(GeometryError):
        reconstruct(_zero_sinogram(default_geometry), np.array([0.9, 0.9]), default_geometry)


def test_zero_sinogram_reconstructs_zero(default_geometry):
    points = np.array([[0.0, 0.0], [0.1, -0.2], [-0.3, 0.1]])
    report = reconstruct_grid(
        _zero_sinogram(default_geometry),
        default_geometry,
        points,
        schedule=RegularizationSchedule(),
        cam_slice_resolution=64,
        workers=2,
    )

    np.testing.assert_array_equal(report.values, np.zeros(3))
    assert not report.diverged
    assert report.metrics is None
    assert np.all(report.normalizers > 0.0)
    assert np.all(report.singular_steps > 0.0)


def test_error_metrics_uniform_factor():
    """A reconstruction off by 2 reports calibration 2 and j scaled by sqrt(2)."""
    truth = np.array([0.0, 0.5, 1.0, 0.25])
    metrics = error_metrics(2.0 * truth, truth, truth > 0, 2)

    assert metrics["linf"] == pytest.approx(1.0)
    assert metrics["l2"] == pytest.approx(1.0)
    assert metrics["calibration"] == pytest.approx(2.0)
    assert metrics["implied_j_factor"] == pytest.approx(math.sqrt(2.0))
    assert metrics["support_points"] == 3


def test_error_metrics_zero_truth():
    metrics = error_metrics(np.array([0.1, -0.2]), np.zeros(2), np.zeros(2, dtype=bool), 2)

    assert metrics["linf"] == pytest.approx(0.2)
    assert metrics["calibration"] is None
    assert metrics["support_points"] == 2


def test_report_files(default_geometry):
    points = np.array([[0.0, 0.0], [0.1, 0.1]])
    report = reconstruct_grid(_zero_sinogram(default_geometry), default_geometry, points, cam_slice_resolution=64)
    report.truth = np.array([0.0, 0.5])

    with tempfile.TemporaryDirectory() as temp_dir:
        json_path = os.path.join(temp_dir, "report.json")
        csv_path = os.path.join(temp_dir, "field.csv")
        report.save_json(json_path)
        report.write_csv(csv_path)
        with open(json_path) as f:
            data = json.load(f)
        with open(csv_path) as f:
            lines = f.read().splitlines()

    assert data["hash"] == default_geometry.config_hash
    assert data["n"] == 2
    assert data["diverged"] is False
    assert len(data["points"]) == 2
    assert data["points"][1]["u"] == [0.1, 0.1]
    assert lines[0] == "u1,u2,f_rec,f_true,abs_err"
    assert len(lines) == 3


@pytest.mark.parametrize(
    "n,expected",
    [(2, -1.0 / (4.0 * math.pi**2)), (3, -1.0 / (8.0 * math.pi**2)), (4, 6.0 / (16.0 * math.pi**4))],
)
def test_inversion_constant(n, expected):
    assert inversion_constant(n) == pytest.approx(expected, rel=1e-12)


def test_reconstruct_is_linear_in_the_sinogram(default_geometry):
    grid = CamGrid.build(2, (8, 16))
    meta = {"hash": default_geometry.config_hash}
    first = Sinogram(grid=grid, values=1.0 + grid.nodes[:, 0], meta=meta)
    second = Sinogram(grid=grid, values=grid.nodes[:, 2] ** 2, meta=meta)
    combined = Sinogram(grid=grid, values=2.0 * first.values - 0.5 * second.values, meta=meta)
    u = np.array([0.1, -0.2])

    def value(sinogram):
        return reconstruct(sinogram, u, default_geometry, cam_slice_resolution=64).value

    expected = 2.0 * value(first) - 0.5 * value(second)
    assert value(combined) == pytest.approx(expected, rel=1e-10, abs=1e-10)
