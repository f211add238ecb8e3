"""Desk-scale acceptance runs on the shipped presets.

These take minutes; they only run with CAMTOMO_RUN_SLOW set.
"""

import math
import os

import numpy as np
import pytest

from camtomo.conditions.condition_checker import PASS, Sampling, check_E, check_I, check_III
from camtomo.geometry.affine import AffineMap
from camtomo.harness.experiment import ExperimentConfig, run_convergence, run_roundtrip
from camtomo.inversion.reconstruction import incidence_data, normalizer, reconstruct_grid
from camtomo.inversion.singular import finite_part
from camtomo.transform.forward import forward, project, thin_slab_oracle
from camtomo.utils.config import Config
from camtomo.utils.presets import PresetManager

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(
        os.environ.get("CAMTOMO_RUN_SLOW") is None,
        reason="CAMTOMO_RUN_SLOW environment variable is required for acceptance runs",
    ),
]


def load_preset(name, tmp_path, **overrides):
    mapping = PresetManager(Config()).apply_preset(name)
    cfg = ExperimentConfig.from_mapping(mapping)
    overrides.setdefault("output", {"directory": str(tmp_path / name)})
    return cfg.with_overrides(overrides)


@pytest.fixture
def default_cap(tmp_path):
    return load_preset("default_cap", tmp_path)


def test_forward_matches_thin_slab_oracle(default_cap):
    geometry = default_cap.build_geometry()
    field = default_cap.build_phantom(geometry).as_field()
    grid = default_cap.cam_grid(geometry.dimension)
    picks = np.linspace(0, len(grid.nodes) - 1, 10).astype(int)

    checked = 0
    for k in picks:
        p = geometry.cam.point_at(grid.nodes[k])
        value = forward(field, p, geometry.surface, int(default_cap.grids["surface"]))
        estimate = thin_slab_oracle(field, p, geometry.surface, eps=1e-3, samples=1_000_000, seed=int(k))
        if estimate.hits == 0 and value == 0.0:
            continue
        assert abs(value - estimate.value) <= max(0.01 * abs(value), 3.0 * estimate.stderr)
        checked += 1
    assert checked > 0


def test_default_cap_roundtrip(default_cap):
    report = run_roundtrip(default_cap)

    assert report.conditions is not None
    assert report.metrics["linf"] <= 0.05
    assert report.metrics["l2"] <= 0.02
    assert not report.diverged
    assert os.path.exists(os.path.join(default_cap.output_directory, "report.json"))


def test_calibration_constant(default_cap):
    report = run_roundtrip(default_cap, check=False)

    assert report.metrics["calibration"] == pytest.approx(1.0, abs=0.02)
    assert report.metrics["implied_j_factor"] == pytest.approx(1.0, abs=0.01)


def test_default_cap_convergence(default_cap):
    table = run_convergence(default_cap, levels=3)

    assert len(table.rows) == 3
    assert table.is_monotone()
    assert table.rows[-1]["linf"] < table.rows[0]["linf"]
    assert table.observed_order is not None and table.observed_order >= 1.0


def test_finite_part_stabilizes_over_levels(default_cap):
    geometry = default_cap.build_geometry()
    field = default_cap.build_phantom(geometry).as_field()
    sinogram = project(field, geometry, default_cap.cam_grid(2), int(default_cap.grids["surface"]))

    u = np.array([0.1, 0.05])
    x = geometry.surface.points(u)
    h = incidence_data(u, geometry.cam, geometry.surface, 192, sinogram.grid.step).singular_step

    limit = finite_part(sinogram, x, geometry.cam, 2, default_cap.schedule, h)

    assert not limit.diverging
    assert limit.residual <= 0.005 * abs(limit.value)


@pytest.mark.parametrize("preset", ["default_cap", "funk_hemisphere"])
def test_condition_iii_vanishes(preset, tmp_path):
    cfg = load_preset(preset, tmp_path)
    geometry = cfg.build_geometry()

    report = check_III(geometry.surface, geometry.cam, Sampling(qn_pairs=20), cfg.schedule)

    assert report.status == PASS
    assert report.samples >= 20


def test_funk_hemisphere_roundtrip(tmp_path):
    cfg = load_preset("funk_hemisphere", tmp_path)
    geometry = cfg.build_geometry()

    for u in ([0.0, 0.0], [0.3, -0.2], [-0.5, 0.4]):
        assert normalizer(np.array(u), geometry.cam, geometry.surface, 192) == pytest.approx(1.0, abs=1e-3)

    report = run_roundtrip(cfg)
    assert report.metrics["linf"] <= 0.05


def test_affine_invariance(tmp_path):
    cfg = load_preset("default_cap", tmp_path, grids={"surface": 128, "cam": [64, 128], "cam_slice": 96})
    geometry = cfg.build_geometry()
    phantom = cfg.build_phantom(geometry)
    field = phantom.as_field()
    points = cfg.evaluation_points(geometry, phantom)

    transform = AffineMap(
        np.array([[1.3, 0.2, 0.0], [-0.1, 0.9, 0.3], [0.05, 0.0, 1.1]]), np.array([0.2, -0.1, 0.4])
    )
    moved = geometry.transformed(transform)

    reports = []
    for g in (geometry, moved):
        sinogram = project(field, g, cfg.cam_grid(2), int(cfg.grids["surface"]))
        reports.append(
            reconstruct_grid(sinogram, g, points, schedule=cfg.schedule, cam_slice_resolution=96)
        )

    original, transported = reports
    scale = float(np.max(np.abs(original.values)))
    assert np.max(np.abs(transported.values - original.values)) <= 1e-6 * scale


def test_conformal_metric_roundtrip(tmp_path):
    report = run_roundtrip(load_preset("conformal_cap", tmp_path))

    assert report.metrics["linf"] <= 0.05


def test_odd_branch_three_cap(tmp_path):
    report = run_roundtrip(load_preset("cap_3d", tmp_path))

    assert report.dimension == 3
    assert report.metrics["linf"] <= 0.15


def test_validators_on_presets(tmp_path):
    default = load_preset("default_cap", tmp_path).build_geometry()
    wide = load_preset("wide_cam", tmp_path).build_geometry()
    sampling = Sampling()

    passing = check_E(default.surface, default.cam, sampling)
    assert passing.passed
    assert passing.margin == pytest.approx(0.4 / 0.3 - 1.0, rel=0.05)

    failing = check_E(wide.surface, wide.cam, sampling)
    assert not failing.passed
    assert failing.witness is not None
    assert "chord" in failing.witness["kind"]

    injective = check_I(default.surface, default.cam, sampling)
    assert injective.passed
    assert injective.margin > 1e-3
    assert math.isfinite(injective.margin)
