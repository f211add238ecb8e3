"""Unit tests for closed-form phantoms."""

import numpy as np
import pytest

from camtomo.harness.phantoms import PHANTOM_KINDS, evaluation_points, make_phantom
from camtomo.utils.errors import ConfigError


def test_radial_bump_values(cap):
    phantom = make_phantom({"kind": "radial_bump", "center": [0.1, 0.0], "width": 0.3, "amplitude": 2.0}, cap)

    assert float(phantom(np.array([0.1, 0.0]))) == pytest.approx(2.0)
    assert float(phantom(np.array([0.1, 0.35]))) == 0.0
    assert 0.0 < float(phantom(np.array([0.1, 0.15]))) < 2.0


def test_sum_of_bumps_adds_components(cap):
    spec = {"kind": "sum_of_bumps", "centers": [[-0.2, 0.0], [0.2, 0.0]], "width": 0.15, "amplitudes": [1.0, -0.5]}
    phantom = make_phantom(spec, cap)

    assert len(phantom.components) == 2
    assert float(phantom(np.array([-0.2, 0.0]))) == pytest.approx(1.0)
    assert float(phantom(np.array([0.2, 0.0]))) == pytest.approx(-0.5)
    assert float(phantom(np.array([0.0, 0.0]))) == 0.0


def test_sum_of_bumps_rejects_mismatched_lists(cap):
    spec = {"kind": "sum_of_bumps", "centers": [[-0.2, 0.0], [0.2, 0.0]], "widths": [0.1, 0.1, 0.1]}
    with pytest.raises(ConfigError):
        make_phantom(spec, cap)


def test_zonal_ring_peaks_at_radius(cap):
    phantom = make_phantom({"kind": "zonal", "center": [0.0, 0.0], "radius": 0.3, "width": 0.1}, cap)

    assert float(phantom(np.array([0.3, 0.0]))) == pytest.approx(1.0)
    assert float(phantom(np.array([0.0, -0.3]))) == pytest.approx(1.0)
    assert float(phantom(np.array([0.0, 0.0]))) == 0.0
    assert phantom.components[0].support_radius == pytest.approx(0.4)


def test_indicator_smoothed_plateau(cap):
    phantom = make_phantom({"kind": "indicator_smoothed", "center": [0.0, 0.0], "radius": 0.3, "width": 0.1}, cap)

    assert float(phantom(np.array([0.0, 0.0]))) == pytest.approx(1.0)
    assert float(phantom(np.array([0.15, 0.0]))) == pytest.approx(1.0)
    assert float(phantom(np.array([0.3, 0.0]))) == 0.0
    assert 0.0 < float(phantom(np.array([0.25, 0.0]))) < 1.0


def test_indicator_needs_width_below_radius(cap):
    with pytest.raises(ConfigError):
        make_phantom({"kind": "indicator_smoothed", "center": [0.0, 0.0], "radius": 0.1, "width": 0.2}, cap)


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "gaussian"},
        {"kind": "radial_bump", "centers": [[0.0, 0.0], [0.1, 0.1]]},
        {"kind": "radial_bump", "center": [0.0, 0.0, 0.0]},
        {"kind": "radial_bump", "center": [0.0, 0.0], "width": -0.1},
    ],
)
def test_invalid_phantom_specs(cap, spec):
    with pytest.raises(ConfigError):
        make_phantom(spec, cap)


def test_support_must_stay_inside_domain(cap):
    """The cap's chart is a ball of radius 0.6547; the bump would cross its edge."""
    with pytest.raises(ConfigError):
        make_phantom({"kind": "radial_bump", "center": [0.5, 0.0], "width": 0.3}, cap)


def test_zero_phantom(cap):
    phantom = make_phantom({"kind": "radial_bump", "center": [0.0, 0.0], "amplitude": 0.0}, cap)
    field = phantom.as_field()

    assert phantom.is_zero
    assert field.is_zero
    assert np.all(field(cap.grid_nodes(8)) == 0.0)

    points = evaluation_points(phantom, cap, 5, 2, 64)
    assert len(points) > 0
    assert np.all(cap.domain.contains(points))


def test_field_support_box(cap):
    spec = {"kind": "sum_of_bumps", "centers": [[-0.2, 0.0], [0.1, 0.2]], "widths": [0.1, 0.2]}
    field = make_phantom(spec, cap).as_field()

    np.testing.assert_allclose(field.support_lo, [-0.3, -0.1])
    np.testing.assert_allclose(field.support_hi, [0.3, 0.4])
    assert field.smoothness == float("inf")


def test_evaluation_points_cover_support(cap):
    phantom = make_phantom({"kind": "radial_bump", "center": [0.1, 0.05], "width": 0.3}, cap)
    points = evaluation_points(phantom, cap, 4, 2, 64)

    assert points.shape == (16, 2)
    np.testing.assert_allclose(points.min(axis=0), [-0.2, -0.25])
    np.testing.assert_allclose(points.max(axis=0), [0.4, 0.35])


def test_evaluation_points_respect_margin(cap):
    phantom = make_phantom({"kind": "radial_bump", "center": [0.0, 0.0], "amplitude": 0.0}, cap)
    margin = 2 * cap.domain.cell_size(64)
    points = evaluation_points(phantom, cap, 9, 2, 64)

    assert np.all(np.linalg.norm(points, axis=1) <= cap.domain.ball_radius - margin + 1e-12)


def test_phantom_spec(cap):
    phantom = make_phantom({"kind": "zonal", "center": [0.0, 0.0], "radius": 0.2, "width": 0.1}, cap)

    assert phantom.spec()["kind"] == "zonal"
    assert phantom.spec()["radii"] == [0.2]
    assert set(PHANTOM_KINDS) == {"radial_bump", "sum_of_bumps", "zonal", "indicator_smoothed"}
