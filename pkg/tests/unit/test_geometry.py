"""Unit tests for cams, hypersurfaces, affine transport and the geometry builder."""

import math

import numpy as np
import pytest

from camtomo.geometry.affine import INDUCED, AffineMap, affine_pushforward
from camtomo.geometry.builder import build_geometry
from camtomo.geometry.cam import (
    Cam,
    cam_measure_density,
    grad_x_phi_cotangent_norm,
    incidence_coefficients,
    phi,
    phi_omega_gradient,
    phi_prime,
)
from camtomo.geometry.surface import ParameterDomain, ellipsoid_patch, paraboloid_graph, spherical_cap
from camtomo.utils.errors import ConfigError, GeometryError

from tests.fixtures.geometries import DEFAULT_GEOMETRY


def _unit(vectors):
    vectors = np.asarray(vectors, dtype=float)
    return vectors / np.linalg.norm(vectors, axis=-1, keepdims=True)


OMEGAS = _unit([[1.0, 0.0, 0.0], [0.3, -0.4, 0.8], [-0.5, 0.5, 0.2], [0.0, 0.0, -1.0]])


def test_cam_rejects_non_spd_matrix():
    """Indefinite matrices are not cams."""
    with pytest.raises(GeometryError):
        Cam(center=np.zeros(3), matrix=np.diag([1.0, -1.0, 1.0]))


def test_cam_rejects_bad_frame():
    """A frame must satisfy B B^T = A^{-1}."""
    with pytest.raises(GeometryError):
        Cam(center=np.zeros(3), matrix=np.eye(3), frame=2.0 * np.eye(3))


def test_cam_points_lie_on_cam():
    """sigma(omega) satisfies q = 1 and grad q = M omega."""
    cam = Cam(center=np.array([0.1, 0.0, -0.2]), matrix=np.diag([4.0, 9.0, 16.0]))
    points = cam.points(OMEGAS)

    np.testing.assert_allclose(cam.q(points.sigma), 1.0, atol=1e-12)
    np.testing.assert_allclose(cam.grad_q(points.sigma), points.normal, atol=1e-12)


def test_cam_points_require_unit_vectors(sphere_cam):
    """Non-unit parameters are rejected."""
    with pytest.raises(GeometryError):
        sphere_cam.points(np.array([1.0, 1.0, 0.0]))


def test_phi_vanishes_on_tangent_hyperplane(sphere_cam):
    """Phi(x, sigma) = 0 for x on the tangent hyperplane at sigma."""
    p = sphere_cam.point_at(OMEGAS[1])
    tangent = np.cross(p.normal, [1.0, 0.0, 0.0])
    x = p.sigma + 0.7 * tangent

    assert abs(float(phi(x, sphere_cam, p))) < 1e-12


def test_phi_prime_matches_phi_on_cam(sphere_cam):
    """On the cam, <x - e, grad q> - 2 equals Phi."""
    points = sphere_cam.points(OMEGAS)
    x = np.array([0.2, -0.5, 0.9])

    np.testing.assert_allclose(phi_prime(x, sphere_cam, points), phi(x, sphere_cam, points), atol=1e-12)


def test_phi_prime_undefined_for_point_cam(point_cam):
    """The linearised form needs an ellipsoid."""
    with pytest.raises(GeometryError):
        phi_prime(np.ones(3), point_cam, point_cam.point_at(OMEGAS[0]))


@pytest.mark.parametrize("cam_name", ["sphere_cam", "point_cam"])
def test_incidence_coefficients_reproduce_phi(request, cam_name):
    """Phi(x, sigma(omega)) = <a, omega> - b."""
    cam = request.getfixturevalue(cam_name)
    x = np.array([0.4, 0.1, 0.8])
    a, b = incidence_coefficients(x, cam)

    np.testing.assert_allclose(OMEGAS @ a - b, phi(x, cam, cam.points(OMEGAS)), atol=1e-12)


def test_phi_omega_gradient_matches_finite_differences(sphere_cam):
    """The tangential gradient of omega -> Phi agrees with central differences."""
    x = np.array([0.4, 0.1, 0.8])
    omega = OMEGAS[1]
    gradient = phi_omega_gradient(x, sphere_cam, omega)
    a, b = incidence_coefficients(x, sphere_cam)
    step = 1e-6
    for direction in np.linalg.svd(omega[None, :])[2][1:]:
        plus = _unit(omega + step * direction)
        minus = _unit(omega - step * direction)
        numeric = (float(plus @ a) - float(minus @ a)) / (2.0 * step)
        assert abs(numeric - float(gradient @ direction)) < 1e-6


def test_cam_density_and_normal_matrix(sphere_cam, point_cam):
    """Sphere of radius r: density r^3 / 2 and M = (2 / r) I."""
    assert sphere_cam.density == pytest.approx(0.3**3 / 2.0)
    np.testing.assert_allclose(sphere_cam.normal_matrix, np.eye(3) * 2.0 / 0.3, atol=1e-12)
    assert point_cam.density == 1.0
    np.testing.assert_allclose(point_cam.normal_matrix, np.eye(3))


@pytest.mark.parametrize("diagonal,expected", [((1.0, 1.0, 1.0), 0.5), ((4.0, 4.0, 4.0), 1.0 / 16.0)])
def test_cam_measure_density_values(diagonal, expected):
    cam = Cam(center=np.zeros(3), matrix=np.diag(diagonal))
    assert cam_measure_density(cam.point_at([0.0, 0.0, 1.0])) == pytest.approx(expected, rel=1e-12)


def test_cam_measure_density_is_shell_volume_rate():
    """Integral of dSigma over the cam is d/dt vol{q <= t} at t = 1, i.e. 2 pi / sqrt(det A)."""
    matrix = np.array([[3.0, 0.5, 0.0], [0.5, 2.0, 0.3], [0.0, 0.3, 1.5]])
    cam = Cam(center=np.array([0.1, 0.0, -0.2]), matrix=matrix)
    total = cam_measure_density(cam.point_at([1.0, 0.0, 0.0])) * 4.0 * math.pi

    assert total == pytest.approx(2.0 * math.pi / math.sqrt(np.linalg.det(matrix)), rel=1e-12)


def test_cotangent_norm_is_one_on_funk_incidences(cap, point_cam):
    """For the point cam at the centre of the unit sphere, omega in Z(x) is tangent to X at x."""
    u = np.array([0.2, -0.1])
    x = cap.points(u)
    omegas = _unit(np.cross(x, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.4, 0.0]]))

    norms = grad_x_phi_cotangent_norm(u, cap, point_cam, point_cam.points(omegas))
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_cotangent_norm_vanishes_for_normal_direction(cap, point_cam):
    u = np.array([0.2, -0.1])
    omega = cap.points(u)

    assert float(grad_x_phi_cotangent_norm(u, cap, point_cam, point_cam.point_at(omega))) < 1e-12


def test_cotangent_norm_matches_finite_differences(cap, sphere_cam):
    """|d_u Phi|_g from central differences of Phi(x(u), sigma) and of the chart."""
    u = np.array([0.1, -0.2])
    p = sphere_cam.point_at(OMEGAS[1])
    step = 1e-6
    offsets = step * np.eye(2)

    levels = [(phi(cap.points(u + d), sphere_cam, p), phi(cap.points(u - d), sphere_cam, p)) for d in offsets]
    gradient = np.array([(plus - minus) / (2 * step) for plus, minus in levels])
    jacobian = np.stack([(cap.points(u + d) - cap.points(u - d)) / (2 * step) for d in offsets], axis=1)
    metric = jacobian.T @ jacobian
    expected = math.sqrt(float(gradient @ np.linalg.solve(metric, gradient)))

    assert float(grad_x_phi_cotangent_norm(u, cap, sphere_cam, p)) == pytest.approx(expected, rel=1e-6)


def test_spherical_cap_chart(cap):
    """Cap points are on the unit sphere and the region boundary is at the level."""
    u = cap.grid_nodes(16)
    np.testing.assert_allclose(np.linalg.norm(cap.points(u), axis=-1), 1.0, atol=1e-12)
    assert np.all(cap.points(u)[:, 2] >= 0.4 - 1e-12)

    rho = cap.domain.ball_radius
    boundary = cap.points(np.array([[rho, 0.0], [0.0, -rho]]))
    np.testing.assert_allclose(boundary[:, 2], 0.4, atol=1e-12)


def test_cap_partials_match_finite_differences(cap):
    """Analytic partials agree with central differences."""
    u = np.array([[0.1, -0.2], [0.3, 0.25], [0.0, 0.0]])
    np.testing.assert_allclose(cap.jacobian(u), cap.finite_difference_jacobian(u), atol=1e-8)


def test_cap_volume_density(cap):
    """The stereographic chart is conformal: sqrt(det g) = (2 / (1 + |u|^2))^2."""
    u = np.array([[0.1, -0.2], [0.5, 0.1]])
    expected = (2.0 / (1.0 + np.sum(u * u, axis=1))) ** 2

    np.testing.assert_allclose(cap.volume_density(u), expected, rtol=1e-12)


def test_cap_level_out_of_range():
    with pytest.raises(GeometryError):
        spherical_cap(1.0, 1.2, 2)


def test_ellipsoid_patch_points():
    """Patch points satisfy the ellipsoid equation."""
    patch = ellipsoid_patch([1.0, 2.0, 0.5], level=0.4)
    x = patch.points(patch.grid_nodes(8))

    np.testing.assert_allclose((x[:, 0] / 1.0) ** 2 + (x[:, 1] / 2.0) ** 2 + (x[:, 2] / 0.5) ** 2, 1.0, atol=1e-12)


def test_parameter_domain_ball():
    """Ball regions restrict containment and ball checks."""
    domain = ParameterDomain.ball(1.0, 2)

    assert bool(domain.contains(np.array([0.5, 0.5])))
    assert not bool(domain.contains(np.array([0.9, 0.9])))
    assert domain.contains_ball(np.array([0.2, 0.0]), 0.5, margin=0.1)
    assert not domain.contains_ball(np.array([0.6, 0.0]), 0.5)


def test_parameter_domain_rejects_empty_box():
    with pytest.raises(GeometryError):
        ParameterDomain(lo=np.array([0.0, 1.0]), hi=np.array([1.0, 1.0]))


def test_boundary_sample_on_boundary():
    """Boundary samples of a ball region lie on its boundary circle."""
    domain = ParameterDomain.ball(0.7, 2)
    unit = np.random.default_rng(0).random((50, 2))

    np.testing.assert_allclose(np.linalg.norm(domain.boundary_sample(unit), axis=1), 0.7, atol=1e-12)


def test_affine_pushforward_preserves_phi(cap, sphere_cam):
    """Phi and the cotangent norm are unchanged in (u, omega) coordinates."""
    transform = AffineMap(np.array([[1.2, 0.3, 0.0], [0.0, 0.8, 0.1], [0.2, 0.0, 1.5]]), np.array([0.1, -0.2, 0.3]))
    moved_cam, moved_surface = affine_pushforward(sphere_cam, cap, transform)
    u = np.array([[0.1, 0.2], [-0.3, 0.05]])

    before = phi(cap.points(u)[:, None, :], sphere_cam, sphere_cam.points(OMEGAS))
    after = phi(moved_surface.points(u)[:, None, :], moved_cam, moved_cam.points(OMEGAS))
    np.testing.assert_allclose(after, before, atol=1e-12)

    points_before = sphere_cam.points(OMEGAS)
    points_after = moved_cam.points(OMEGAS)
    for k in range(len(u)):
        np.testing.assert_allclose(
            grad_x_phi_cotangent_norm(u[k], moved_surface, moved_cam, points_after),
            grad_x_phi_cotangent_norm(u[k], cap, sphere_cam, points_before),
            rtol=1e-10,
        )


def test_affine_identity_returns_inputs(cap, sphere_cam):
    cam, surface = affine_pushforward(sphere_cam, cap, AffineMap.identity(3))
    assert cam is sphere_cam and surface is cap


def test_affine_induced_metric_mode(cap, sphere_cam):
    """Induced mode recomputes the metric of the moved chart."""
    _, surface = affine_pushforward(sphere_cam, cap, AffineMap(2.0 * np.eye(3), np.zeros(3)), INDUCED)
    u = np.array([0.1, 0.1])

    np.testing.assert_allclose(surface.metric(u), 4.0 * cap.metric(u), rtol=1e-12)


def test_affine_rejects_singular_map():
    with pytest.raises(GeometryError):
        AffineMap(np.diag([1.0, 0.0, 1.0]), np.zeros(3))


def test_build_geometry_hash_ignores_key_order():
    """Reordered configuration blocks give the same geometry hash."""
    reordered = {
        "metric": dict(DEFAULT_GEOMETRY["metric"]),
        "surface": dict(reversed(list(DEFAULT_GEOMETRY["surface"].items()))),
        "cam": dict(reversed(list(DEFAULT_GEOMETRY["cam"].items()))),
    }

    assert build_geometry(reordered).config_hash == build_geometry(DEFAULT_GEOMETRY).config_hash


def test_build_geometry_hash_changes_with_cam():
    other = dict(DEFAULT_GEOMETRY, cam={"variant": "ellipsoid", "center": [0, 0, 0], "radius": 0.5})
    assert build_geometry(other).config_hash != build_geometry(DEFAULT_GEOMETRY).config_hash


def test_build_geometry_requires_blocks():
    with pytest.raises(ConfigError):
        build_geometry({"surface": DEFAULT_GEOMETRY["surface"]})


def test_build_geometry_unknown_builtin():
    with pytest.raises(ConfigError):
        build_geometry(dict(DEFAULT_GEOMETRY, surface={"builtin": "torus"}))


def test_conformal_metric_scales_density():
    """A conformal factor lambda multiplies sqrt(det g) by lambda^(n/2)."""
    config = dict(DEFAULT_GEOMETRY, metric={"kind": "conformal", "expression": "1 + u1**2"})
    geometry = build_geometry(config)
    plain = build_geometry(DEFAULT_GEOMETRY)
    u = np.array([0.3, 0.1])

    assert float(geometry.surface.volume_density(u)) == pytest.approx(1.09 * float(plain.surface.volume_density(u)))
    assert geometry.config_hash != plain.config_hash


def test_conformal_metric_must_be_positive():
    config = dict(DEFAULT_GEOMETRY, metric={"kind": "conformal", "expression": "u1 - 10"})
    with pytest.raises(ConfigError):
        build_geometry(config)


def test_graph_expression_surface():
    """Expression graphs match the paraboloid builtin."""
    config = dict(
        DEFAULT_GEOMETRY,
        surface={
            "builtin": "graph",
            "kind": "expression",
            "height": "1 + 0.5*(u1**2 + u2**2)",
            "gradient": ["u1", "u2"],
            "half_width": 0.5,
        },
    )
    surface = build_geometry(config).surface
    reference = paraboloid_graph(0.5, 1.0, 0.5)
    u = np.array([[0.1, -0.2], [0.4, 0.3]])

    np.testing.assert_allclose(surface.points(u), reference.points(u), atol=1e-14)
    np.testing.assert_allclose(surface.jacobian(u), reference.jacobian(u), atol=1e-14)


def test_geometry_transformed_changes_hash(default_geometry):
    moved = default_geometry.transformed(AffineMap(np.eye(3), np.array([0.0, 0.0, 0.1])))
    assert moved.config_hash != default_geometry.config_hash
    assert moved.config["affine"]["offset"] == [0.0, 0.0, 0.1]
