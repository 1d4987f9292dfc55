import numpy as np
import pytest

from recirc.errors import ParameterError
from recirc.fem import assemble_scalar_mass
from recirc.mesh import PumpLayout, build_dofmap, build_rect_mesh
from recirc.transport import (advected_rhs, characteristic_feet, interpolate_field, quadrature_points)
from recirc.verification import check_transport, gaussian_exact, transport_errors


def _uniform(dm, vx, vy):
    return np.tile([vx, vy], (dm.scalar_q2_count, 1)).astype(float)


def test_zero_velocity_feet_are_identity(unit_square):
    mesh, dm = unit_square
    feet = characteristic_feet(mesh, dm, _uniform(dm, 0, 0), 0.3)
    np.testing.assert_array_equal(feet.points, quadrature_points(mesh))
    assert not feet.clamped.any()


def test_uniform_translation_feet():
    mesh = build_rect_mesh(4.0, 2.0, 0.5, PumpLayout())
    dm = build_dofmap(mesh)
    pts = np.array([[1.3, 0.7], [2.0, 1.0], [3.9, 1.9]])
    feet = characteristic_feet(mesh, dm, _uniform(dm, 1.0, 0.0), 0.25, eval_points=pts)
    np.testing.assert_allclose(feet.points, pts - [0.25, 0.0], atol=1e-14)
    assert not feet.clamped.any()


def test_outward_velocity_foot_is_clamped(unit_square):
    mesh, dm = unit_square
    pts = np.array([[0.05, 0.5]])
    feet = characteristic_feet(mesh, dm, _uniform(dm, 1.0, 0.0), 0.2, eval_points=pts)
    assert feet.clamped[0]
    np.testing.assert_allclose(feet.points[0], [0.0, 0.5], atol=1e-14)


def test_rejects_non_positive_dt(unit_square):
    mesh, dm = unit_square
    with pytest.raises(ParameterError):
        characteristic_feet(mesh, dm, _uniform(dm, 0, 0), 0.0)


def test_interpolation_exact_on_quadratics(unit_square, rng):
    mesh, dm = unit_square
    xy = dm.node_coords
    field = xy[:, 0] ** 2 + xy[:, 1]
    pts = rng.uniform(0, 1, (200, 2))
    feet = characteristic_feet(mesh, dm, _uniform(dm, 0.0, 0.0), 1.0, eval_points=pts)
    got = interpolate_field(mesh, dm, field, feet)
    np.testing.assert_allclose(got, pts[:, 0] ** 2 + pts[:, 1], atol=1e-12)
    const = interpolate_field(mesh, dm, np.full(dm.scalar_q2_count, 283.0), feet)
    np.testing.assert_allclose(const, 283.0, rtol=1e-15)


def test_zero_velocity_rhs_is_mass_times_field(unit_square, rng):
    mesh, dm = unit_square
    theta = rng.uniform(280, 290, dm.scalar_q2_count)
    dt = 60.0
    rhs = advected_rhs(mesh, dm, theta, _uniform(dm, 0, 0), dt)
    ref = assemble_scalar_mass(mesh, dm) @ theta / dt
    assert np.abs(rhs - ref).max() <= 1e-10 * np.abs(theta).max()


def test_constant_field_rhs_sum(unit_square, rng):
    mesh, dm = unit_square
    xy = dm.node_coords
    vel = np.column_stack([np.sin(3 * xy[:, 1]), xy[:, 0] ** 2 - 0.3])
    rhs = advected_rhs(mesh, dm, np.full(dm.scalar_q2_count, 7.0), vel, 0.5)
    assert rhs.sum() == pytest.approx(7.0 * 1.0 / 0.5, rel=1e-10)


def test_vector_field_rhs_componentwise(unit_square, rng):
    mesh, dm = unit_square
    v = rng.standard_normal((dm.scalar_q2_count, 2))
    vel = _uniform(dm, 0.1, -0.05)
    both = advected_rhs(mesh, dm, v, vel, 0.5)
    for c in range(2):
        np.testing.assert_allclose(both[:, c], advected_rhs(mesh, dm, v[:, c], vel, 0.5), atol=1e-14)


def test_gaussian_interpolation_spatial_order():
    """One translation step: the value at the feet matches the shifted Gaussian, O(h^3)."""
    errs = []
    for h in (0.1, 0.05, 0.025):
        mesh = build_rect_mesh(1.0, 1.0, h, PumpLayout())
        dm = build_dofmap(mesh)
        xy = dm.node_coords
        field = gaussian_exact(xy[:, 0], xy[:, 1], 0.0, 0.0, 0.1, (0.5, 0.5), (0.0, 0.0))
        pts = quadrature_points(mesh)
        feet = characteristic_feet(mesh, dm, _uniform(dm, 0.2, 0.1), 0.5)
        got = interpolate_field(mesh, dm, field, feet)
        exact = gaussian_exact(pts[:, 0] - 0.1, pts[:, 1] - 0.05, 0.0, 0.0, 0.1, (0.5, 0.5), (0.0, 0.0))
        errs.append(np.abs(got - exact).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 2.5


@pytest.mark.slow
def test_gaussian_temporal_order():
    check = check_transport(transport_errors())
    assert check.passed, check.line()
