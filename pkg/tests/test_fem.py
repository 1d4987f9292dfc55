import numpy as np
import pytest
import sympy as sym

from recirc.errors import ParameterError
from recirc.fem import (assemble_boundary_terms, assemble_divergence, assemble_hydro_blocks, assemble_radiative,
                        assemble_scalar_mass, assemble_scalar_stiffness, assemble_viscous, flatten_vector)
from recirc.mesh import PumpLayout, boundary_measure, build_dofmap, build_mesh_from_arrays, build_rect_mesh
from recirc.params import PhysicalParams, convective_coefficient
from recirc.quadrature import EDGE_RULE, TRIANGLE_RULE


def _symbolic_p2_matrices(corners):
    """P2 mass and Laplacian element matrices on one triangle, by exact symbolic integration."""
    x, y, u, w = sym.symbols("x y u w")
    (x0, y0), (x1, y1), (x2, y2) = [(sym.Rational(str(a)), sym.Rational(str(b))) for a, b in corners]
    jac = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    # barycentrics as functions of (x, y), then pulled back to the reference square-corner (u, w)
    l1 = ((x - x0) * (y2 - y0) - (x2 - x0) * (y - y0)) / jac
    l2 = ((x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)) / jac
    l0 = 1 - l1 - l2
    basis = [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l1 * l2, 4 * l0 * l2, 4 * l0 * l1]
    to_ref = {x: x0 + (x1 - x0) * u + (x2 - x0) * w, y: y0 + (y1 - y0) * u + (y2 - y0) * w}

    def integral(f):
        g = sym.expand(f.subs(to_ref)) * abs(jac)
        return float(sym.integrate(sym.integrate(g, (w, 0, 1 - u)), (u, 0, 1)))

    M = np.array([[integral(a * b) for b in basis] for a in basis])
    S = np.array([[integral(sym.diff(a, x) * sym.diff(b, x) + sym.diff(a, y) * sym.diff(b, y))
                   for b in basis] for a in basis])
    return M, S


@pytest.fixture(scope="module")
def two_triangles():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    mesh = build_mesh_from_arrays(vertices, np.array([[0, 1, 3], [1, 2, 3]]), 1.0, 1.0, 1.0, 1, 1, PumpLayout())
    return mesh, build_dofmap(mesh)


def test_quadrature_degrees():
    assert TRIANGLE_RULE.degree >= 4 and EDGE_RULE.degree >= 10
    assert TRIANGLE_RULE.weights.sum() == pytest.approx(1.0, abs=1e-15)
    # x^a y^b over the unit triangle is a! b! / (a + b + 2)!
    from math import factorial
    lam = TRIANGLE_RULE.points
    for a in range(6):
        for b in range(6 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            got = 0.5 * np.sum(TRIANGLE_RULE.weights * lam[:, 1] ** a * lam[:, 2] ** b)
            assert got == pytest.approx(exact, rel=1e-13)


def test_element_matrices_match_symbolic_oracle(two_triangles):
    mesh, dm = two_triangles
    n = dm.scalar_q2_count
    M_ref, S_ref = np.zeros((n, n)), np.zeros((n, n))
    for t in range(mesh.n_triangles):
        M_loc, S_loc = _symbolic_p2_matrices(mesh.vertices[mesh.triangles[t]])
        idx = np.ix_(dm.cell_dofs[t], dm.cell_dofs[t])
        M_ref[idx] += M_loc
        S_ref[idx] += S_loc
    np.testing.assert_allclose(assemble_scalar_mass(mesh, dm).toarray(), M_ref, atol=1e-15)
    np.testing.assert_allclose(assemble_scalar_stiffness(mesh, dm, 1.0).toarray(), S_ref, atol=1e-14)


def test_mass_partition_of_unity(unit_square):
    mesh, dm = unit_square
    M = assemble_scalar_mass(mesh, dm)
    one = np.ones(dm.scalar_q2_count)
    assert one @ M @ one == pytest.approx(1.0, abs=1e-12)
    assert abs(M - M.T).max() <= 1e-12 * abs(M).max()


def test_mass_reservoir_area():
    mesh = build_rect_mesh(16.0, 19.0, 1.0, PumpLayout())
    dm = build_dofmap(mesh)
    one = np.ones(dm.scalar_q2_count)
    assert one @ assemble_scalar_mass(mesh, dm) @ one == pytest.approx(304.0, rel=1e-12)


def test_stiffness_kernel_and_linear_energy(unit_square):
    mesh, dm = unit_square
    K = 0.7
    S = assemble_scalar_stiffness(mesh, dm, K)
    assert np.abs(S @ np.ones(dm.scalar_q2_count)).max() <= 1e-12
    x = dm.node_coords[:, 0]
    assert x @ S @ x == pytest.approx(K, abs=1e-12)
    with pytest.raises(ParameterError):
        assemble_scalar_stiffness(mesh, dm, 0.0)


def test_stiffness_flux_identity(unit_square):
    """int grad(x) . grad(phi_i) equals the boundary flux int_{dOmega} n_x phi_i for every basis function."""
    mesh, dm = unit_square
    x = dm.node_coords[:, 0]
    lhs = assemble_scalar_stiffness(mesh, dm, 1.0) @ x
    rhs = np.zeros(dm.scalar_q2_count)
    from recirc.mesh import OUTWARD_NORMALS
    for side in ("left", "right", "top", "bottom"):
        mask = np.array(mesh.boundary_sides) == side
        for e in np.flatnonzero(mask):
            a, b, m = dm.boundary_edge_dofs[e]
            length = mesh.boundary_edge_lengths()[e]
            n_x = OUTWARD_NORMALS[side][0]
            rhs[[a, b, m]] += n_x * length * np.array([1 / 6, 1 / 6, 2 / 3])
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_assembly_independent_of_traversal_order(unit_square, rng):
    mesh, dm = unit_square
    perm = rng.permutation(mesh.n_triangles)
    shuffled = build_mesh_from_arrays(mesh.vertices, mesh.triangles[perm], mesh.width, mesh.height, mesh.h,
                                      mesh.nx, mesh.ny, mesh.layout)
    dm2 = build_dofmap(shuffled)
    # dof numbering of edges may change; compare via the node coordinates
    key1 = np.lexsort(dm.node_coords.T)
    key2 = np.lexsort(dm2.node_coords.T)
    for build in (lambda m, d: assemble_scalar_mass(m, d), lambda m, d: assemble_scalar_stiffness(m, d, 1.0)):
        A = build(mesh, dm).toarray()[np.ix_(key1, key1)]
        B = build(shuffled, dm2).toarray()[np.ix_(key2, key2)]
        np.testing.assert_allclose(A, B, atol=1e-12)


def test_boundary_terms_partition_of_unity():
    mesh = build_rect_mesh(16.0, 19.0, 1.0, PumpLayout())
    dm = build_dofmap(mesh)
    b1 = convective_coefficient(300.0, 990.0, 4.2)
    assert b1 == pytest.approx(7.215007215e-2, rel=1e-9)
    mat, load = assemble_boundary_terms(mesh, dm, "N", b1, 283.0)
    assert load.sum() == pytest.approx(b1 * 283.0 * boundary_measure(mesh, "N"), rel=1e-12)
    mat0, load0 = assemble_boundary_terms(mesh, dm, "N", 0.0, 283.0)
    assert mat0.nnz == 0 or abs(mat0).max() == 0
    assert not load0.any()


def test_radiative_operator():
    mesh = build_rect_mesh(16.0, 19.0, 1.0, PumpLayout())
    dm = build_dofmap(mesh)
    n = dm.scalar_q2_count
    b2 = 1.3e-11
    R, load = assemble_radiative(mesh, dm, b2, np.zeros(n), 300.0)
    assert abs(R).max() == 0
    R, load = assemble_radiative(mesh, dm, b2, np.ones(n), 1.0)
    assert load.sum() == pytest.approx(b2 * 16.0, rel=1e-12)
    R, _ = assemble_radiative(mesh, dm, b2, np.full(n, 283.0), 300.0)
    one = np.ones(n)
    assert one @ (R @ one) == pytest.approx(b2 * 283.0 ** 3 * 16.0, rel=1e-8)


def test_hydro_blocks_rigid_motion_and_buoyancy(unit_square):
    mesh, dm = unit_square
    n = dm.scalar_q2_count
    params = PhysicalParams(nu=1e-2, nu_tur=5e-2)
    dt = 10.0
    v = np.tile([0.3, -0.2], (n, 1))
    blocks = assemble_hydro_blocks(mesh, dm, params, dt, v, 283.0, 283.0, np.zeros((n, 2)))
    M = assemble_scalar_mass(mesh, dm)
    np.testing.assert_allclose(blocks.A @ flatten_vector(v), flatten_vector(np.column_stack([M @ v[:, 0], M @ v[:, 1]])) / dt,
                               atol=1e-13)
    assert not blocks.f.any()


def test_hydro_blocks_without_lag_are_linear_stokes(unit_square):
    mesh, dm = unit_square
    n = dm.scalar_q2_count
    params = PhysicalParams(nu=1e-2, nu_tur=5e-2)
    blocks = assemble_hydro_blocks(mesh, dm, params, 10.0, np.zeros((n, 2)), 283.0, 283.0, np.zeros((n, 2)))
    M = assemble_scalar_mass(mesh, dm)
    import scipy.sparse as sp
    visc = assemble_viscous(mesh, dm, np.full((mesh.n_triangles, TRIANGLE_RULE.n_points), 1e-2))
    expected = sp.block_diag([M, M]) / 10.0 + visc
    assert abs(blocks.A - expected).max() <= 1e-14


def test_viscous_form_matches_strain_energy(unit_square):
    """v = (y, x) has eps = [[0, 1], [1, 0]], so int 2 eps:eps = 4 |Omega|; v = (x, -y) gives 4 too."""
    mesh, dm = unit_square
    xy = dm.node_coords
    A = assemble_viscous(mesh, dm, np.ones((mesh.n_triangles, TRIANGLE_RULE.n_points)))
    for v in (np.column_stack([xy[:, 1], xy[:, 0]]), np.column_stack([xy[:, 0], -xy[:, 1]])):
        f = flatten_vector(v)
        assert f @ A @ f == pytest.approx(4.0, abs=1e-12)
    rot = flatten_vector(np.column_stack([-xy[:, 1], xy[:, 0]]))
    assert abs(rot @ A @ rot) <= 1e-12


def test_divergence_of_solenoidal_field(unit_square):
    mesh, dm = unit_square
    xy = dm.node_coords
    B = assemble_divergence(mesh, dm)
    v = flatten_vector(np.column_stack([xy[:, 0], -xy[:, 1]]))
    assert np.abs(B @ v).max() <= 1e-10
    w = flatten_vector(np.column_stack([xy[:, 0], np.zeros(len(xy))]))
    # -int psi div w = -int psi for every P1 basis psi; the sum is -|Omega|
    assert (B @ w).sum() == pytest.approx(-1.0, abs=1e-12)


def test_buoyancy_points_up_for_warm_water(unit_square):
    mesh, dm = unit_square
    n = dm.scalar_q2_count
    params = PhysicalParams()
    blocks = assemble_hydro_blocks(mesh, dm, params, 10.0, np.zeros((n, 2)), 284.0, 283.0, np.zeros((n, 2)))
    fy = blocks.f[n:]
    assert fy.sum() == pytest.approx(params.alpha0 * 1.0 * 9.81 * 1.0, rel=1e-12)
    assert not blocks.f[:n].any()
