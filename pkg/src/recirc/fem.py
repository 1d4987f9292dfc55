"""Assembly of the mass, stiffness, boundary and Taylor-Hood operators.

All element loops are vectorised over triangles; local matrices are scattered
through a COO -> CSR conversion, which sums duplicates in a fixed order.
Vector fields are ``(n_q2, 2)`` arrays; the flat blocked layout used by the
velocity operators is ``[u_x; u_y]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError
from .mesh import DofMap, Mesh
from .params import PhysicalParams
from .quadrature import EDGE_RULE, TRIANGLE_RULE, p2_dlam, p2_edge_values, p2_values


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    areas: np.ndarray       # (T,)
    grad_lam: np.ndarray    # (T, 3, 2)
    quad_points: np.ndarray  # (T, Q, 2) physical
    basis: np.ndarray       # (Q, 6)
    grads: np.ndarray       # (T, Q, 6, 2)
    p1_basis: np.ndarray    # (Q, 3)


@lru_cache(maxsize=16)
def element_geometry(mesh: Mesh) -> ElementGeometry:
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    inv = np.linalg.inv(jac)
    # grad(l1), grad(l2) are the rows of J^{-1}; grad(l0) = -(sum)
    g12 = inv
    grad_lam = np.concatenate([-(g12[:, 0] + g12[:, 1])[:, None], g12], axis=1)
    areas = mesh.signed_areas()
    rule = TRIANGLE_RULE
    qp = np.einsum("qk,tkd->tqd", rule.points, p)
    dl = p2_dlam(rule.points)                         # (Q, 6, 3)
    grads = np.einsum("qik,tkd->tqid", dl, grad_lam)  # (T, Q, 6, 2)
    return ElementGeometry(areas, grad_lam, qp, p2_values(rule.points), grads, rule.points.copy())


def _scatter(rows: np.ndarray, cols: np.ndarray, local: np.ndarray, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def _qweights(geom: ElementGeometry) -> np.ndarray:
    return geom.areas[:, None] * TRIANGLE_RULE.weights[None, :]


def field_at_quadrature(mesh: Mesh, dofmap: DofMap, field: np.ndarray) -> np.ndarray:
    """Values of a scalar ``(n,)`` or vector ``(n, 2)`` P2 field at the volume quadrature points."""
    geom = element_geometry(mesh)
    local = np.asarray(field)[dofmap.cell_dofs]  # (T, 6[, 2])
    if local.ndim == 2:
        return np.einsum("qi,ti->tq", geom.basis, local)
    return np.einsum("qi,tic->tqc", geom.basis, local)


def gradient_at_quadrature(mesh: Mesh, dofmap: DofMap, field: np.ndarray) -> np.ndarray:
    """Gradient of a scalar P2 field (``(T, Q, 2)``) or of a vector field (``(T, Q, 2, 2)``, [component, direction])."""
    geom = element_geometry(mesh)
    local = np.asarray(field)[dofmap.cell_dofs]
    if local.ndim == 2:
        return np.einsum("tqid,ti->tqd", geom.grads, local)
    return np.einsum("tqid,tic->tqcd", geom.grads, local)


def strain_rate_norm(mesh: Mesh, dofmap: DofMap, velocity: np.ndarray) -> np.ndarray:
    """``[eps(v):eps(v)]^(1/2)`` at the quadrature points."""
    g = gradient_at_quadrature(mesh, dofmap, velocity)
    exx = g[..., 0, 0]
    eyy = g[..., 1, 1]
    exy = 0.5 * (g[..., 0, 1] + g[..., 1, 0])
    return np.sqrt(exx ** 2 + eyy ** 2 + 2.0 * exy ** 2)


def integrate(mesh: Mesh, values_at_qp: np.ndarray) -> float:
    geom = element_geometry(mesh)
    return float(np.sum(_qweights(geom) * values_at_qp))


def assemble_scalar_mass(mesh: Mesh, dofmap: DofMap, weight: np.ndarray | None = None) -> sp.csr_matrix:
    """``M_ij = int w phi_i phi_j``; ``weight`` is per quadrature point ``(T, Q)`` or omitted."""
    geom = element_geometry(mesh)
    wq = _qweights(geom)
    if weight is not None:
        wq = wq * weight
    local = np.einsum("tq,qi,qj->tij", wq, geom.basis, geom.basis)
    n = dofmap.scalar_q2_count
    return _scatter(dofmap.cell_dofs, dofmap.cell_dofs, local, (n, n))


def assemble_scalar_stiffness(mesh: Mesh, dofmap: DofMap, K: float) -> sp.csr_matrix:
    if not K > 0:
        raise ParameterError(f"diffusivity K must be positive, got {K}")
    geom = element_geometry(mesh)
    local = K * np.einsum("tq,tqid,tqjd->tij", _qweights(geom), geom.grads, geom.grads)
    n = dofmap.scalar_q2_count
    return _scatter(dofmap.cell_dofs, dofmap.cell_dofs, local, (n, n))


def assemble_load(mesh: Mesh, dofmap: DofMap, values_at_qp: np.ndarray) -> np.ndarray:
    """``b_i = int f phi_i`` for ``f`` given at quadrature points, scalar ``(T, Q)`` or vector ``(T, Q, 2)``."""
    geom = element_geometry(mesh)
    wq = _qweights(geom)
    n = dofmap.scalar_q2_count
    if values_at_qp.ndim == 2:
        local = np.einsum("tq,tq,qi->ti", wq, values_at_qp, geom.basis)
        return np.bincount(dofmap.cell_dofs.ravel(), local.ravel(), minlength=n)
    local = np.einsum("tq,tqc,qi->tic", wq, values_at_qp, geom.basis)
    out = np.empty((n, 2))
    for c in range(2):
        out[:, c] = np.bincount(dofmap.cell_dofs.ravel(), local[..., c].ravel(), minlength=n)
    return out


# -- boundary terms ---------------------------------------------------------

def _edge_selection(mesh: Mesh, dofmap: DofMap, tags):
    mask = mesh.tag_mask(tags)
    return dofmap.boundary_edge_dofs[mask], mesh.boundary_edge_lengths()[mask]


def trace_at_edge_quadrature(mesh: Mesh, dofmap: DofMap, field, tags) -> np.ndarray:
    """Trace of a scalar P2 field (or a constant) at the edge quadrature points of the tagged edges, ``(E, Qe)``."""
    edofs, _ = _edge_selection(mesh, dofmap, tags)
    if np.isscalar(field):
        return np.full((len(edofs), EDGE_RULE.n_points), float(field))
    phi = p2_edge_values(EDGE_RULE.points)  # (Qe, 3)
    return np.asarray(field)[edofs] @ phi.T


def boundary_integral(mesh: Mesh, dofmap: DofMap, values_at_qp: np.ndarray, tags) -> float:
    _, lengths = _edge_selection(mesh, dofmap, tags)
    return float(np.sum(lengths[:, None] * EDGE_RULE.weights[None, :] * values_at_qp))


def assemble_boundary_mass(mesh: Mesh, dofmap: DofMap, tags, weight: np.ndarray | None = None) -> sp.csr_matrix:
    edofs, lengths = _edge_selection(mesh, dofmap, tags)
    phi = p2_edge_values(EDGE_RULE.points)
    wq = lengths[:, None] * EDGE_RULE.weights[None, :]
    if weight is not None:
        wq = wq * weight
    local = np.einsum("eq,qi,qj->eij", wq, phi, phi)
    n = dofmap.scalar_q2_count
    return _scatter(edofs, edofs, local, (n, n))


def assemble_boundary_load(mesh: Mesh, dofmap: DofMap, tags, values_at_qp: np.ndarray) -> np.ndarray:
    edofs, lengths = _edge_selection(mesh, dofmap, tags)
    phi = p2_edge_values(EDGE_RULE.points)
    wq = lengths[:, None] * EDGE_RULE.weights[None, :]
    local = np.einsum("eq,eq,qi->ei", wq, values_at_qp, phi)
    return np.bincount(edofs.ravel(), local.ravel(), minlength=dofmap.scalar_q2_count)


def assemble_boundary_terms(mesh: Mesh, dofmap: DofMap, tag, coefficient: float, data_values):
    """Robin pair ``(c int theta eta, c int data eta)`` on the tagged edges.

    ``data_values`` is a constant or a P2 nodal vector; the load equals
    ``coefficient * boundary_mass @ data``.
    """
    mass = assemble_boundary_mass(mesh, dofmap, tag)
    if np.isscalar(data_values):
        data = np.full(dofmap.scalar_q2_count, float(data_values))
    else:
        data = np.asarray(data_values, dtype=float)
    return coefficient * mass, coefficient * (mass @ data)


def assemble_radiative(mesh: Mesh, dofmap: DofMap, b2S: float, theta_lag, Tr_values, tag="S"):
    """Lagged Stefan-Boltzmann pair on the surface.

    Matrix: ``b2S int |theta_lag|^3 theta eta``; load: ``b2S int T_r^4 eta``,
    with ``T_r`` interpolated to the edge quadrature points before raising to
    the fourth power.
    """
    lag = trace_at_edge_quadrature(mesh, dofmap, theta_lag, tag)
    mat = b2S * assemble_boundary_mass(mesh, dofmap, tag, weight=np.abs(lag) ** 3)
    tr = trace_at_edge_quadrature(mesh, dofmap, Tr_values, tag)
    load = b2S * assemble_boundary_load(mesh, dofmap, tag, tr ** 4)
    return mat, load


# -- Taylor-Hood blocks ----------------------------------------------------

@dataclass(eq=False)
class HydroBlocks:
    A: sp.csr_matrix
    B: sp.csr_matrix
    f: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    pressure_mass: np.ndarray   # lumped P1 mass, one entry per vertex
    nu_min: float               # lower bound of the effective viscosity

    @property
    def n_velocity(self) -> int:
        return self.A.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.B.shape[0]


def flatten_vector(v: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(v).T).ravel()


def unflatten_vector(flat: np.ndarray) -> np.ndarray:
    return np.asarray(flat).reshape(2, -1).T.copy()


def assemble_viscous(mesh: Mesh, dofmap: DofMap, visc_qp: np.ndarray) -> sp.csr_matrix:
    """``int 2 mu eps(v):eps(z)`` with ``mu`` given at quadrature points."""
    geom = element_geometry(mesh)
    wq = _qweights(geom) * visc_qp
    gx = geom.grads[..., 0]
    gy = geom.grads[..., 1]
    xx = np.einsum("tq,tqi,tqj->tij", wq, gx, gx)
    yy = np.einsum("tq,tqi,tqj->tij", wq, gy, gy)
    xy = np.einsum("tq,tqi,tqj->tij", wq, gy, gx)  # test x, trial y: dz_x/dy * dv_y/dx
    n = dofmap.scalar_q2_count
    cd = dofmap.cell_dofs
    blocks = [
        _scatter(cd, cd, 2 * xx + yy, (n, n)),
        _scatter(cd, cd, xy, (n, n)),
        _scatter(cd, cd, np.transpose(xy, (0, 2, 1)), (n, n)),
        _scatter(cd, cd, xx + 2 * yy, (n, n)),
    ]
    return sp.bmat([[blocks[0], blocks[1]], [blocks[2], blocks[3]]], format="csr")


def assemble_divergence(mesh: Mesh, dofmap: DofMap) -> sp.csr_matrix:
    """``B[k, (c, j)] = -int psi_k d(phi_j)/dx_c`` with P1 ``psi``."""
    geom = element_geometry(mesh)
    wq = _qweights(geom)
    n = dofmap.scalar_q2_count
    parts = []
    for c in range(2):
        local = -np.einsum("tq,qk,tqj->tkj", wq, geom.p1_basis, geom.grads[..., c])
        parts.append(_scatter(mesh.triangles, dofmap.cell_dofs, local, (dofmap.scalar_q1_count, n)))
    return sp.hstack(parts, format="csr")


def lumped_pressure_mass(mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    areas = mesh.signed_areas()
    return np.bincount(mesh.triangles.ravel(), np.repeat(areas / 3.0, 3), minlength=dofmap.scalar_q1_count)


def assemble_hydro_blocks(mesh: Mesh, dofmap: DofMap, params: PhysicalParams, dt: float,
                          v_lag: np.ndarray, theta_new, theta0, advected_momentum_rhs: np.ndarray,
                          boundary_velocity=None) -> HydroBlocks:
    """Linearised velocity/pressure system for one Picard iterate.

    ``A = M/dt + int 2 (nu + nu_tur |eps(v_lag)|) eps(v):eps(z)``,
    ``f = advected_momentum_rhs - int alpha0 (theta_new - theta0) a_g . z``.
    The minus sign is the Boussinesq density perturbation: with ``a_g``
    pointing down, water warmer than ``theta0`` is pushed up.
    ``boundary_velocity`` is ``(scalar_dofs, values[m, 2])``; every listed dof
    is constrained in both components.
    """
    n = dofmap.scalar_q2_count
    v_lag = np.asarray(v_lag, dtype=float)
    adv = np.asarray(advected_momentum_rhs, dtype=float)
    if v_lag.shape != (n, 2) or adv.shape != (n, 2):
        raise ParameterError(f"velocity arrays must have shape ({n}, 2)")
    if not dt > 0:
        raise ParameterError("dt must be positive")

    visc = np.full((mesh.n_triangles, TRIANGLE_RULE.n_points), params.nu)
    if params.nu_tur > 0 and np.any(v_lag):
        visc = visc + params.nu_tur * strain_rate_norm(mesh, dofmap, v_lag)
    mass = assemble_scalar_mass(mesh, dofmap)
    A = sp.block_diag([mass, mass], format="csr") / dt + assemble_viscous(mesh, dofmap, visc)
    B = assemble_divergence(mesh, dofmap)

    th = theta_new if not np.isscalar(theta_new) else np.full(n, float(theta_new))
    th0 = theta0 if not np.isscalar(theta0) else np.full(n, float(theta0))
    dtheta = field_at_quadrature(mesh, dofmap, np.asarray(th) - np.asarray(th0))
    g = params.gravity_vector
    buoy = -params.alpha0 * dtheta[..., None] * g[None, None, :]
    f = flatten_vector(adv + assemble_load(mesh, dofmap, buoy))

    if boundary_velocity is None:
        dofs = dofmap.all_boundary_dofs
        vals = np.zeros((len(dofs), 2))
    else:
        dofs, vals = boundary_velocity
        dofs = np.asarray(dofs, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
    ddofs = np.concatenate([dofs, dofs + n])
    dvals = np.concatenate([vals[:, 0], vals[:, 1]])
    return HydroBlocks(A=A, B=B, f=f, dirichlet_dofs=ddofs, dirichlet_values=dvals,
                       pressure_mass=lumped_pressure_mass(mesh, dofmap), nu_min=params.nu)
