"""Semi-Lagrangian advection: upstream feet ``X(x) = x - dt v(x)`` and
evaluation of the previous field there.

Evaluation points are the volume quadrature points of every triangle, so the
composed field enters the right-hand side through the same quadrature as the
mass matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RecircError
from .fem import TRIANGLE_RULE, element_geometry
from .mesh import DofMap, Mesh, locate_points
from .quadrature import p2_values


@dataclass(frozen=True, eq=False)
class FootSet:
    points: np.ndarray       # (P, 2) foot coordinates after clamping
    triangles: np.ndarray    # (P,)
    barycentric: np.ndarray  # (P, 3)
    clamped: np.ndarray      # (P,) True where the raw foot left the domain


def quadrature_points(mesh: Mesh) -> np.ndarray:
    return element_geometry(mesh).quad_points.reshape(-1, 2)


def _velocity_at(mesh: Mesh, dofmap: DofMap, velocity: np.ndarray, eval_points: np.ndarray | None) -> np.ndarray:
    if eval_points is None:
        geom = element_geometry(mesh)
        return np.einsum("qi,tic->tqc", geom.basis, np.asarray(velocity)[dofmap.cell_dofs]).reshape(-1, 2)
    feet = FootSet(*_locate(mesh, eval_points))
    return interpolate_field(mesh, dofmap, velocity, feet)


def _locate(mesh, pts):
    tri, bary, inside, located = locate_points(mesh, pts)
    return located, tri, bary, ~inside


def characteristic_feet(mesh: Mesh, dofmap: DofMap, velocity: np.ndarray, dt: float,
                        eval_points: np.ndarray | None = None) -> FootSet:
    """Feet of the one-step Euler characteristics.

    ``eval_points`` defaults to all volume quadrature points (triangle-major).
    Feet outside the rectangle are moved to the closest boundary point.
    """
    if not dt > 0:
        raise ParameterError("dt must be positive")
    pts = quadrature_points(mesh) if eval_points is None else np.asarray(eval_points, dtype=float).reshape(-1, 2)
    vel = _velocity_at(mesh, dofmap, velocity, eval_points)
    raw = pts - dt * vel
    located, tri, bary, clamped = _locate(mesh, raw)
    return FootSet(located, tri, bary, clamped)


def interpolate_field(mesh: Mesh, dofmap: DofMap, field: np.ndarray, feet: FootSet) -> np.ndarray:
    """Quadratic interpolation of a P2 field (scalar or ``(n, 2)``) at the feet."""
    if np.any(feet.triangles < 0):
        raise RecircError("unresolved characteristic foot")
    phi = p2_values(feet.barycentric)                     # (P, 6)
    local = np.asarray(field)[dofmap.cell_dofs[feet.triangles]]  # (P, 6[, 2])
    if local.ndim == 2:
        return np.einsum("pi,pi->p", phi, local)
    return np.einsum("pi,pic->pc", phi, local)


def advected_rhs(mesh: Mesh, dofmap: DofMap, prev_field: np.ndarray, velocity: np.ndarray, dt: float) -> np.ndarray:
    """``(1/dt) int (prev o X) phi_i`` for every P2 test function."""
    geom = element_geometry(mesh)
    feet = characteristic_feet(mesh, dofmap, velocity, dt)
    vals = interpolate_field(mesh, dofmap, prev_field, feet)
    T, Q = mesh.n_triangles, TRIANGLE_RULE.n_points
    wq = geom.areas[:, None] * TRIANGLE_RULE.weights[None, :] / dt
    n = dofmap.scalar_q2_count
    idx = dofmap.cell_dofs.ravel()
    if vals.ndim == 1:
        local = np.einsum("tq,tq,qi->ti", wq, vals.reshape(T, Q), geom.basis)
        return np.bincount(idx, local.ravel(), minlength=n)
    vals = vals.reshape(T, Q, 2)
    out = np.empty((n, 2))
    for c in range(2):
        local = np.einsum("tq,tq,qi->ti", wq, vals[..., c], geom.basis)
        out[:, c] = np.bincount(idx, local.ravel(), minlength=n)
    return out
