"""Velocity/pressure step of the Smagorinsky-modified Navier-Stokes system."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericalError, ScheduleError, StepError
from .fem import assemble_hydro_blocks, unflatten_vector
from .mesh import OUTWARD_NORMALS, DofMap, Mesh, boundary_measure
from .params import PhysicalParams
from .solvers import uzawa_solve
from .transport import advected_rhs


@dataclass(frozen=True, eq=False)
class PumpVelocityBC:
    """Dirichlet velocity on every boundary P2 node (zero off the pump spans)."""

    dofs: np.ndarray
    values: np.ndarray  # (len(dofs), 2)

    def as_pair(self):
        return self.dofs, self.values


def pump_boundary_velocity(mesh: Mesh, dofmap: DofMap, g_now: Sequence[float], M_bound: float = np.inf) -> PumpVelocityBC:
    """Injector spans get ``-(g/|T|) n``, collector spans ``+(g/|C|) n``.

    ``n`` is the outward normal, so ``g > 0`` draws water out through the
    collector and pushes it in through the injector.  Span end nodes take the
    span value.
    """
    g_now = np.asarray(g_now, dtype=float)
    if len(g_now) != mesh.layout.n_pairs:
        raise ScheduleError(f"expected {mesh.layout.n_pairs} pump rates, got {len(g_now)}")
    if not np.all(np.isfinite(g_now)):
        raise ScheduleError("pump rates must be finite")
    if np.any(np.abs(g_now) > M_bound):
        raise ScheduleError(f"pump rate exceeds the bound M = {M_bound}")
    dofs = dofmap.all_boundary_dofs
    values = np.zeros((dofmap.scalar_q2_count, 2))
    for k, (g, pair) in enumerate(zip(g_now, mesh.layout.pairs), start=1):
        if g == 0.0:
            continue
        for tag, span, sign in ((f"C{k}", pair.collector, 1.0), (f"T{k}", pair.injector, -1.0)):
            values[dofmap.boundary_dofs[tag]] = sign * g / boundary_measure(mesh, tag) * OUTWARD_NORMALS[span.side]
    return PumpVelocityBC(dofs, values[dofs])


@dataclass(frozen=True)
class HydroReport:
    picard_iterations: int
    uzawa_iterations: int
    div_residual: float
    velocity_norm: float
    converged: bool


def solve_velocity_step(mesh: Mesh, dofmap: DofMap, v_prev: np.ndarray, p_prev: np.ndarray | None,
                        theta_next, theta0, g_now: Sequence[float], params: PhysicalParams, dt: float,
                        tol: float = 1e-6, max_iter: int = 30, uzawa_tol: float = 1e-6, uzawa_max: int = 500,
                        uzawa_step: float | None = None, cg_tol: float = 1e-10,
                        boundary_velocity: PumpVelocityBC | None = None):
    """Picard loop on the Smagorinsky weight, Uzawa for each linearised system.

    Returns ``(v, p, report)`` with ``v`` as an ``(n, 2)`` array.
    """
    v_prev = np.asarray(v_prev, dtype=float)
    bcv = boundary_velocity or pump_boundary_velocity(mesh, dofmap, g_now, params.M_bound)
    adv = advected_rhs(mesh, dofmap, v_prev, v_prev, dt)
    linear = params.nu_tur == 0.0

    v_lag = v_prev
    p = p_prev
    uzawa_total = 0
    for it in range(1, max_iter + 1):
        blocks = assemble_hydro_blocks(mesh, dofmap, params, dt, v_lag, theta_next, theta0, adv,
                                       boundary_velocity=bcv.as_pair())
        flat, p, rep = uzawa_solve(blocks, step=uzawa_step, tol_div=uzawa_tol, max_outer=uzawa_max,
                                   cg_tol=cg_tol, v0=_flat(v_lag), p0=p)
        uzawa_total += rep.iterations
        if not rep.converged:
            raise StepError(f"Uzawa did not converge in {uzawa_max} iterations (|Bv| = {rep.residual:.3e})",
                            {"picard_iteration": it, "residual": rep.residual})
        v = unflatten_vector(flat)
        if not np.all(np.isfinite(v)):
            raise NumericalError("non-finite velocity iterate")
        change = float(np.max(np.abs(v - v_lag)))
        v_lag = v
        if linear or change <= tol * (1.0 + np.max(np.abs(v))):
            return v, p, HydroReport(it, uzawa_total, rep.residual, float(np.linalg.norm(flat)), True)
    raise StepError(f"Smagorinsky fixed point did not converge in {max_iter} iterations", {"change": change})


def _flat(v):
    return np.ascontiguousarray(v.T).ravel()
