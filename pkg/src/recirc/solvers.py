"""Jacobi-preconditioned conjugate gradients and the Uzawa saddle-point loop."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, ParameterError
from .fem import HydroBlocks


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    residual: float
    converged: bool
    inner_iterations: int = 0


def cg_solve(A, b, tol: float = 1e-10, max_iter: int | None = None, x0=None, precondition: bool = True):
    """Solve ``A x = b`` for SPD ``A``; stop when ``|Ax - b| <= tol |b|``.

    Non-convergence is reported, not raised.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    b = np.asarray(b, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = max(10 * n, 100)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    rnorm = np.linalg.norm(r)
    target = tol * bnorm
    if rnorm <= target:
        return x, SolverReport(0, float(rnorm), True)
    if precondition:
        diag = A.diagonal() if sp.issparse(A) else np.diag(A)
        inv_diag = np.where(diag != 0, 1.0 / np.where(diag != 0, diag, 1.0), 1.0)
    else:
        inv_diag = np.ones(n)
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    it = 0
    while it < max_iter:
        Ap = A @ p
        pAp = p @ Ap
        if not np.isfinite(pAp):
            raise NumericalError("non-finite value inside conjugate gradients")
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            break
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite value inside conjugate gradients")
    return x, SolverReport(it, float(rnorm), bool(rnorm <= target))


def default_uzawa_step(blocks: HydroBlocks) -> float:
    """``2 nu``: the mass-scaled Schur complement is bounded by ``1 / (2 nu)``."""
    return 2.0 * blocks.nu_min


def uzawa_solve(blocks: HydroBlocks, step: float | None = None, tol_div: float = 1e-6, max_outer: int = 500,
                cg_tol: float = 1e-10, v0=None, p0=None):
    """Gradient-ascent Uzawa iteration on ``[[A, B^T], [B, 0]]``.

    ``v_m = A^{-1}(f - B^T p_m)`` on the unconstrained velocity dofs, then
    ``p_{m+1} = p_m + step * D^{-1} B v_m`` with ``D`` the lumped pressure mass,
    and the pressure mean removed.  Stops when ``|B v|_2 <= tol_div (1 + |v|_2)``.
    Returns flat velocity, pressure and a report.
    """
    if step is None:
        step = default_uzawa_step(blocks)
    if not step > 0:
        raise ParameterError("Uzawa step must be positive")
    A, B = blocks.A, blocks.B
    n = blocks.n_velocity
    fixed = np.zeros(n, dtype=bool)
    fixed[blocks.dirichlet_dofs] = True
    free = ~fixed
    v = np.zeros(n)
    v[blocks.dirichlet_dofs] = blocks.dirichlet_values
    if v0 is not None:
        v[free] = np.asarray(v0, dtype=float)[free]

    A_ff = A[free][:, free]
    A_fc = A[free][:, fixed]
    B_f = B[:, free]
    Bt_f = B_f.T.tocsr()
    rhs0 = blocks.f[free] - A_fc @ v[fixed]
    Bv_fixed = B[:, fixed] @ v[fixed]

    D = blocks.pressure_mass
    p = np.zeros(blocks.n_pressure) if p0 is None else np.array(p0, dtype=float)
    p -= (D @ p) / D.sum()

    inner = 0
    res = np.inf
    converged = False
    for m in range(1, max_outer + 1):
        vf, rep = cg_solve(A_ff, rhs0 - Bt_f @ p, tol=cg_tol, x0=v[free])
        inner += rep.iterations
        v[free] = vf
        r = B_f @ vf + Bv_fixed
        res = float(np.linalg.norm(r))
        if not np.isfinite(res):
            raise NumericalError("non-finite divergence residual in Uzawa")
        if res <= tol_div * (1.0 + np.linalg.norm(v)):
            converged = True
            break
        p += step * r / D
        p -= (D @ p) / D.sum()
    return v, p, SolverReport(m, res, converged, inner)
