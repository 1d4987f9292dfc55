"""Temperature step with the radiative surface condition and the nonlocal
collector/injector coupling, plus the mollifier utilities of the
continuous model.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, ParameterError, QueryError, StepError
from .fem import (assemble_boundary_mass, assemble_radiative, assemble_scalar_mass,
                  assemble_scalar_stiffness, boundary_integral, trace_at_edge_quadrature)
from .mesh import DofMap, Mesh, boundary_measure
from .params import PhysicalParams
from .solvers import cg_solve
from .transport import advected_rhs


class PumpMode(enum.Enum):
    TURBINATE = 1   # g > 0: Neumann on C^k, T^k <- mean over C^k
    PUMP = -1       # g < 0: C^k <- mean over T^k, Neumann on T^k
    OFF = 0         # g = 0: Neumann on both


def pump_modes(rates: Sequence[float]) -> tuple[PumpMode, ...]:
    return tuple(PumpMode(int(np.sign(g))) for g in rates)


# -- mollifier -------------------------------------------------------------

@lru_cache(maxsize=1)
def mollifier_constant() -> float:
    """Normalisation ``c`` with ``int rho_1 = 1``.

    The bump is flat to all orders at +-1, so Gauss-Legendre converges
    spectrally; 200 nodes reach machine precision.
    """
    x, w = np.polynomial.legendre.leggauss(200)
    return float(1.0 / np.sum(w * np.exp(x * x / (x * x - 1.0))))


def mollifier_value(t, eps: float):
    """``rho_eps(t) = (c/eps) exp(t^2 / (t^2 - eps^2))`` on ``|t| < eps``, zero elsewhere."""
    if not eps > 0:
        raise ParameterError(f"mollifier width must be positive, got {eps}")
    t = np.asarray(t, dtype=float)
    u = t / eps
    inside = np.abs(u) < 1.0
    us = np.where(inside, u, 0.0)
    val = np.where(inside, (mollifier_constant() / eps) * np.exp(us * us / (us * us - 1.0)), 0.0)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class MollifierSpec:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")

    @property
    def c(self) -> float:
        return mollifier_constant()

    def __call__(self, t):
        return mollifier_value(t, self.epsilon)


@dataclass(frozen=True, eq=False)
class CollectorHistory:
    """Collector mean temperature as a function of time.

    For ``s <= 0`` it is the collector mean of the initial field; afterwards
    the recorded samples are interpolated linearly.
    """

    initial_mean: float
    times: np.ndarray = np.empty(0)
    values: np.ndarray = np.empty(0)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if len(self.times) == 0:
            out = np.full(s.shape, self.initial_mean)
        else:
            t = np.concatenate([[0.0], self.times])
            v = np.concatenate([[self.initial_mean], self.values])
            out = np.where(s <= 0, self.initial_mean, np.interp(s, t, v))
        return out


def injector_trace_convolution(history: Callable, t: float, spec: MollifierSpec, horizon: float | None = None,
                               n_nodes: int = 200) -> float:
    """``int rho_eps(t - eps - s) gamma(s) ds`` over the window ``(t - 2 eps, t)``.

    ``history`` maps times to collector means and must already follow the
    cold-start rule for ``s <= 0``.  ``horizon`` (the final time ``T``)
    truncates the integral to ``s >= -T`` if given.
    """
    eps = spec.epsilon
    lo, hi = t - 2.0 * eps, t
    if horizon is not None:
        lo = max(lo, -horizon)
    if hi <= lo:
        return 0.0
    pieces = [(lo, hi)] if not (lo < 0.0 < hi) else [(lo, 0.0), (0.0, hi)]
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    total = 0.0
    for a, b in pieces:
        s = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.sum(w * mollifier_value(t - eps - s, eps) * np.asarray(history(s), dtype=float))
    return float(total)


# -- collector means ---------------------------------------------------------

def collector_mean(mesh: Mesh, dofmap: DofMap, theta, tag: str) -> float:
    """Mean of ``theta`` over a collector/injector span (any tag works)."""
    if tag not in mesh.tags:
        raise QueryError(f"unknown boundary tag {tag!r}")
    theta = np.asarray(theta, dtype=float)
    # shift by one nodal value so a constant trace comes back exactly
    ref = float(theta[dofmap.boundary_dofs[tag][0]])
    vals = trace_at_edge_quadrature(mesh, dofmap, theta - ref, tag)
    return ref + boundary_integral(mesh, dofmap, vals, tag) / boundary_measure(mesh, tag)


# -- the step -------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryData:
    """Data at the new time level: scalars or P2 nodal vectors."""

    theta_N: float | np.ndarray
    theta_S: float | np.ndarray
    T_r: float | np.ndarray


@dataclass(frozen=True)
class ThermalReport:
    iterations: int
    change: float
    converged: bool
    constraint_residual: float = 0.0
    cg_iterations: int = 0
    changes: tuple[float, ...] = ()


@lru_cache(maxsize=8)
def _static_operators(mesh: Mesh, dofmap: DofMap, K: float):
    return assemble_scalar_mass(mesh, dofmap), assemble_scalar_stiffness(mesh, dofmap, K)


def _robin(mesh, dofmap, tags, coef, data):
    tags = [t for t in tags if t in mesh.tags]
    n = dofmap.scalar_q2_count
    if not tags or coef == 0.0:
        return sp.csr_matrix((n, n)), np.zeros(n)
    mass = assemble_boundary_mass(mesh, dofmap, tags)
    d = np.full(n, float(data)) if np.isscalar(data) else np.asarray(data, dtype=float)
    return coef * mass, coef * (mass @ d)


def pump_tags(n_pairs: int) -> list[str]:
    return [f"{kind}{k}" for k in range(1, n_pairs + 1) for kind in ("C", "T")]


def _constraint_residual(mesh, dofmap, theta, constraints) -> float:
    residual = 0.0
    for _, src, dst in constraints:
        residual = max(residual, abs(collector_mean(mesh, dofmap, theta, dst)
                                     - collector_mean(mesh, dofmap, theta, src)))
    return residual


def solve_temperature_step(mesh: Mesh, dofmap: DofMap, theta_prev: np.ndarray, velocity: np.ndarray,
                           modes: Sequence[PumpMode], bc: BoundaryData, params: PhysicalParams, dt: float,
                           first_step: bool = False, tol: float = 1e-8, max_iter: int = 50,
                           radiative: str = "tangent", cg_tol: float = 1e-10, constraint_tol: float = 1e-9):
    """Advance the temperature one step.

    One fixed-point loop handles both nonlinearities: the surface emission
    ``|theta|^3 theta`` is re-linearised about the current iterate, and every
    active pump span gets the current iterate's mean over its partner span as
    Dirichlet value.  ``radiative="lagged"`` uses ``|theta_k|^3 theta_{k+1}``;
    the default ``"tangent"`` uses ``4|theta_k|^3 theta_{k+1} - 3|theta_k|^3 theta_k``,
    which keeps converging when emission dominates the Robin exchange.

    The loop stops once the max-norm change is below ``tol * (1 + |theta|_inf)``
    and every pump constraint holds to ``constraint_tol`` (absolute, in K).

    On the first step pump modes are ignored and every non-surface edge is a
    Robin ``N`` edge.
    """
    if radiative not in ("tangent", "lagged"):
        raise ParameterError(f"unknown radiative linearisation {radiative!r}")
    n = dofmap.scalar_q2_count
    theta_prev = np.asarray(theta_prev, dtype=float)
    n_pairs = mesh.layout.n_pairs
    if not first_step and len(modes) != n_pairs:
        raise ParameterError(f"expected {n_pairs} pump modes, got {len(modes)}")

    mass, stiff = _static_operators(mesh, dofmap, params.K)
    rhs = advected_rhs(mesh, dofmap, theta_prev, velocity, dt)
    robin_N = ["N"] + (pump_tags(n_pairs) if first_step else [])
    mN, lN = _robin(mesh, dofmap, robin_N, params.b1N, bc.theta_N)
    mS, lS = _robin(mesh, dofmap, ["S"], params.b1S, bc.theta_S)
    base = (mass / dt + stiff + mN + mS).tocsr()
    rhs = rhs + lN + lS

    # (target dofs, source tag) for each active pump
    constraints = []
    if not first_step:
        for k, mode in enumerate(modes, start=1):
            if mode is PumpMode.TURBINATE:
                constraints.append((dofmap.boundary_dofs[f"T{k}"], f"C{k}", f"T{k}"))
            elif mode is PumpMode.PUMP:
                constraints.append((dofmap.boundary_dofs[f"C{k}"], f"T{k}", f"C{k}"))
    fixed = np.zeros(n, dtype=bool)
    for dofs, _, _ in constraints:
        fixed[dofs] = True
    free = ~fixed

    radiating = params.b2S > 0 and "S" in mesh.tags
    linear = not radiating and not constraints
    theta_it = theta_prev.copy()
    changes = []
    cg_total = 0
    converged = False
    for it in range(1, max_iter + 1):
        A = base
        b = rhs
        if radiating:
            R, lrad = assemble_radiative(mesh, dofmap, params.b2S, theta_it, bc.T_r)
            if radiative == "tangent":
                A = A + 4.0 * R
                b = b + lrad + 3.0 * (R @ theta_it)
            else:
                A = A + R
                b = b + lrad
        new = theta_it.copy()
        for dofs, src, _ in constraints:
            new[dofs] = collector_mean(mesh, dofmap, theta_it, src)
        if constraints:
            A = A.tocsr()
            A_ff = A[free][:, free]
            b_f = b[free] - A[free][:, fixed] @ new[fixed]
        else:
            A_ff, b_f = A, b
        x, rep = cg_solve(A_ff, b_f, tol=cg_tol, x0=theta_it[free])
        cg_total += rep.iterations
        new[free] = x
        if not np.all(np.isfinite(new)):
            raise NumericalError("non-finite temperature iterate")
        change = float(np.max(np.abs(new - theta_it)))
        changes.append(change)
        theta_it = new
        residual = _constraint_residual(mesh, dofmap, theta_it, constraints)
        if linear or (change <= tol * (1.0 + np.max(np.abs(new))) and residual <= constraint_tol):
            converged = True
            break
    report = ThermalReport(it, changes[-1], converged, residual, cg_total, tuple(changes))
    if not converged:
        raise StepError(f"temperature fixed point did not converge in {max_iter} iterations",
                        {"changes": changes, "constraint_residual": residual})
    return theta_it, report
