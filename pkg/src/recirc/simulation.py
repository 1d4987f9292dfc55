"""Time loop, pump-scenario presets and per-step diagnostics.

Ordering within the loop follows the dependency chain of the scheme:
``theta^1`` comes from ``(theta^0, v^0)`` with every non-surface edge treated
as Robin; then for ``n = 1..N`` the velocity ``v^n`` is computed from
``(v^{n-1}, theta^n, g^n)`` and the temperature ``theta^{n+1}`` from
``(theta^n, v^n)`` with pump modes taken from ``sign(g^n)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import NumericalError, ParameterError, ScheduleError, StepError
from .fem import (assemble_divergence, boundary_integral, element_geometry, field_at_quadrature,
                  flatten_vector, gradient_at_quadrature, integrate, trace_at_edge_quadrature)
from .hydro import solve_velocity_step
from .mesh import DofMap, Mesh, build_dofmap, build_rect_mesh
from .quadrature import TRIANGLE_RULE, p2_values
from .thermal import BoundaryData, pump_modes, solve_temperature_step

if TYPE_CHECKING:
    from .config import RunConfig

log = logging.getLogger(__name__)

PUMP_RATE = 2.0e-3
PRESET_PATTERNS = {
    "NNNN": (0, 0, 0, 0),
    "TTTT": (1, 1, 1, 1),
    "PPPP": (-1, -1, -1, -1),
    "TPTP": (1, -1, 1, -1),
    "PTPT": (-1, 1, -1, 1),
}


@dataclass(frozen=True, eq=False)
class PumpSchedule:
    """Rates ``g[k, n-1] = g^{k,n}`` for ``n = 1..N``; ``g^{k,0} = 0``."""

    g: np.ndarray
    dt: float
    N: int

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 2 or g.shape[1] != self.N:
            raise ScheduleError(f"schedule must have shape (N_CT, {self.N}), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ScheduleError("schedule contains non-finite rates")
        object.__setattr__(self, "g", g)

    @property
    def n_pumps(self) -> int:
        return self.g.shape[0]

    def rates(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.zeros(self.n_pumps)
        return self.g[:, n - 1]

    def check_bound(self, M: float) -> None:
        if np.any(np.abs(self.g) > M):
            raise ScheduleError(f"schedule exceeds the pump bound M = {M}")


def scenario_preset(name: str, N: int = 96, dt: float = 1800.0, rate: float = PUMP_RATE) -> PumpSchedule:
    try:
        pattern = PRESET_PATTERNS[name.upper()]
    except KeyError:
        raise ScheduleError(f"unknown scenario {name!r}; choose from {sorted(PRESET_PATTERNS)}") from None
    g = np.repeat(rate * np.array(pattern, dtype=float)[:, None], N, axis=1)
    return PumpSchedule(g=g, dt=dt, N=N)


@dataclass(frozen=True, eq=False)
class RadiationProfile:
    """Radiation temperature ``T_r(t)``.

    Synthetic default: ``base + amplitude * max(0, sin(2 pi t / period))^1.5``.
    With ``times``/``values`` set, the table is interpolated linearly.
    """

    base: float = 278.0
    amplitude: float = 22.0
    period: float = 86400.0
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    def __call__(self, t: float) -> float:
        if self.times is not None:
            return float(np.interp(t, self.times, self.values))
        s = max(0.0, np.sin(2.0 * np.pi * t / self.period))
        return float(self.base + self.amplitude * s ** 1.5)


# -- diagnostics -----------------------------------------------------------

def _clip_above(poly: np.ndarray, y0: float) -> np.ndarray:
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        ina, inb = a[1] >= y0, b[1] >= y0
        if ina:
            out.append(a)
        if ina != inb:
            s = (y0 - a[1]) / (b[1] - a[1])
            out.append(a + s * (b - a))
    return np.array(out)


def mean_upper_layer_temperature(mesh: Mesh, dofmap: DofMap, theta: np.ndarray, depth: float = 1.5) -> float:
    """Mean of ``theta`` over the strip within ``depth`` of the top side.

    Triangles cut by the strip's lower edge are clipped and the clipped
    polygon is fan-triangulated, so the quadrature stays exact to its degree.
    """
    if not 0 < depth <= mesh.height:
        raise ParameterError(f"depth must be in (0, {mesh.height}], got {depth}")
    y0 = mesh.height - depth
    tol = 1e-12 * mesh.height
    geom = element_geometry(mesh)
    p = mesh.vertices[mesh.triangles]
    ymin = p[..., 1].min(axis=1)
    ymax = p[..., 1].max(axis=1)
    full = ymin >= y0 - tol
    partial = (ymax > y0 + tol) & ~full
    wq = geom.areas[:, None] * TRIANGLE_RULE.weights[None, :]
    # integrate the deviation from one nodal value so a constant field comes back exactly
    theta = np.asarray(theta, dtype=float)
    ref = float(theta[-1])
    theta = theta - ref
    vals = field_at_quadrature(mesh, dofmap, theta)
    total = float(np.sum(wq[full] * vals[full]))
    area = float(np.sum(geom.areas[full]))
    for t in np.flatnonzero(partial):
        poly = _clip_above(p[t], y0)
        if len(poly) < 3:
            continue
        inv = mesh._inv_jac[t]
        local = theta[dofmap.cell_dofs[t]]
        for i in range(1, len(poly) - 1):
            sub = np.array([poly[0], poly[i], poly[i + 1]])
            d1, d2 = sub[1] - sub[0], sub[2] - sub[0]
            sub_area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
            if sub_area == 0.0:
                continue
            l12 = (inv @ (sub - p[t, 0]).T).T
            lam_sub = np.column_stack([1.0 - l12.sum(axis=1), l12])      # (3 sub vertices, 3)
            lam_q = TRIANGLE_RULE.points @ lam_sub                       # (Q, 3)
            total += sub_area * float(TRIANGLE_RULE.weights @ (p2_values(lam_q) @ local))
            area += sub_area
    return ref + total / area


@dataclass(frozen=True)
class EnergyRecord:
    """Discrete energy functionals of the temperature.

    ``l2_sq`` is ``|theta(t)|^2_{L2}``; ``grad_integral`` and
    ``surface_l5_integral`` accumulate ``int_0^t |grad theta|^2`` and
    ``int_0^t |theta|^5_{L5(surface)}`` with the right-endpoint rule.
    """

    l2_sq: float = 0.0
    grad_integral: float = 0.0
    surface_l5_integral: float = 0.0

    def is_finite(self) -> bool:
        return bool(np.isfinite([self.l2_sq, self.grad_integral, self.surface_l5_integral]).all())


def energy_monitor_update(mesh: Mesh, dofmap: DofMap, theta: np.ndarray, dt: float,
                          previous: EnergyRecord | None = None) -> EnergyRecord:
    """Fold the field at the new time level into the running monitors.

    With ``previous=None`` the accumulators start at zero and ``dt`` is unused.
    """
    l2 = integrate(mesh, field_at_quadrature(mesh, dofmap, theta) ** 2)
    if previous is None:
        return EnergyRecord(l2, 0.0, 0.0)
    grad = gradient_at_quadrature(mesh, dofmap, theta)
    g2 = integrate(mesh, np.sum(grad ** 2, axis=-1))
    l5 = 0.0
    if "S" in mesh.tags:
        tr = trace_at_edge_quadrature(mesh, dofmap, theta, "S")
        l5 = boundary_integral(mesh, dofmap, np.abs(tr) ** 5, "S")
    return EnergyRecord(l2, previous.grad_integral + dt * g2, previous.surface_l5_integral + dt * l5)


CSV_COLUMNS = ("step", "time_s", "mean_upper_K", "theta_min_K", "theta_max_K", "theta_l2", "div_v_l2",
               "picard_iters", "uzawa_iters", "energy1", "energy2", "energy3")


@dataclass(frozen=True)
class StepRecord:
    step: int
    time_s: float
    mean_upper_K: float
    theta_min_K: float
    theta_max_K: float
    theta_l2: float
    div_v_l2: float
    picard_iters: int
    uzawa_iters: int
    energy1: float
    energy2: float
    energy3: float
    # not part of the CSV
    velocity_l2: float = 0.0
    hydro_picard_iters: int = 0
    constraint_residual: float = 0.0
    picard_changes: tuple[float, ...] = ()

    def csv_row(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass(eq=False)
class ScenarioResult:
    name: str
    mesh: Mesh
    dofmap: DofMap
    records: list[StepRecord] = field(default_factory=list)
    theta: np.ndarray | None = None
    velocity: np.ndarray | None = None
    pressure: np.ndarray | None = None
    failed_step: int | None = None
    error: str | None = None
    error_kind: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_step is None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


SnapshotHook = Callable[[int, Mesh, DofMap, np.ndarray, np.ndarray, np.ndarray], None]


def run_simulation(config: "RunConfig", snapshot: SnapshotHook | None = None,
                   progress: Callable[[StepRecord], None] | None = None) -> ScenarioResult:
    """Run one scenario; step failures end the run with a partial result."""
    dom = config.domain
    mesh = build_rect_mesh(dom.width, dom.height, dom.h, config.layout, pattern=dom.pattern)
    dofmap = build_dofmap(mesh)
    params = config.physical_params()
    schedule = config.pump_schedule()
    schedule.check_bound(params.M_bound)
    radiation = config.radiation_profile()
    solver = config.solver
    dt, N = config.time.dt, config.time.N
    depth = config.output.upper_depth
    every = config.output.snapshot_every

    result = ScenarioResult(config.schedule.label, mesh, dofmap)
    n2 = dofmap.scalar_q2_count
    theta0 = np.full(n2, params.theta0)
    theta = theta0.copy()
    v = np.zeros((n2, 2))
    p = np.zeros(dofmap.scalar_q1_count)
    B = assemble_divergence(mesh, dofmap)

    def record(step, th, vel, thermal_rep, hydro_rep, energy):
        rec = StepRecord(
            step=step, time_s=step * dt,
            mean_upper_K=mean_upper_layer_temperature(mesh, dofmap, th, depth),
            theta_min_K=float(th.min()), theta_max_K=float(th.max()),
            theta_l2=float(np.sqrt(energy.l2_sq)),
            div_v_l2=float(np.linalg.norm(B @ flatten_vector(vel))) if vel is not None else float("nan"),
            picard_iters=thermal_rep.iterations if thermal_rep else 0,
            uzawa_iters=hydro_rep.uzawa_iterations if hydro_rep else 0,
            energy1=energy.l2_sq, energy2=energy.grad_integral, energy3=energy.surface_l5_integral,
            velocity_l2=float(np.linalg.norm(flatten_vector(vel))) if vel is not None else float("nan"),
            hydro_picard_iters=hydro_rep.picard_iterations if hydro_rep else 0,
            constraint_residual=thermal_rep.constraint_residual if thermal_rep else 0.0,
            picard_changes=thermal_rep.changes if thermal_rep else (),
        )
        if not energy.is_finite():
            raise NumericalError(f"energy monitor became non-finite at step {step}")
        result.records.append(rec)
        if progress:
            progress(rec)
        return rec

    def bc_at(n):
        return BoundaryData(params.theta_N, params.theta_S, radiation(n * dt))

    def keep(n):
        result.theta, result.velocity, result.pressure = theta, v, p
        if snapshot and every and n % every == 0:
            snapshot(n, mesh, dofmap, theta, v, p)

    energy = energy_monitor_update(mesh, dofmap, theta, dt, None)
    record(0, theta, v, None, None, energy)
    keep(0)
    if N == 0:
        return result

    step = 1
    try:
        theta, trep = solve_temperature_step(
            mesh, dofmap, theta, v, (), bc_at(1), params, dt, first_step=True,
            tol=solver.picard_tol, max_iter=solver.picard_max, radiative=solver.radiative, cg_tol=solver.cg_tol,
            constraint_tol=solver.constraint_tol)
        for n in range(1, N + 1):
            step = n
            g = schedule.rates(n)
            v, p, hrep = solve_velocity_step(
                mesh, dofmap, v, p, theta, theta0, g, params, dt,
                tol=solver.hydro_tol, max_iter=solver.hydro_max, uzawa_tol=solver.uzawa_tol,
                uzawa_max=solver.uzawa_max, uzawa_step=solver.uzawa_step, cg_tol=solver.cg_tol)
            energy = energy_monitor_update(mesh, dofmap, theta, dt, energy)
            record(n, theta, v, trep, hrep, energy)
            keep(n)
            step = n + 1
            theta, trep = solve_temperature_step(
                mesh, dofmap, theta, v, pump_modes(g), bc_at(n + 1), params, dt,
                tol=solver.picard_tol, max_iter=solver.picard_max, radiative=solver.radiative, cg_tol=solver.cg_tol,
                constraint_tol=solver.constraint_tol)
        energy = energy_monitor_update(mesh, dofmap, theta, dt, energy)
        record(N + 1, theta, None, trep, None, energy)
        result.theta = theta
        if snapshot:
            snapshot(N + 1, mesh, dofmap, theta, v, p)
    except (StepError, NumericalError) as exc:
        log.error("step %d failed: %s", step, exc)
        result.failed_step = step
        result.error = str(exc)
        result.error_kind = type(exc).__name__
    return result
