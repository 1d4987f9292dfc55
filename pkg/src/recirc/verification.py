"""Self-checks against closed-form and independent oracles.

Each check returns a :class:`Check`; ``run_all`` is what ``recirc verify``
executes.  The same functions back the acceptance suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, parse_config
from .fem import (assemble_hydro_blocks, field_at_quadrature, integrate,
                  lumped_pressure_mass, unflatten_vector)
from .mesh import PumpLayout, build_dofmap, build_rect_mesh
from .params import PhysicalParams
from .simulation import ScenarioResult, run_simulation
from .solvers import uzawa_solve
from .thermal import (BoundaryData, CollectorHistory, MollifierSpec, injector_trace_convolution,
                      mollifier_constant, mollifier_value, solve_temperature_step)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.value:.3e} vs {self.threshold:.1e}{extra}"


def _square(h: float, pattern: str = "symmetric"):
    mesh = build_rect_mesh(1.0, 1.0, h, PumpLayout(), pattern=pattern)
    return mesh, build_dofmap(mesh)


def _l2_error(mesh, dofmap, field, exact_fn) -> float:
    from .fem import element_geometry
    qp = element_geometry(mesh).quad_points
    diff = field_at_quadrature(mesh, dofmap, field) - exact_fn(qp[..., 0], qp[..., 1])
    return math.sqrt(integrate(mesh, diff ** 2))


# -- equilibrium -----------------------------------------------------------

EQUILIBRIUM_CONFIG = """\
domain.width = 10.0
domain.height = 6.0
domain.h = 1.0
time.dt = 1800.0
time.N = 10
physics.theta0 = 283.0
physics.theta_S = 283.0
physics.theta_N = 283.0
physics.b2S = 0.0
schedule.preset = NNNN
layout.pairs = 4
layout.C1 = left 4.0 5.0
layout.T1 = bottom 1.0 2.0
layout.C2 = left 2.0 3.0
layout.T2 = bottom 3.0 4.0
layout.C3 = right 2.0 3.0
layout.T3 = bottom 8.0 9.0
layout.C4 = right 4.0 5.0
layout.T4 = bottom 6.0 7.0
"""


def equilibrium_config() -> RunConfig:
    return parse_config(EQUILIBRIUM_CONFIG)


def check_equilibrium(result: ScenarioResult | None = None) -> Check:
    """Uniform data, no radiation, pumps off: theta stays 283 and v stays 0."""
    res = result or run_simulation(equilibrium_config())
    if not res.ok:
        return Check("equilibrium", False, math.inf, 1e-9, res.error or "")
    dev = max(max(abs(r.theta_min_K - 283.0), abs(r.theta_max_K - 283.0), abs(r.mean_upper_K - 283.0))
              for r in res.records)
    vmax = float(np.max(np.abs(res.velocity)))
    return Check("equilibrium", dev <= 1e-9 and vmax == 0.0, max(dev, vmax), 1e-9,
                 f"{len(res.records)} rows, max |v| = {vmax:.1e}")


# -- manufactured diffusion --------------------------------------------------

def manufactured_diffusion_errors(hs=(0.25, 0.125, 0.0625), dt: float = 1e-4, T: float = 0.1):
    """L2 errors at ``T`` for ``theta* = exp(-t) cos(pi x) cos(pi y)`` with ``K = 1/(2 pi^2)``.

    The exact field has zero normal derivative on the unit square, so Robin
    data equal to its trace keeps it an exact solution for any ``b1``.
    """
    K = 1.0 / (2.0 * math.pi ** 2)
    params = PhysicalParams(nu=1.0, nu_tur=0.0, K=K, b1N=1.0, b1S=1.0, b2S=0.0, alpha0=0.0,
                            theta0=0.0, theta_S=0.0, theta_N=0.0)
    steps = int(round(T / dt))
    errors = []
    for h in hs:
        mesh, dofmap = _square(h)
        xy = dofmap.node_coords
        shape = np.cos(np.pi * xy[:, 0]) * np.cos(np.pi * xy[:, 1])
        theta = shape.copy()
        zero_v = np.zeros((dofmap.scalar_q2_count, 2))
        for n in range(1, steps + 1):
            data = math.exp(-n * dt) * shape
            theta, _ = solve_temperature_step(mesh, dofmap, theta, zero_v, (), BoundaryData(data, data, 0.0),
                                              params, dt, first_step=(n == 1), cg_tol=1e-13)
        t = steps * dt
        errors.append(_l2_error(mesh, dofmap, theta,
                                lambda x, y: math.exp(-t) * np.cos(np.pi * x) * np.cos(np.pi * y)))
    return np.array(errors)


def observed_orders(errors, ratio: float = 2.0) -> np.ndarray:
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / math.log(ratio)


def check_manufactured_diffusion(errors=None) -> Check:
    errors = manufactured_diffusion_errors() if errors is None else errors
    orders = observed_orders(errors)
    return Check("manufactured diffusion spatial order", bool(np.all(orders >= 2.5)), float(orders.min()), 2.5,
                 "errors " + ", ".join(f"{e:.2e}" for e in errors))


# -- semi-Lagrangian transport ------------------------------------------------

# Backward Euler approaches order 1 from below unless diffusion has smeared the
# pulse well past its initial width (T K / sigma^2 of a few), hence the long run.
TRANSPORT_SETUP = dict(L=3.2, h=0.05, K=0.03, sigma=0.1, center=(1.45, 1.5), velocity=(0.1, 0.05), T=1.5)


def gaussian_exact(x, y, t, K, sigma, center, velocity):
    var = sigma ** 2 + 2.0 * K * t
    cx, cy = center[0] + velocity[0] * t, center[1] + velocity[1] * t
    return sigma ** 2 / var * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * var))


def transport_errors(dts=(0.1, 0.05, 0.025, 0.0125), L=None, h=None, K=None, sigma=None, center=None,
                     velocity=None, T=None):
    """L2 errors at ``T`` of a Gaussian carried by a uniform velocity while it diffuses.

    Pure translation has exact characteristics, so the diffusion supplies
    the time-discretisation error that the refinement in ``dt`` measures.
    """
    s = dict(TRANSPORT_SETUP)
    s.update({k: v for k, v in dict(L=L, h=h, K=K, sigma=sigma, center=center, velocity=velocity, T=T).items()
              if v is not None})
    mesh = build_rect_mesh(s["L"], s["L"], s["h"], PumpLayout())
    dofmap = build_dofmap(mesh)
    params = PhysicalParams(nu=1.0, nu_tur=0.0, K=s["K"], b1N=0.0, b1S=0.0, b2S=0.0, alpha0=0.0,
                            theta0=0.0, theta_S=0.0, theta_N=0.0)
    xy = dofmap.node_coords
    vel = np.tile(np.asarray(s["velocity"], dtype=float), (dofmap.scalar_q2_count, 1))
    args = (s["K"], s["sigma"], s["center"], s["velocity"])
    errors = []
    for dt in dts:
        steps = int(round(s["T"] / dt))
        theta = gaussian_exact(xy[:, 0], xy[:, 1], 0.0, *args)
        for n in range(1, steps + 1):
            theta, _ = solve_temperature_step(mesh, dofmap, theta, vel, (), BoundaryData(0.0, 0.0, 0.0),
                                              params, dt, first_step=True, cg_tol=1e-13)
        t = steps * dt
        errors.append(_l2_error(mesh, dofmap, theta, lambda x, y: gaussian_exact(x, y, t, *args)))
    return np.array(errors)


def check_transport(errors=None) -> Check:
    errors = transport_errors() if errors is None else errors
    orders = observed_orders(errors)
    monotone = bool(np.all(np.diff(errors) < 0))
    fitted = float(-np.polyfit(np.log(2.0) * np.arange(len(errors)), np.log(errors), 1)[0])
    return Check("semi-Lagrangian temporal order", monotone and fitted >= 1.0, fitted, 1.0,
                 "pairwise " + ", ".join(f"{o:.4f}" for o in orders) + ("" if monotone else ", not monotone"))


# -- Stokes / Uzawa ----------------------------------------------------------

def poiseuille_error(h: float = 0.25, U: float = 1.0, nu: float = 1.0):
    """Channel ``[0, 2] x [0, 1]`` with the parabolic profile imposed on the whole boundary.

    Returns the max relative velocity error and the pressure slope (exact
    ``-8 nu U``).
    """
    mesh = build_rect_mesh(2.0, 1.0, h, PumpLayout())
    dofmap = build_dofmap(mesh)
    n = dofmap.scalar_q2_count
    xy = dofmap.node_coords
    exact = np.zeros((n, 2))
    exact[:, 0] = 4.0 * U * xy[:, 1] * (1.0 - xy[:, 1])
    params = PhysicalParams(nu=nu, nu_tur=0.0, K=1.0, alpha0=0.0, b1N=0.0, b1S=0.0, b2S=0.0)
    dt = 1e3
    from .transport import advected_rhs
    adv = advected_rhs(mesh, dofmap, exact, exact, dt)
    bd = dofmap.all_boundary_dofs
    blocks = assemble_hydro_blocks(mesh, dofmap, params, dt, exact, 283.0, 283.0, adv,
                                   boundary_velocity=(bd, exact[bd]))
    flat, p, rep = uzawa_solve(blocks, tol_div=1e-13, max_outer=2000, cg_tol=1e-14)
    v = unflatten_vector(flat)
    rel = float(np.max(np.abs(v - exact)) / np.max(np.abs(exact)))
    verts = mesh.vertices
    slope = float(np.polyfit(verts[:, 0], p, 1)[0])
    return rel, slope, rep


def check_poiseuille() -> Check:
    rel, slope, rep = poiseuille_error()
    return Check("Poiseuille velocity", rel <= 1e-8, rel, 1e-8, f"pressure slope {slope:.6f}, {rep.iterations} Uzawa")


def dense_saddle_comparison(width: float = 2.0, height: float = 1.0, h: float = 0.5, seed: int = 3):
    """Uzawa versus a dense solve of ``[[A, B^T, 0], [B, 0, m], [0, m^T, 0]]``.

    ``m`` is the lumped pressure mass that pins the pressure mean to zero.
    Buoyancy from a random temperature field drives the flow.
    """
    mesh = build_rect_mesh(width, height, h, PumpLayout())
    dofmap = build_dofmap(mesh)
    n = dofmap.scalar_q2_count
    rng = np.random.default_rng(seed)
    theta = 283.0 + rng.standard_normal(n)
    params = PhysicalParams(nu=0.1, nu_tur=0.0, K=1.0, alpha0=1e-2, b1N=0.0, b1S=0.0, b2S=0.0)
    dt = 10.0
    zero = np.zeros((n, 2))
    blocks = assemble_hydro_blocks(mesh, dofmap, params, dt, zero, theta, 283.0, zero)
    flat, p, rep = uzawa_solve(blocks, tol_div=1e-12, max_outer=5000, cg_tol=1e-14)

    A = blocks.A.toarray()
    B = blocks.B.toarray()
    free = np.ones(2 * n, dtype=bool)
    free[blocks.dirichlet_dofs] = False
    Af, Bf = A[np.ix_(free, free)], B[:, free]
    nf, npr = int(free.sum()), B.shape[0]
    m = lumped_pressure_mass(mesh, dofmap)
    K = np.zeros((nf + npr + 1, nf + npr + 1))
    K[:nf, :nf] = Af
    K[:nf, nf:nf + npr] = Bf.T
    K[nf:nf + npr, :nf] = Bf
    K[nf:nf + npr, -1] = m
    K[-1, nf:nf + npr] = m
    rhs = np.concatenate([blocks.f[free], np.zeros(npr + 1)])
    sol = np.linalg.solve(K, rhs)
    v_dense = np.zeros(2 * n)
    v_dense[free] = sol[:nf]
    p_dense = sol[nf:nf + npr]
    return float(np.max(np.abs(flat - v_dense))), float(np.max(np.abs(p - p_dense))), rep


def check_dense_saddle() -> Check:
    dv, dp, rep = dense_saddle_comparison()
    err = max(dv, dp)
    return Check("Uzawa vs dense saddle solve", err <= 1e-6, err, 1e-6, f"velocity {dv:.1e}, pressure {dp:.1e}")


# -- radiation ---------------------------------------------------------------

RADIATION_SETUP = dict(h=0.25, b2S=1e-10, T_r=300.0, theta0=283.0, dt=1.0, steps=10)


def radiative_relaxation(h=None, b2S=None, T_r=None, theta0=None, dt=None, steps=None):
    """Insulated unit square heated only through the radiating top side.

    Returns ``(fe_means, ode_values, fields)``; the oracle integrates
    ``d theta/dt = b2S |S| / |Omega| (T_r^4 - theta^4)`` with classical RK4.
    """
    s = dict(RADIATION_SETUP)
    s.update({k: v for k, v in dict(h=h, b2S=b2S, T_r=T_r, theta0=theta0, dt=dt, steps=steps).items()
              if v is not None})
    mesh, dofmap = _square(s["h"])
    params = PhysicalParams(nu=1.0, nu_tur=0.0, K=1.0, b1N=0.0, b1S=0.0, b2S=s["b2S"], alpha0=0.0,
                            theta0=s["theta0"], theta_S=0.0, theta_N=0.0)
    theta = np.full(dofmap.scalar_q2_count, s["theta0"])
    zero_v = np.zeros((dofmap.scalar_q2_count, 2))
    bc = BoundaryData(0.0, 0.0, s["T_r"])
    means, fields = [], []
    for n in range(1, s["steps"] + 1):
        theta, _ = solve_temperature_step(mesh, dofmap, theta, zero_v, (), bc, params, s["dt"],
                                          first_step=(n == 1), cg_tol=1e-13)
        means.append(integrate(mesh, field_at_quadrature(mesh, dofmap, theta)))
        fields.append(theta.copy())

    def rhs(y):
        return s["b2S"] * (s["T_r"] ** 4 - y ** 4)

    y, ode = s["theta0"], []
    sub = 100
    k = s["dt"] / sub
    for _ in range(s["steps"]):
        for _ in range(sub):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * k * k1)
            k3 = rhs(y + 0.5 * k * k2)
            k4 = rhs(y + k * k3)
            y += k * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        ode.append(y)
    return np.array(means), np.array(ode), fields


def check_radiative_relaxation() -> Check:
    """Per-step agreement of the temperature rise with the lumped ODE, plus the bracket."""
    theta0, T_r = RADIATION_SETUP["theta0"], RADIATION_SETUP["T_r"]
    means, ode, fields = radiative_relaxation()
    rel = np.abs((means - theta0) - (ode - theta0)) / np.abs(ode - theta0)
    bracket = all(f.min() >= theta0 - 1e-9 and f.max() <= T_r + 1e-9 for f in fields)
    monotone = bool(np.all(np.diff(np.concatenate([[theta0], means])) > 0))
    ok = bool(rel.max() <= 0.05) and bracket and monotone
    return Check("radiative relaxation vs RK4", ok, float(rel.max()), 0.05,
                 f"bracket {'ok' if bracket else 'violated'}, monotone {'ok' if monotone else 'violated'}")


# -- mollifier ---------------------------------------------------------------

def mollifier_reference_constant() -> float:
    """Independent value of ``c`` from mpmath's tanh-sinh quadrature."""
    import mpmath
    mpmath.mp.dps = 30
    val = mpmath.quad(lambda t: mpmath.exp(t * t / (t * t - 1)), [-1, 0, 1])
    return float(1 / val)


def mollifier_mass(eps: float) -> float:
    from scipy.integrate import quad
    val, _ = quad(lambda t: mollifier_value(t, eps), -eps, eps, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def ramp_convolution(t: float, eps: float, slope: float = 0.01, base: float = 283.0, fine: int = 2_000_001):
    """Quadrature result and a fine trapezoid oracle for the ramp history.

    The history is ``base`` before time zero and ``base + slope s`` after.
    """
    history = CollectorHistory(base, np.array([1e9]), np.array([base + slope * 1e9]))
    got = injector_trace_convolution(history, t, MollifierSpec(eps))
    s = np.linspace(t - 2 * eps, t, fine)
    w = mollifier_value(t - eps - s, eps) * np.where(s <= 0, base, base + slope * s)
    ref = float(np.sum(0.5 * (w[1:] + w[:-1]) * np.diff(s)))
    return got, ref


def check_mollifier() -> list[Check]:
    c_ref = mollifier_reference_constant()
    checks = [Check("mollifier constant", abs(mollifier_constant() - c_ref) <= 1e-10,
                    abs(mollifier_constant() - c_ref), 1e-10, f"c = {mollifier_constant():.15f}")]
    masses = [abs(mollifier_mass(e) - 1.0) for e in (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)]
    checks.append(Check("mollifier unit mass", max(masses) <= 1e-9, max(masses), 1e-9, "eps 1e-3 .. 1e3"))
    diffs = []
    for t, eps in ((3600.0, 900.0), (600.0, 900.0), (50.0, 10.0)):
        got, ref = ramp_convolution(t, eps)
        diffs.append(abs(got - ref))
    checks.append(Check("injector convolution ramp", max(diffs) <= 1e-6, max(diffs), 1e-6))
    return checks


def run_all(quick: bool = False) -> list[Check]:
    """Every check; ``quick`` drops the finest refinement levels."""
    out = [check_equilibrium()]
    if quick:
        out.append(check_manufactured_diffusion(manufactured_diffusion_errors(hs=(0.25, 0.125))))
    else:
        out.append(check_manufactured_diffusion())
        out.append(check_transport())
    out += [check_poiseuille(), check_dense_saddle(), check_radiative_relaxation()]
    out += check_mollifier()
    return out
