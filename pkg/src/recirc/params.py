"""Physical coefficients of the coupled thermal / hydrodynamic model."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ParameterError

# Table values for the reservoir example.  Density is in g m^-3 and c_p in
# W s g^-1 K^-1 as printed, so rho * c_p = 4158 and b1 = h / (rho c_p) comes
# out as 7.215e-2 m/s.
TABLE_DEFAULTS = {
    "nu": 1.3e-3,
    "nu_tur": 5.0e-2,
    "K": 1.4e-5,
    "h_N": 3.0e2,
    "h_S": 3.0e2,
    "rho": 9.9e2,
    "c_p": 4.2,
    "theta0": 283.0,
    "theta_S": 286.0,
    "theta_N": 283.0,
    "alpha0": 8.7e-7,
}

# Not in the table (no emissivity given): placeholder, override for real studies.
DEFAULT_B2S = 5.5e-8
DEFAULT_M_BOUND = 1.0e-1
STEFAN_BOLTZMANN = 5.670374419e-8  # W m^-2 K^-4
WATER_EMISSIVITY = 0.97


def radiative_coefficient(emissivity: float = WATER_EMISSIVITY, rho: float = 9.9e2, c_p: float = 4.2) -> float:
    """b2 = sigma * emissivity / (rho c_p), the radiative analogue of b1 = h / (rho c_p)."""
    return STEFAN_BOLTZMANN * emissivity / (rho * c_p)
GRAVITY = 9.81


def convective_coefficient(h: float, rho: float, c_p: float) -> float:
    """b1 such that rho * c_p * b1 = h."""
    return h / (rho * c_p)


@dataclass(frozen=True)
class PhysicalParams:
    nu: float = TABLE_DEFAULTS["nu"]
    nu_tur: float = TABLE_DEFAULTS["nu_tur"]
    K: float = TABLE_DEFAULTS["K"]
    b1N: float = convective_coefficient(3.0e2, 9.9e2, 4.2)
    b1S: float = convective_coefficient(3.0e2, 9.9e2, 4.2)
    b2S: float = DEFAULT_B2S
    alpha0: float = TABLE_DEFAULTS["alpha0"]
    theta0: float = TABLE_DEFAULTS["theta0"]
    theta_S: float = TABLE_DEFAULTS["theta_S"]
    theta_N: float = TABLE_DEFAULTS["theta_N"]
    M_bound: float = DEFAULT_M_BOUND
    gravity: float = GRAVITY

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ParameterError(f"{f.name} must be finite, got {v}")
        if self.nu <= 0 or self.K <= 0:
            raise ParameterError("nu and K must be positive")
        if min(self.nu_tur, self.b1N, self.b1S, self.b2S) < 0:
            raise ParameterError("nu_tur, b1N, b1S and b2S must be non-negative")
        if self.M_bound <= 0:
            raise ParameterError("M_bound must be positive")

    @property
    def gravity_vector(self) -> np.ndarray:
        return np.array([0.0, -self.gravity])
