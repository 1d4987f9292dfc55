"""Coupled heat transport and Smagorinsky flow in a recirculated reservoir.

P2 temperature, Taylor-Hood velocity/pressure, semi-Lagrangian transport,
and scenario runs driven by collector/injector pump schedules.
"""
from .config import RunConfig, dump_config, load_config, parse_config
from .errors import (ConfigError, LayoutError, NumericalError, OutputError, ParameterError, QueryError,
                     RecircError, ScheduleError, StepError)
from .mesh import DofMap, Mesh, PumpLayout, PumpPair, Span, build_dofmap, build_rect_mesh, default_layout
from .params import PhysicalParams
from .simulation import PumpSchedule, RadiationProfile, ScenarioResult, run_simulation, scenario_preset

__all__ = [
    "RunConfig", "dump_config", "load_config", "parse_config",
    "ConfigError", "LayoutError", "NumericalError", "OutputError", "ParameterError", "QueryError",
    "RecircError", "ScheduleError", "StepError",
    "DofMap", "Mesh", "PumpLayout", "PumpPair", "Span", "build_dofmap", "build_rect_mesh", "default_layout",
    "PhysicalParams", "PumpSchedule", "RadiationProfile", "ScenarioResult", "run_simulation", "scenario_preset",
]
__version__ = "0.1.0"
