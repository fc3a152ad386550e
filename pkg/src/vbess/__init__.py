"""Scheduling and evaluation of shared, virtualized home batteries."""

from .exceptions import IngestionError, SolverError, ValidationError
from .mpc import MpcRun, no_battery, run_mpc, run_perfect_foresight
from .schemes import SchemeConfig, SchemeKind, SchemeSolution, build_scheme, decode, solve_scheme
from .study import bill, compare_schemes, sample_trial, sweep_partition
from .thermal import simulate_transformer
from .timeseries import (
    BatterySpec,
    HomeProfile,
    NeighborhoodData,
    TariffSchedule,
    TimeGrid,
    TransformerSpec,
    expand_tariff,
    load_profiles,
    synthesize_neighborhood,
)

__version__ = "0.1.0"
