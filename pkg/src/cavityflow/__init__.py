"""Galerkin model of a rigid body with a fluid-filled spherical cavity."""

from .ball_basis import BasisFunction, BasisSet, DomainSpec, Family, build_basis, make_grid
from .cache import CacheEntry, cache_load, cache_store
from .config import RunConfig, load_config, parse_config
from .coupling import CouplingTensors, InertiaSpec, build_tensors
from .dynamics import IntegratorConfig, Scheme, SimState, energy_identity_residual, integrate, monitors, rhs
from .equilibria import Classification, classify, find_equilibria, linearize, stability_of
from .errors import (
    AssemblyError,
    CacheError,
    CavityFlowError,
    ConfigError,
    ConfigurationError,
    ConsistencyError,
    FitError,
    NumericalFailure,
    OracleError,
    ParameterError,
)
from .fitting import fit_decay
from .rng import SplitMix64
from .stokes_modes import FluidParams, ModeSet, compute_modes, korn_constant, shooting_oracle

__version__ = "0.1.0"
