"""Stationary equilibrium of a dealer market with an informed insider:
propagator fixed point, Markovian closed forms, and Monte Carlo verification."""

__version__ = "0.1.0"

from .acf import AcfSpec, ToeplitzMatrix, acf_eval, acf_values, forecast_matrix
from .diagnostics import (
    DiagnosticsReport,
    camouflage_error,
    diagnostics_report,
    efficiency_error,
    it_return_acf,
)
from .errors import (
    BracketingError,
    ConditioningError,
    ConfigError,
    DivergenceError,
    DomainError,
    KyleError,
    SizeError,
    TailError,
)
from .kernels import CausalKernel, DemandKernels, compute_demand_kernels
from .markov import (
    MarkovEquilibrium,
    closed_form_equal_timescales,
    closed_form_uncorrelated,
    continuum_limit_G,
    fit_two_exponential,
    markov_demand_kernels,
    markov_observables,
    markov_propagator,
    solve_markov_ansatz,
)
from .pricing import propagator_update
from .simulate import (
    MarketPath,
    empirical_acf,
    payoff_and_risk_stats,
    sample_stationary_gaussian,
    simulate_market,
)
from .solver import (
    EquilibriumSolution,
    price_acf_from_G,
    solve_equilibrium,
    variogram_from_sigma,
)

__all__ = [
    "AcfSpec",
    "BracketingError",
    "CausalKernel",
    "ConditioningError",
    "ConfigError",
    "DemandKernels",
    "DiagnosticsReport",
    "DivergenceError",
    "DomainError",
    "EquilibriumSolution",
    "KyleError",
    "MarketPath",
    "MarkovEquilibrium",
    "SizeError",
    "TailError",
    "ToeplitzMatrix",
    "acf_eval",
    "acf_values",
    "camouflage_error",
    "closed_form_equal_timescales",
    "closed_form_uncorrelated",
    "compute_demand_kernels",
    "continuum_limit_G",
    "diagnostics_report",
    "efficiency_error",
    "empirical_acf",
    "fit_two_exponential",
    "forecast_matrix",
    "it_return_acf",
    "markov_demand_kernels",
    "markov_observables",
    "markov_propagator",
    "payoff_and_risk_stats",
    "price_acf_from_G",
    "propagator_update",
    "sample_stationary_gaussian",
    "simulate_market",
    "solve_equilibrium",
    "solve_markov_ansatz",
    "variogram_from_sigma",
    "__version__",
]
