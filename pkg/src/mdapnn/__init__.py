"""Micro-macro physics-informed networks for 1D gray radiative transfer.

The package provides, in dependency order:

    autodiff    array-valued reverse-mode tape
    net         tanh MLPs, analytic forward jets, parameter vector
    sampling    Gauss-Legendre rules, Sobol collocation, sample sets
    model       problem specs, residuals, loss assemblies, AP-limit check
    solvers     deterministic references: S_N transport, diffusion limit,
                stationary sweep
    train       Adam loop, metrics, persistence
    config      INI experiment schema
    experiment  reference/train/evaluate pipelines and exports
    cli         the `mdapnn` command
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, ContractViolation, NumericalError
from .model import (BoundaryCondition, InitialCondition, LossWeights,
                    ProblemSpec, validate_problem)
from .net import forward, forward_jet, forward_values, init_network
from .sampling import build_sample_sets, gauss_legendre, sobol_points
from .solvers import (Grid1D, ReferenceSolution, solve_diffusion_limit,
                      solve_stationary, solve_transport_sn)
from .train import AdamHyper, l2_relative_error, radiation_temperature, train
from .config import ExperimentConfig, parse_config
from .experiment import ResultTable, run_experiment

__all__ = [
    "AdamHyper", "BoundaryCondition", "ConfigurationError",
    "ContractViolation", "ExperimentConfig", "Grid1D", "InitialCondition",
    "LossWeights", "NumericalError", "ProblemSpec", "ReferenceSolution",
    "ResultTable", "build_sample_sets", "forward", "forward_jet",
    "forward_values", "gauss_legendre", "init_network", "l2_relative_error",
    "parse_config", "radiation_temperature", "run_experiment",
    "sobol_points", "solve_diffusion_limit", "solve_stationary",
    "solve_transport_sn", "train", "validate_problem",
]
