"""Multi-population mean-field models with label switching.

Agents carry a position in R^d and a probability vector over a finite label
set.  Positions move under nonlocal interaction kernels; label vectors evolve
by a state- and population-dependent Markov generator.  The package provides
the particle system, a finite-volume solver for the label densities in one
dimension, exact transport metrics and an experiment harness.
"""
import os as _os

for _backend in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
    _os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

from .continuum import GameKernelSpec, GameModel, coarsen, discretize_generator, game_velocity
from .engine import SimConfig, Trajectory, simulate, stability_experiment, step, support_bound_check
from .initial import InitialLaw
from .kernels import ConstantKernel, GaussianInteraction, LinearAttraction, ZeroKernel
from .measures import (
    AgentState,
    DiscreteSpatialMeasure,
    EmpiricalMeasure,
    LabelSpace,
    bl_distance,
    bl_norm,
    label_marginal,
    label_marginals,
    w1_product,
    w1_spatial,
)
from .model import ModelSpec, eval_rate_matrix, eval_velocity, validate_assumptions
from .pde import Grid1D, GriddedDensities, lift_initial_datum, pde_step, solve_pde, weak_form_residual
from .rates import RateSpec, apply_adjoint, transition_matrix

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "ConstantKernel",
    "DiscreteSpatialMeasure",
    "EmpiricalMeasure",
    "GameKernelSpec",
    "GameModel",
    "GaussianInteraction",
    "Grid1D",
    "GriddedDensities",
    "InitialLaw",
    "LabelSpace",
    "LinearAttraction",
    "ModelSpec",
    "RateSpec",
    "SimConfig",
    "Trajectory",
    "ZeroKernel",
    "apply_adjoint",
    "bl_distance",
    "bl_norm",
    "coarsen",
    "discretize_generator",
    "eval_rate_matrix",
    "eval_velocity",
    "game_velocity",
    "label_marginal",
    "label_marginals",
    "lift_initial_datum",
    "pde_step",
    "simulate",
    "solve_pde",
    "stability_experiment",
    "step",
    "support_bound_check",
    "transition_matrix",
    "validate_assumptions",
    "w1_product",
    "w1_spatial",
    "weak_form_residual",
]
