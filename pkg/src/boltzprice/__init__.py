"""Numerical solvers for a Boltzmann-type price formation model.

Submodules: ``grid`` (mesh, shifts, quadrature, tridiagonal solves),
``boltzmann`` (kinetic buyer/vendor system), ``fbp`` (free-boundary model via
its transformed heat equation), ``layer`` (fast-time initial layer),
``limit`` (high-frequency scaling limit and the consecutive-limit reference),
``diagnostics`` (monitored quantities and error metrics), and the
``config``/``runner``/``cli`` harness.
"""
from __future__ import annotations

from .boltzmann import BoltzmannSolver, BoltzmannState, ModelParams, run_boltzmann, step_boltzmann, transaction_volume
from .diagnostics import (
    DiagnosticsRecord,
    ErrorMetrics,
    PriceSeries,
    compare_runs,
    price_estimate_boltzmann,
    support_width,
)
from .errors import HypothesisError, SolverError
from .fbp import FBPState, extract_price, reconstruct_densities, run_fbp, step_fbp, transform_initial
from .grid import Grid, integrate, negative_part, positive_part, shift_field, shift_steps, solve_tridiagonal
from .layer import LayerParams, LayerState, check_hypothesis, closed_form_limit, run_layer, step_layer
from .limit import LimitParams, consecutive_limit_reference, run_limit, step_limit

__version__ = "0.1.0"

__all__ = [
    "BoltzmannSolver", "BoltzmannState", "DiagnosticsRecord", "ErrorMetrics", "FBPState", "Grid",
    "HypothesisError", "LayerParams", "LayerState", "LimitParams", "ModelParams", "PriceSeries",
    "SolverError", "check_hypothesis", "closed_form_limit", "compare_runs", "consecutive_limit_reference",
    "extract_price", "integrate", "negative_part", "positive_part", "price_estimate_boltzmann",
    "reconstruct_densities", "run_boltzmann", "run_fbp", "run_layer", "run_limit", "shift_field",
    "shift_steps", "solve_tridiagonal", "step_boltzmann", "step_fbp", "step_layer", "step_limit",
    "support_width", "transaction_volume", "transform_initial",
]
