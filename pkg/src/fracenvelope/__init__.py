"""Fractional convex envelopes and their s -> 1 limit on lattice-line stencils."""
from .core import (Domain, DirectionSet, ExteriorDatum, FracParams, GridFunction,
                   make_datum, make_grid)
from .frac1d import ConvergenceError, LineProblem, frac_constant, solve_dirichlet_1d
from .envelope import classical_envelope, fractional_envelope, hull_envelope_oracle
from .sweep import SweepConfig, half_relaxed_gap, run_convergence_sweep

__version__ = "0.1.0"

__all__ = [
    "Domain", "DirectionSet", "ExteriorDatum", "FracParams", "GridFunction",
    "make_datum", "make_grid", "ConvergenceError", "LineProblem", "frac_constant",
    "solve_dirichlet_1d", "classical_envelope", "fractional_envelope",
    "hull_envelope_oracle", "SweepConfig", "half_relaxed_gap", "run_convergence_sweep",
]
