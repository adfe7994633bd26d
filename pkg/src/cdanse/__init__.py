"""Taylor-Hood steady Navier-Stokes solver with continuous data assimilation.

The package solves the 2D steady incompressible Navier-Stokes equations with
a P2/P1 mixed method, optionally augmented by a nudging term
``mu (I_H w - I_H u)`` that relaxes the solution toward coarse observations,
and evaluates the small/large-data uniqueness conditions for that problem.
"""

from .analysis import DualNorms, ErrorReport, dual_norm_estimate, error_vs_exact, norms
from .errors import LinearSolveError, OutOfDomainError
from .mesh import StructuredTriMesh, build_rect_mesh
from .mms import ManufacturedSolution, builtin_paper_solution, forcing_from_solution, get_solution
from .observation import (
    CoarseObservation,
    ObservationOperator,
    build_observation,
    estimate_CI,
    load_observations,
)
from .solver import (
    SolveConfig,
    SolveReport,
    picard_step,
    solve_cda_nse,
    solve_linear,
    solve_nse,
    solve_stokes,
)
from .spaces import TaylorHoodSpace, VelocityPressureField, build_taylor_hood, interpolate_function
from .theory import ConditionReport, TheoryConstants, compute_alpha, proof_chain_check, theorem_bounds

__version__ = "0.1.0"

__all__ = [
    "ConditionReport",
    "CoarseObservation",
    "DualNorms",
    "ErrorReport",
    "LinearSolveError",
    "ManufacturedSolution",
    "ObservationOperator",
    "OutOfDomainError",
    "SolveConfig",
    "SolveReport",
    "StructuredTriMesh",
    "TaylorHoodSpace",
    "TheoryConstants",
    "VelocityPressureField",
    "build_observation",
    "build_rect_mesh",
    "build_taylor_hood",
    "builtin_paper_solution",
    "compute_alpha",
    "dual_norm_estimate",
    "error_vs_exact",
    "estimate_CI",
    "forcing_from_solution",
    "get_solution",
    "interpolate_function",
    "load_observations",
    "norms",
    "picard_step",
    "proof_chain_check",
    "solve_cda_nse",
    "solve_linear",
    "solve_nse",
    "solve_stokes",
    "theorem_bounds",
]
