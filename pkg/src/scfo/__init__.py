"""Feasible-side experimental optimization.

Generates a sequence of experiment points that never violate the plant's
constraints, decrease the measured cost monotonically, and converge
arbitrarily close to a stationary point — with certified floors on the step
gain and a certified cap on the number of productive experiments.
"""

from .bench import builtin, derived_optimum, summarize
from .bounds import (
    filter_gain_floor,
    constraint_floor,
    linear_growth,
    max_feasible_iterations,
    quadratic_growth,
    validate_lipschitz,
    worst_case_growth,
)
from .engine import (
    IterateRecord,
    ProjectionParams,
    RunConfig,
    Trajectory,
    adapt_parameters,
    apply_filter,
    assemble_projection,
    epsilon_active,
    filter_gain_search,
    run,
    step,
)
from .fj import FJCertificate, certify_terminal, fj_error
from .model import (
    Box,
    LipschitzData,
    Measurement,
    PlantOracle,
    ProblemSpec,
    ProjectionCeilings,
    evaluate_numerical,
    validate_initial_point,
)
from .qp import HalfspaceSet, lp_feasible, qp_project

__version__ = "0.1.0"

__all__ = [
    "Box",
    "LipschitzData",
    "Measurement",
    "PlantOracle",
    "ProblemSpec",
    "ProjectionCeilings",
    "HalfspaceSet",
    "IterateRecord",
    "ProjectionParams",
    "RunConfig",
    "Trajectory",
    "FJCertificate",
    "builtin",
    "derived_optimum",
    "summarize",
    "validate_initial_point",
    "evaluate_numerical",
    "linear_growth",
    "quadratic_growth",
    "worst_case_growth",
    "filter_gain_floor",
    "constraint_floor",
    "max_feasible_iterations",
    "validate_lipschitz",
    "lp_feasible",
    "qp_project",
    "epsilon_active",
    "assemble_projection",
    "filter_gain_search",
    "apply_filter",
    "adapt_parameters",
    "step",
    "run",
    "fj_error",
    "certify_terminal",
    "__version__",
]
