"""Dense convex QP solver that runs ADMM as a repeated affine map plus clamp,
with a condensed, LQR-preconditioned MPC front end."""

from .layers import (LayerCache, PenaltyGrid, Scaling, build_kkt_inverse, build_layer,
                     build_penalty_grid, precompute_all, ruiz_equilibrate)
from .mpc import (BoxLimits, CondensedTemplate, LinearSystem, MpcWeights, build_condensed_mpc,
                  build_direct_mpc, condition_report, instantiate, lqr_gain, recover_trajectory)
from .problem import (ConstraintKind, ProblemError, QProblem, Solution, Status, parse_problem,
                      serialize_problem, validate)
from .solver import (SolveReport, SolverSettings, fixed_iters, iterate, residuals, rho_nominal,
                     select_layer, solve, warm_start)

__version__ = "0.1.0"

__all__ = [
    "BoxLimits", "CondensedTemplate", "ConstraintKind", "LayerCache", "LinearSystem", "MpcWeights",
    "PenaltyGrid", "ProblemError", "QProblem", "Scaling", "Solution", "SolveReport", "SolverSettings",
    "Status", "build_condensed_mpc", "build_direct_mpc", "build_kkt_inverse", "build_layer",
    "build_penalty_grid", "condition_report", "fixed_iters", "instantiate", "iterate", "lqr_gain",
    "parse_problem", "precompute_all", "recover_trajectory", "residuals", "rho_nominal",
    "ruiz_equilibrate", "select_layer", "serialize_problem", "solve", "validate", "warm_start",
]
