"""Penalized decentralized personalized federated learning solver.

Minimizes the average of strongly convex local losses plus a
gossip-matrix quadratic penalty over a simulated decentralized network,
using a restarted accelerated meta-algorithm with two-case
gradient/communication sliding, with exact communication-round and local
gradient-call accounting.
"""

from .diagnostics import (
    ConvergenceTrace,
    ReferenceSolution,
    ScalingReport,
    constraint_gap,
    exact_solve_quadratic,
    fit_complexity_scaling,
    lambda_for_accuracy,
)
from .objectives import (
    LogisticLoss,
    OracleCounters,
    PenalizedProblem,
    QuadraticLoss,
    random_logistic_problem,
    random_quadratic_problem,
)
from .simnet import SimNetwork
from .solver import (
    AmState,
    CaseSplit,
    NonconvergenceError,
    SolverConfig,
    SolverConfigError,
    am_step,
    inner_tolerance,
    restart_schedule,
    run_ram,
    select_case,
    solve_aux_case1,
    solve_aux_case2,
)
from .stacked import StackedPoint
from .topology import (
    GossipMatrix,
    SpectralBounds,
    Topology,
    build_gossip,
    mean_field_gossip,
    split_consensus,
)

__version__ = "0.1.0"

__all__ = [
    "AmState",
    "CaseSplit",
    "ConvergenceTrace",
    "GossipMatrix",
    "LogisticLoss",
    "NonconvergenceError",
    "OracleCounters",
    "PenalizedProblem",
    "QuadraticLoss",
    "ReferenceSolution",
    "ScalingReport",
    "SimNetwork",
    "SolverConfig",
    "SolverConfigError",
    "SpectralBounds",
    "StackedPoint",
    "Topology",
    "am_step",
    "build_gossip",
    "constraint_gap",
    "exact_solve_quadratic",
    "fit_complexity_scaling",
    "inner_tolerance",
    "lambda_for_accuracy",
    "mean_field_gossip",
    "random_logistic_problem",
    "random_quadratic_problem",
    "restart_schedule",
    "run_ram",
    "select_case",
    "solve_aux_case1",
    "solve_aux_case2",
    "split_consensus",
]
