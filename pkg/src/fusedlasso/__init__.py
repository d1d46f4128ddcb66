"""Fused lasso solvers over arbitrary weighted graphs.

Squared, logistic and Cox losses with an L1 penalty on coefficients and an L1
penalty on coefficient differences along graph edges. Three solver routes:
``naive_cd`` (plain coordinate descent, fast but can stall), ``solve_exact``
(coordinate descent with max-flow based set splitting, globally optimal) and
``solve_huber`` (smoothed-penalty un-sticking, approximate). Plus
regularization paths, synthetic benchmark generators and optimality
verification.
"""

from .coordinate import CdConfig, ZeroColumnError, coordinate_minimize, naive_cd
from .flow import FlowNetwork, ResidualReachability, max_flow, residual_reachability
from .fusion import (
    CollapsedProblem,
    FusedSets,
    Partition,
    build_partition,
    certificate_from_flows,
    collapse,
    solve_exact,
    split_set,
)
from .glm import CoxData, IrwlsConfig, cox_quadratic, fit_glm, logistic_working_response
from .huber import HuberConfig, huber_cd_sweeps, huber_penalty, solve_huber
from .model import (
    COX,
    LOGISTIC,
    SQUARED,
    DataError,
    DimensionError,
    FusedLassoError,
    FusedProblem,
    OptimalityCertificate,
    PenaltyGraph,
    Solution,
    loss_gradient_smooth_part,
    loss_value,
)
from .path import PathGrid, PathResult, lambda1_max, lambda2_max, run_path
from .simgen import SimConfig, SimInstance, gen_1d, gen_2d
from .verify import (
    CheckResult,
    ErrReport,
    OracleResult,
    accuracy_report,
    check_optimality,
    smoothed_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "CdConfig",
    "CheckResult",
    "CollapsedProblem",
    "CoxData",
    "COX",
    "DataError",
    "DimensionError",
    "ErrReport",
    "FlowNetwork",
    "FusedLassoError",
    "FusedProblem",
    "FusedSets",
    "HuberConfig",
    "IrwlsConfig",
    "LOGISTIC",
    "OptimalityCertificate",
    "OracleResult",
    "Partition",
    "PathGrid",
    "PathResult",
    "PenaltyGraph",
    "ResidualReachability",
    "SimConfig",
    "SimInstance",
    "SQUARED",
    "Solution",
    "ZeroColumnError",
    "accuracy_report",
    "build_partition",
    "certificate_from_flows",
    "check_optimality",
    "collapse",
    "coordinate_minimize",
    "cox_quadratic",
    "fit_glm",
    "gen_1d",
    "gen_2d",
    "huber_cd_sweeps",
    "huber_penalty",
    "lambda1_max",
    "lambda2_max",
    "logistic_working_response",
    "loss_gradient_smooth_part",
    "loss_value",
    "max_flow",
    "naive_cd",
    "residual_reachability",
    "run_path",
    "smoothed_oracle",
    "solve_exact",
    "solve_huber",
    "split_set",
]
