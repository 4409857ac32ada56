"""
lmpc_core - robust learning MPC for periodic linear time-varying systems

Components:
- model: periodic LTV plant, polytopic constraints, stage costs, rollout
- disturbance: periodic disturbance bases, fitting and sampling
- tube: periodic LQR gains, invariant error sets, constraint tightening
- learning: trajectory shifting, safe sets, Q-function
- controller: finite-horizon LMPC, closed loop, full-horizon optimum
- seed: iteration-0 trajectory construction
- qp: osqp-backed QP interface
- cache: tube artifact cache

Example:
    from lmpc_core import ProblemContext, build_tube, construct_seed

    tube = build_tube(model, constraints, basis.residual_halfwidth, Q, R)
    context = ProblemContext(model, basis, tube.gains, tube.tightened, costs)
    seed = construct_seed(context, theta_domain)
"""

from lmpc_core.cache import TubeArtifactCache
from lmpc_core.controller import (
    IterationResult,
    LmpcConfig,
    LmpcPlan,
    closed_loop_iteration,
    lmpc_step,
    startup_plan,
    solve_full_horizon,
)
from lmpc_core.disturbance import (
    DisturbanceBasis,
    ThetaDomain,
    ThetaSample,
    WaveformAtom,
    evaluate_correlated,
    fit_coefficients,
    generate_realization,
    sample_theta,
)
from lmpc_core.exceptions import (
    ArtifactError,
    ConfigError,
    ConstraintViolationError,
    EmptyConstraintSetError,
    InfeasibleTighteningError,
    InvalidArgumentError,
    InvariantViolationError,
    LmpcError,
    PolicyError,
    QpSolverError,
    RecursiveFeasibilityError,
    RpiApproximationError,
    SafeSetError,
    ScenarioConfigurationError,
    StabilizabilityError,
    TheoremViolationError,
)
from lmpc_core.learning import (
    HistoryRecord,
    HistoryStore,
    ModelDeviation,
    ProblemContext,
    SafeSet,
    build_safe_set,
    query_Q,
    shift_trajectory,
)
from lmpc_core.model import (
    PeriodicLtvModel,
    PolytopicConstraintSchedule,
    StageCostSchedule,
    check_constraints,
    rollout,
    stage_cost,
)
from lmpc_core.models import Trajectory
from lmpc_core.qp import QpProblem, QpSettings, QpStatus, solve_qp
from lmpc_core.seed import SeedResult, construct_seed
from lmpc_core.tube import (
    FeedbackGainSchedule,
    RpiSet,
    TightenedConstraintSchedule,
    TubeArtifacts,
    build_tube,
    lqr_gains,
    rpi_outer_approx,
    tighten_constraints,
)

__all__ = [
    # Data
    "Trajectory",
    "PeriodicLtvModel",
    "PolytopicConstraintSchedule",
    "StageCostSchedule",
    "DisturbanceBasis",
    "WaveformAtom",
    "ThetaDomain",
    "ThetaSample",
    "FeedbackGainSchedule",
    "RpiSet",
    "TightenedConstraintSchedule",
    "TubeArtifacts",
    "HistoryRecord",
    "HistoryStore",
    "ModelDeviation",
    "ProblemContext",
    "SafeSet",
    "LmpcConfig",
    "LmpcPlan",
    "IterationResult",
    "SeedResult",
    "QpProblem",
    "QpSettings",
    "QpStatus",
    # Operations
    "check_constraints",
    "stage_cost",
    "rollout",
    "evaluate_correlated",
    "fit_coefficients",
    "sample_theta",
    "generate_realization",
    "lqr_gains",
    "rpi_outer_approx",
    "tighten_constraints",
    "build_tube",
    "shift_trajectory",
    "build_safe_set",
    "query_Q",
    "lmpc_step",
    "startup_plan",
    "closed_loop_iteration",
    "solve_full_horizon",
    "construct_seed",
    "solve_qp",
    "TubeArtifactCache",
    # Exceptions
    "LmpcError",
    "InvalidArgumentError",
    "EmptyConstraintSetError",
    "InfeasibleTighteningError",
    "StabilizabilityError",
    "RpiApproximationError",
    "QpSolverError",
    "PolicyError",
    "ScenarioConfigurationError",
    "TheoremViolationError",
    "SafeSetError",
    "RecursiveFeasibilityError",
    "ConstraintViolationError",
    "InvariantViolationError",
    "ConfigError",
    "ArtifactError",
]

__version__ = "0.1.0"
