"""Experiment runner

Drives the iterated LMPC over a scenario and writes, reads back and
verifies run directories:
- experiment: tube, seed and the per-iteration closed loop
- checks: feasibility and cost properties of a finished iteration
- verify: consistency of a run directory from its files alone
"""

from .checks import (
    RepeatedThetaTracker,
    check_cost_chain,
    check_descent,
    check_successor_plans,
    successor_plan_violation,
)
from .experiment import ExperimentSession, run_experiment, tube_cache_key
from .report import MetricsReport
from .verify import VerificationReport, verify_run

__all__ = [
    "ExperimentSession",
    "MetricsReport",
    "RepeatedThetaTracker",
    "VerificationReport",
    "check_cost_chain",
    "check_descent",
    "check_successor_plans",
    "run_experiment",
    "successor_plan_violation",
    "tube_cache_key",
    "verify_run",
]
