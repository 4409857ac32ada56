"""Feasibility and performance properties evaluated on a finished iteration."""

from __future__ import annotations

import logging
from typing import Dict, Optional

import numpy as np

from lmpc_core.controller import IterationResult, LmpcConfig, LmpcPlan
from lmpc_core.disturbance import correlated_sequence
from lmpc_core.exceptions import InvariantViolationError
from lmpc_core.learning import ProblemContext, SafeSet
from lmpc_core.model import check_constraints

logger = logging.getLogger(__name__)

FIXED_POINT_STATE_TOLERANCE = 1e-7
FIXED_POINT_COST_TOLERANCE = 1e-4


def check_cost_chain(result: IterationResult, safe_set: SafeSet, tolerance: float) -> int:
    """J^j(z_0) <= J_LMPC(z_0) <= cost of every feasible shift from t = 0.

    Returns:
        number of inequalities checked

    Raises:
        InvariantViolationError: an inequality fails by more than tolerance
    """
    closed_loop = result.cumulative_cost
    value = float(result.lmpc_values[0])
    if closed_loop > value + tolerance:
        raise InvariantViolationError(
            f"iteration {result.iteration}: closed-loop cost {closed_loop:.9f} exceeds "
            f"J_LMPC(z_0) = {value:.9f}"
        )
    checks = 1
    for (source, start), shift in sorted(safe_set.shifts.items()):
        if start != 0:
            continue
        bound = shift.cost_to_go(0)
        if value > bound + tolerance:
            raise InvariantViolationError(
                f"iteration {result.iteration}: J_LMPC(z_0) = {value:.9f} exceeds the cost "
                f"{bound:.9f} of shifting iteration {source} from t=0"
            )
        checks += 1
    return checks


def check_descent(result: IterationResult, tolerance: float) -> int:
    """J_LMPC(z_{t+1}) <= J_LMPC(z_t) - l_t(z_t, v_t) along the planned steps."""
    values = result.lmpc_values
    stage = result.nominal.stage_costs
    for t in range(values.shape[0] - 1):
        excess = values[t + 1] - values[t] + stage[t]
        if excess > tolerance:
            raise InvariantViolationError(
                f"iteration {result.iteration}: J_LMPC does not descend at t={t} "
                f"(excess {excess:.3e})"
            )
    return max(values.shape[0] - 1, 0)


def successor_plan_violation(
    plan: LmpcPlan,
    next_state: np.ndarray,
    theta,
    safe_set: SafeSet,
    context: ProblemContext,
    config: LmpcConfig,
    next_horizon: Optional[int] = None,
) -> Optional[str]:
    """Check the shifted plan that makes the problem at t+1 feasible.

    When the problem at t+1 plans as far as this one (next_horizon = N_t - 1) the
    candidate is v_{t+1|t}..v_{t+N_t-1|t} and must land on the same terminal
    state. Otherwise it also applies the stored input of the terminal provenance
    and must land on that provenance's state at t+N_t+1.

    Returns:
        None when feasible, otherwise a description of the failure
    """
    model = context.model
    t, N = plan.t, plan.horizon
    if next_horizon is None:
        next_horizon = max(config.horizon, N - 1)
    w_theta = correlated_sequence(context.basis, theta)
    inputs = list(plan.inputs[1:])
    if next_horizon == N:
        inputs.append(plan.terminal_input)
    elif next_horizon != N - 1:
        return f"plan from t={t} cannot be followed by a horizon of {next_horizon}"
    z = np.asarray(next_state, dtype=float)
    tolerance = config.property_tolerance
    for offset, v in enumerate(inputs):
        k = t + 1 + offset
        check = check_constraints(context.tightened, k, z, v, margin=tolerance)
        if not check.satisfied:
            return f"plan from t={t} violates the constraints at k={k} by {check.violation:.3e}"
        z = model.A[k] @ z + model.B[k] @ v + model.C[k] @ w_theta[k]
    target = safe_set.shifts[plan.provenance].state(t + 1 + next_horizon)
    gap = float(np.max(np.abs(z - target)))
    if gap > tolerance:
        return f"plan from t={t} misses its terminal successor by {gap:.3e}"
    return None


def check_successor_plans(
    result: IterationResult,
    safe_set: SafeSet,
    context: ProblemContext,
    config: LmpcConfig,
) -> int:
    """successor_plan_violation for every planned step except the last."""
    checks = 0
    for plan, successor in zip(result.plans[:-1], result.plans[1:]):
        message = successor_plan_violation(
            plan,
            result.nominal.states[plan.t + 1],
            result.theta,
            safe_set,
            context,
            config,
            next_horizon=successor.horizon,
        )
        if message is not None:
            raise InvariantViolationError(f"iteration {result.iteration}: {message}")
        checks += 1
    logger.debug("iteration %d: %d successor plans feasible", result.iteration, checks)
    return checks


class RepeatedThetaTracker:
    """Cost bookkeeping for iterations that reuse the same coefficients."""

    def __init__(self, tolerance: float):
        self.tolerance = tolerance
        self._best: Dict[bytes, float] = {}
        self._previous: Optional[IterationResult] = None

    def observe(self, result: IterationResult) -> int:
        """Check non-increase for a repeated theta and the fixed-point optimality.

        Returns:
            number of inequalities checked
        """
        checks = 0
        key = np.asarray(result.theta, dtype=float).tobytes()
        cost = result.cumulative_cost
        if key in self._best:
            if cost > self._best[key] + self.tolerance:
                raise InvariantViolationError(
                    f"iteration {result.iteration}: cost {cost:.9f} increased over "
                    f"{self._best[key]:.9f} for a repeated theta"
                )
            checks += 1
        self._best[key] = min(cost, self._best.get(key, np.inf))

        previous = self._previous
        if (
            previous is not None
            and np.array_equal(previous.theta, result.theta)
            and result.optimal_cost is not None
        ):
            gap = np.max(np.abs(previous.nominal.states - result.nominal.states))
            if gap <= FIXED_POINT_STATE_TOLERANCE:
                if abs(cost - result.optimal_cost) > FIXED_POINT_COST_TOLERANCE:
                    raise InvariantViolationError(
                        f"iteration {result.iteration}: trajectory repeated but cost "
                        f"{cost:.9f} differs from the optimum {result.optimal_cost:.9f}"
                    )
                checks += 1
        self._previous = result
        return checks
