"""Learning MPC controller and the full-horizon optimal baseline.

The finite-horizon problem at time t plans the nominal system over stages
t..t+N_t-1 and pins z_{t+N_t} to one safe-set point per candidate QP. The closed
loop applies the first planned input while t <= T - N and replays the last plan
afterwards; the true state follows the nominal one through u = v + K (x - z).

N_t equals N unless the safe set has empty levels at and above N. Then the
first plan reaches further, to the first level that admits a feasible plan,
and later plans keep that terminal level until the horizon is back to N.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from lmpc_core.constants import PROPERTY_TOLERANCE, STATE_MATCH_TOLERANCE
from lmpc_core.disturbance import correlated_sequence
from lmpc_core.exceptions import (
    ConstraintViolationError,
    InvalidArgumentError,
    RecursiveFeasibilityError,
    ScenarioConfigurationError,
)
from lmpc_core.learning import ProblemContext, Provenance, SafeSet
from lmpc_core.model import PolytopicConstraintSchedule, rollout, stage_cost
from lmpc_core.models import Trajectory
from lmpc_core.qp import QpProblem, QpSettings, QpWorkspace
from lmpc_core.tube import TightenedConstraintSchedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LmpcConfig:
    """Settings of the finite-horizon problem.

    Attributes:
        horizon: prediction horizon N, 1 <= N <= T
        qp: osqp tolerances
        candidate_cap: consider at most this many terminal candidates per step
        state_tolerance: infinity-norm tolerance for safe-set lookups
        property_tolerance: slack for the cost and descent checks
    """

    horizon: int
    qp: QpSettings = field(default_factory=QpSettings)
    candidate_cap: Optional[int] = None
    state_tolerance: float = STATE_MATCH_TOLERANCE
    property_tolerance: float = PROPERTY_TOLERANCE

    def validate(self, period: int) -> None:
        if not 1 <= self.horizon <= period:
            raise InvalidArgumentError("horizon", f"must lie in [1, {period}], got {self.horizon}")
        if self.candidate_cap is not None and self.candidate_cap < 1:
            raise InvalidArgumentError("candidate_cap", "must be positive")


class HorizonQp:
    """QP over consecutive stages start..start+S-1 of the nominal system.

    Variables are stacked as [z_0..z_{S'-1}, v_0..v_{S-1}, s_0..s_{S-1}] where S' is
    S or S+1 (with a terminal state) and s are epigraph variables of the L1 terms.
    Equality rows: initial state, dynamics, then (optionally) the terminal state.
    """

    def __init__(
        self,
        context: ProblemContext,
        w_theta: np.ndarray,
        start: int,
        stages: int,
        terminal_state: bool,
        z_init: np.ndarray,
        schedule: Optional[PolytopicConstraintSchedule] = None,
    ):
        model, costs = context.model, context.costs
        schedule = context.tightened if schedule is None else schedule
        n, m = model.state_dim, model.input_dim
        self.n, self.m = n, m
        self.start, self.stages = start, stages
        self.num_states = stages + (1 if terminal_state else 0)
        ks = np.arange(start, start + stages)
        self.l1 = bool(np.any(costs.input_price[ks]))

        nz, nv = self.num_states * n, stages * m
        ns = nv if self.l1 else 0
        self._z, self._v = slice(0, nz), slice(nz, nz + nv)
        self._s = slice(nz + nv, nz + nv + ns)
        num_vars = nz + nv + ns

        P = np.zeros(num_vars)
        q = np.zeros(num_vars)
        constant = 0.0
        for j, k in enumerate(ks):
            zi = slice(j * n, (j + 1) * n)
            vi = slice(nz + j * m, nz + (j + 1) * m)
            P[zi] = 2.0 * costs.state_weight[k]
            q[zi] = -2.0 * costs.state_weight[k] * costs.state_target[k]
            constant += float(np.dot(costs.state_weight[k], costs.state_target[k] ** 2))
            P[vi] = 2.0 * costs.input_weight[k]
            if self.l1:
                q[nz + nv + j * m : nz + nv + (j + 1) * m] = 1.0

        eq_rows = n * (1 + self.num_states - 1 + (1 if terminal_state else 0))
        A_eq = np.zeros((eq_rows, num_vars))
        b_eq = np.zeros(eq_rows)
        A_eq[:n, :n] = np.eye(n)
        b_eq[:n] = z_init
        for j in range(self.num_states - 1):
            k = start + j
            rows = slice(n * (1 + j), n * (2 + j))
            A_eq[rows, (j + 1) * n : (j + 2) * n] = np.eye(n)
            A_eq[rows, j * n : (j + 1) * n] = -model.A[k]
            A_eq[rows, nz + j * m : nz + (j + 1) * m] = -model.B[k]
            b_eq[rows] = model.C[k] @ w_theta[k]
        self.terminal_rows = slice(eq_rows - n, eq_rows) if terminal_state else None
        if terminal_state:
            A_eq[self.terminal_rows, (self.num_states - 1) * n : self.num_states * n] = np.eye(n)

        p = schedule.rows
        ineq_blocks, rhs_blocks = [], []
        for j, k in enumerate(ks):
            block = np.zeros((p, num_vars))
            block[:, j * n : (j + 1) * n] = schedule.F[k]
            block[:, nz + j * m : nz + (j + 1) * m] = schedule.G[k]
            ineq_blocks.append(block)
            rhs_blocks.append(schedule.f[k])
            if self.l1:
                price = np.diag(costs.input_price[k])
                for sign in (1.0, -1.0):
                    l1_block = np.zeros((m, num_vars))
                    l1_block[:, nz + j * m : nz + (j + 1) * m] = sign * price
                    l1_block[:, nz + nv + j * m : nz + nv + (j + 1) * m] = -np.eye(m)
                    ineq_blocks.append(l1_block)
                    rhs_blocks.append(np.zeros(m))

        self.problem = QpProblem(
            P=np.diag(P),
            q=q,
            A_ineq=np.vstack(ineq_blocks),
            b_ineq=np.concatenate(rhs_blocks),
            A_eq=A_eq,
            b_eq=b_eq,
            constant=constant,
        )

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        states = x[self._z].reshape(self.num_states, self.n)
        inputs = x[self._v].reshape(self.stages, self.m)
        return states, inputs


@dataclass(frozen=True)
class LmpcPlan:
    """Solution of the finite-horizon problem at time t."""

    t: int
    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    terminal_cost: float
    provenance: Provenance
    terminal_input: np.ndarray
    candidates: int = 0
    solved: int = 0
    infeasible: int = 0
    pruned: int = 0

    @property
    def horizon(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def value(self) -> float:
        """J_LMPC: planned stage costs plus the terminal cost-to-go."""
        return float(np.sum(self.stage_costs) + self.terminal_cost)


def lmpc_step(
    z_t: np.ndarray,
    t: int,
    theta,
    safe_set: SafeSet,
    context: ProblemContext,
    config: LmpcConfig,
    iteration: Optional[int] = None,
    horizon: Optional[int] = None,
) -> LmpcPlan:
    """Solve the finite-horizon problem from nominal state z_t.

    Terminal candidates are visited in ascending cost-to-go order. A free-terminal
    solve gives a lower bound on the planned stage costs, so enumeration stops as
    soon as that bound plus the candidate's cost-to-go reaches the incumbent total.

    Args:
        horizon: stages to plan, defaults to config.horizon

    Raises:
        RecursiveFeasibilityError: every candidate QP was infeasible
    """
    T = context.model.period
    config.validate(T)
    N = config.horizon if horizon is None else int(horizon)
    if not 1 <= N <= T:
        raise InvalidArgumentError("horizon", f"must lie in [1, {T}], got {N}")
    if not 0 <= t <= T - N:
        raise InvalidArgumentError("t", f"must lie in [0, {T - N}], got {t}")
    level = safe_set.level(t + N)
    candidates = list(level[: config.candidate_cap] if config.candidate_cap else level)
    if not candidates:
        raise RecursiveFeasibilityError(t, iteration, 0)

    w_theta = correlated_sequence(context.basis, theta)
    qp = HorizonQp(context, w_theta, t, N, terminal_state=True, z_init=np.asarray(z_t))
    workspace = QpWorkspace(qp.problem, config.qp)
    qp_context: Dict[str, Any] = {"t": t, "iteration": iteration}

    workspace.set_equality_rows(qp.terminal_rows, None)
    free = workspace.solve(qp_context)
    if not free.optimal:
        raise RecursiveFeasibilityError(t, iteration, len(candidates))
    lower_bound = free.value - 1e-7 * (1.0 + abs(free.value))

    best: Optional[Tuple[float, np.ndarray, np.ndarray, np.ndarray, Any]] = None
    solved = infeasible = 0
    for index, entry in enumerate(candidates):
        if best is not None and lower_bound + entry.cost >= best[0]:
            break
        workspace.set_equality_rows(qp.terminal_rows, entry.state)
        solution = workspace.solve({**qp_context, "candidate": entry.provenance})
        if not solution.optimal:
            infeasible += 1
            continue
        solved += 1
        states, inputs = qp.unpack(solution.x)
        states[-1] = entry.state
        stages = np.array(
            [stage_cost(context.costs, t + j, states[j], inputs[j]) for j in range(N)]
        )
        total = float(np.sum(stages) + entry.cost)
        if best is None or total < best[0]:
            best = (total, states.copy(), inputs.copy(), stages, entry)
    visited = solved + infeasible

    if best is None:
        raise RecursiveFeasibilityError(t, iteration, len(candidates))
    _, states, inputs, stages, entry = best
    shift = safe_set.shifts[entry.provenance]
    logger.debug(
        "t=%d, N_t=%d: %d candidates, %d solved, %d infeasible, %d pruned, J=%.6f",
        t,
        N,
        len(candidates),
        solved,
        infeasible,
        len(candidates) - visited,
        best[0],
    )
    return LmpcPlan(
        t=t,
        states=states,
        inputs=inputs,
        stage_costs=stages,
        terminal_cost=entry.cost,
        provenance=entry.provenance,
        terminal_input=shift.input(t + N).copy(),
        candidates=len(candidates),
        solved=solved,
        infeasible=infeasible,
        pruned=len(candidates) - visited,
    )


def startup_plan(
    z_0: np.ndarray,
    theta,
    safe_set: SafeSet,
    context: ProblemContext,
    config: LmpcConfig,
    iteration: Optional[int] = None,
) -> LmpcPlan:
    """Plan at t = 0 towards the first level >= N that admits a feasible plan.

    The horizon equals that level, so it is N whenever level N is non-empty and
    reachable.

    Raises:
        RecursiveFeasibilityError: no level from N to T admits a feasible plan
    """
    failure = RecursiveFeasibilityError(0, iteration, 0)
    level = safe_set.first_level(config.horizon)
    while level is not None:
        try:
            plan = lmpc_step(z_0, 0, theta, safe_set, context, config, iteration, horizon=level)
        except RecursiveFeasibilityError as exc:
            failure = exc
            level = safe_set.first_level(level + 1)
            continue
        if plan.horizon > config.horizon:
            logger.info(
                "iteration %s: start-up horizon %d (N=%d)", iteration, plan.horizon, config.horizon
            )
        return plan
    raise failure


@dataclass(frozen=True)
class StepRecord:
    t: int
    value: float
    provenance: Provenance
    horizon: int
    candidates: int
    solved: int
    infeasible: int
    pruned: int


@dataclass(frozen=True)
class IterationResult:
    """Nominal and true closed-loop trajectories of one iteration."""

    iteration: int
    theta: np.ndarray
    nominal: Trajectory
    true: Trajectory
    lmpc_values: np.ndarray
    steps: Tuple[StepRecord, ...]
    plans: Tuple[LmpcPlan, ...] = field(default=(), repr=False)
    optimal_cost: Optional[float] = None

    @property
    def cumulative_cost(self) -> float:
        return self.nominal.cumulative_cost

    @property
    def provenances(self) -> Tuple[Provenance, ...]:
        return tuple(step.provenance for step in self.steps)

    def with_optimal_cost(self, value: float) -> "IterationResult":
        return replace(self, optimal_cost=value)

    def to_frame(self) -> pd.DataFrame:
        """Per-step records: nominal and true trajectories side by side."""
        frame = self.nominal.to_frame(prefix="nominal_").merge(
            self.true.to_frame(prefix="true_"), on="t"
        )
        values = np.full(frame.shape[0], np.nan)
        values[: self.lmpc_values.shape[0]] = self.lmpc_values
        frame["lmpc_value"] = values
        return frame

    def summary(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "theta": self.theta.tolist(),
            "cost": self.cumulative_cost,
            "true_cost": self.true.cumulative_cost,
            "optimal_cost": self.optimal_cost,
            "difference": None
            if self.optimal_cost is None
            else self.cumulative_cost - self.optimal_cost,
            "lmpc_value_t0": float(self.lmpc_values[0]),
            "startup_horizon": self.steps[0].horizon if self.steps else None,
            "candidates": sum(step.candidates for step in self.steps),
            "solved": sum(step.solved for step in self.steps),
            "infeasible": sum(step.infeasible for step in self.steps),
            "pruned": sum(step.pruned for step in self.steps),
        }


def closed_loop_iteration(
    iteration: int,
    theta,
    residual: np.ndarray,
    safe_set: SafeSet,
    context: ProblemContext,
    config: LmpcConfig,
    *,
    initial_offset: Optional[np.ndarray] = None,
) -> IterationResult:
    """Run one period of the LMPC closed loop.

    Args:
        iteration: index j
        theta: coefficients revealed for this iteration
        residual: white residual realization, shape (T+1, d)
        safe_set: safe set built for theta
        context: nominal problem of this iteration (deviated model if any)
        config: controller settings
        initial_offset: w_s added to x_s for both the nominal and true start

    Raises:
        RecursiveFeasibilityError: no feasible terminal candidate at some t
        ConstraintViolationError: the true state left the original constraints
    """
    model, costs = context.model, context.costs
    T, N = model.period, config.horizon
    config.validate(T)
    theta = np.asarray(theta, dtype=float)
    w_theta = correlated_sequence(context.basis, theta)
    K = context.gains.gains
    z0 = model.x_s + (0.0 if initial_offset is None else np.asarray(initial_offset, dtype=float))

    z = np.zeros((T + 1, model.state_dim))
    v = np.zeros((T + 1, model.input_dim))
    z[0] = z0
    plans: List[LmpcPlan] = []
    replay: List[np.ndarray] = []

    def policy(t: int, x: np.ndarray) -> np.ndarray:
        if t <= T - N:
            if t == 0:
                plan = startup_plan(z[0], theta, safe_set, context, config, iteration)
            else:
                horizon = max(N, plans[0].horizon - t)
                plan = lmpc_step(z[t], t, theta, safe_set, context, config, iteration, horizon)
            plans.append(plan)
            v[t] = plan.inputs[0]
            if t == T - N:
                replay.extend(list(plan.inputs[1:]) + [plan.terminal_input])
        else:
            v[t] = replay[t - (T - N) - 1]
        if t < T:
            z[t + 1] = model.A[t] @ z[t] + model.B[t] @ v[t] + model.C[t] @ w_theta[t]
        return v[t] + K[t] @ (x - z[t])

    schedule = context.tightened
    original = schedule
    if isinstance(schedule, TightenedConstraintSchedule):
        original = schedule.original()
    true = rollout(
        model,
        original,
        costs,
        policy,
        w_theta + residual,
        x0=z0,
        iteration=iteration,
        theta=theta,
    )
    if true.violations:
        t_bad = true.violations[0]
        slack = original.slack(t_bad, true.states[t_bad], true.inputs[t_bad])
        raise ConstraintViolationError(t_bad, float(-slack.min()), iteration)

    nominal = Trajectory(
        states=z,
        inputs=v,
        disturbances=w_theta,
        stage_costs=np.array([stage_cost(costs, t, z[t], v[t]) for t in range(T + 1)]),
        iteration=iteration,
        theta=theta,
    )
    steps = tuple(
        StepRecord(
            t=plan.t,
            value=plan.value,
            provenance=plan.provenance,
            horizon=plan.horizon,
            candidates=plan.candidates,
            solved=plan.solved,
            infeasible=plan.infeasible,
            pruned=plan.pruned,
        )
        for plan in plans
    )
    logger.info(
        "iteration %d: cost %.6f, J_LMPC(z_0) %.6f",
        iteration,
        nominal.cumulative_cost,
        plans[0].value,
    )
    return IterationResult(
        iteration=iteration,
        theta=theta,
        nominal=nominal,
        true=true,
        lmpc_values=np.array([plan.value for plan in plans]),
        steps=steps,
        plans=tuple(plans),
    )


@dataclass(frozen=True)
class FullHorizonSolution:
    trajectory: Trajectory
    value: float


def solve_full_horizon(
    context: ProblemContext,
    theta,
    x0: Optional[np.ndarray] = None,
    schedule: Optional[PolytopicConstraintSchedule] = None,
    settings: Optional[QpSettings] = None,
) -> FullHorizonSolution:
    """Nominal optimum over all (z_t, v_t), t = 0..T, under the tightened constraints.

    Args:
        schedule: constraint schedule to use instead of context.tightened

    Raises:
        ScenarioConfigurationError: the problem is infeasible
    """
    model, costs = context.model, context.costs
    T = model.period
    theta = np.asarray(theta, dtype=float)
    w_theta = correlated_sequence(context.basis, theta)
    z0 = model.x_s if x0 is None else np.asarray(x0, dtype=float)
    horizon = HorizonQp(context, w_theta, 0, T + 1, False, z0, schedule=schedule)
    solution = QpWorkspace(horizon.problem, settings).solve({"problem": "full-horizon"})
    if not solution.optimal:
        raise ScenarioConfigurationError("full-horizon problem is infeasible")
    states, inputs = horizon.unpack(solution.x)
    stage_costs = np.array([stage_cost(costs, t, states[t], inputs[t]) for t in range(T + 1)])
    trajectory = Trajectory(
        states=states,
        inputs=inputs,
        disturbances=w_theta,
        stage_costs=stage_costs,
        theta=theta,
    )
    return FullHorizonSolution(trajectory=trajectory, value=trajectory.cumulative_cost)

