"""Periodic linear time-varying plant, polytopic constraints and stage costs.

All schedules are indexed by t = 0..T and stored as stacked numpy arrays whose
leading axis is time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from lmpc_core.constants import CONSTRAINT_MARGIN, FEASIBILITY_LP_BOUND
from lmpc_core.exceptions import (
    EmptyConstraintSetError,
    InvalidArgumentError,
    LmpcError,
    PolicyError,
)
from lmpc_core.models import Trajectory

logger = logging.getLogger(__name__)

Policy = Callable[[int, np.ndarray], np.ndarray]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _stack(operand: str, values, period: int, ndim: int) -> np.ndarray:
    """Broadcast a single matrix (or a per-t sequence) to shape (T+1, ...)."""
    array = np.asarray(values, dtype=float)
    if array.ndim == ndim:
        array = np.broadcast_to(array, (period + 1,) + array.shape)
    elif array.ndim != ndim + 1 or array.shape[0] != period + 1:
        raise InvalidArgumentError(
            operand, f"expected {period + 1} entries of rank {ndim}, got shape {array.shape}"
        )
    if not np.all(np.isfinite(array)):
        raise InvalidArgumentError(operand, "contains non-finite values")
    return _frozen(array)


@dataclass(frozen=True)
class PeriodicLtvModel:
    """x_{t+1} = A_t x_t + B_t u_t + C_t w_t over one period of length T."""

    period: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x_s: np.ndarray

    def __post_init__(self):
        if self.period < 1:
            raise InvalidArgumentError("period", f"must be >= 1, got {self.period}")
        A = _stack("A", self.A, self.period, 2)
        n = A.shape[1]
        if A.shape[2] != n:
            raise InvalidArgumentError("A", f"must be square, got {A.shape[1:]}")
        B = _stack("B", self.B, self.period, 2)
        C = _stack("C", self.C, self.period, 2)
        if B.shape[1] != n:
            raise InvalidArgumentError("B", f"must have {n} rows, got {B.shape[1]}")
        if C.shape[1] != n:
            raise InvalidArgumentError("C", f"must have {n} rows, got {C.shape[1]}")
        x_s = np.asarray(self.x_s, dtype=float).reshape(-1)
        if x_s.shape != (n,):
            raise InvalidArgumentError("x_s", f"expected length {n}, got {x_s.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "x_s", _frozen(x_s))

    @classmethod
    def time_invariant(cls, A, B, C, period: int, x_s) -> "PeriodicLtvModel":
        return cls(period=period, A=A, B=B, C=C, x_s=x_s)

    @property
    def state_dim(self) -> int:
        return self.A.shape[1]

    @property
    def input_dim(self) -> int:
        return self.B.shape[2]

    @property
    def disturbance_dim(self) -> int:
        return self.C.shape[2]

    def is_time_invariant(self) -> bool:
        return all(
            np.array_equal(matrix[t], matrix[0])
            for matrix in (self.A, self.B, self.C)
            for t in range(1, self.period + 1)
        )

    def step(self, t: int, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Propagate the state one step.

        Args:
            t: time index in [0, T]
            x: state (n,)
            u: input (m,)
            w: disturbance (d,)

        Returns:
            x_{t+1}
        """
        if not 0 <= t <= self.period:
            raise InvalidArgumentError("t", f"must lie in [0, {self.period}], got {t}")
        x = _vector("x", x, self.state_dim)
        u = _vector("u", u, self.input_dim)
        w = _vector("w", w, self.disturbance_dim)
        return self.A[t] @ x + self.B[t] @ u + self.C[t] @ w

    def with_deviation(
        self, delta_A: Optional[np.ndarray] = None, delta_B: Optional[np.ndarray] = None
    ) -> "PeriodicLtvModel":
        """Model with constant additive deviations on A and B."""
        A = self.A if delta_A is None else self.A + np.asarray(delta_A, dtype=float)
        B = self.B if delta_B is None else self.B + np.asarray(delta_B, dtype=float)
        return PeriodicLtvModel(period=self.period, A=A, B=B, C=self.C, x_s=self.x_s)

    def with_initial_state(self, x_s: np.ndarray) -> "PeriodicLtvModel":
        return PeriodicLtvModel(period=self.period, A=self.A, B=self.B, C=self.C, x_s=x_s)


def _vector(operand: str, value, length: int) -> np.ndarray:
    array = np.asarray(value, dtype=float).reshape(-1)
    if array.shape != (length,):
        raise InvalidArgumentError(operand, f"expected length {length}, got {array.shape[0]}")
    return array


class ConstraintCheck(NamedTuple):
    satisfied: bool
    violation: float


@dataclass(frozen=True)
class PolytopicConstraintSchedule:
    """Mixed constraints F_t x + G_t u <= f_t for t = 0..T."""

    F: np.ndarray
    G: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        G = np.asarray(self.G, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if F.ndim != 3 or G.ndim != 3 or f.ndim != 2:
            raise InvalidArgumentError("F/G/f", "expected stacked arrays of rank 3, 3 and 2")
        if not (F.shape[0] == G.shape[0] == f.shape[0]):
            raise InvalidArgumentError("F/G/f", "time lengths disagree")
        if not (F.shape[1] == G.shape[1] == f.shape[1]):
            raise InvalidArgumentError("F/G/f", "row counts disagree")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(G)) and np.all(np.isfinite(f))):
            raise InvalidArgumentError("F/G/f", "contains non-finite values")
        object.__setattr__(self, "F", _frozen(F))
        object.__setattr__(self, "G", _frozen(G))
        object.__setattr__(self, "f", _frozen(f))

    @classmethod
    def from_boxes(
        cls,
        state_lower: np.ndarray,
        state_upper: np.ndarray,
        input_lower: np.ndarray,
        input_upper: np.ndarray,
    ) -> "PolytopicConstraintSchedule":
        """Build the schedule from per-t box bounds of shape (T+1, n) and (T+1, m)."""
        state_lower = np.atleast_2d(np.asarray(state_lower, dtype=float))
        state_upper = np.atleast_2d(np.asarray(state_upper, dtype=float))
        input_lower = np.atleast_2d(np.asarray(input_lower, dtype=float))
        input_upper = np.atleast_2d(np.asarray(input_upper, dtype=float))
        horizon, n = state_lower.shape
        m = input_lower.shape[1]
        eye_n, eye_m = np.eye(n), np.eye(m)
        F_t = np.vstack([eye_n, -eye_n, np.zeros((2 * m, n))])
        G_t = np.vstack([np.zeros((2 * n, m)), eye_m, -eye_m])
        F = np.broadcast_to(F_t, (horizon,) + F_t.shape)
        G = np.broadcast_to(G_t, (horizon,) + G_t.shape)
        f = np.hstack([state_upper, -state_lower, input_upper, -input_lower])
        return cls(F=F, G=G, f=f)

    @property
    def period(self) -> int:
        return self.F.shape[0] - 1

    @property
    def rows(self) -> int:
        return self.F.shape[1]

    def slack(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.f[t] - self.F[t] @ x - self.G[t] @ u

    def check_nonempty(self) -> None:
        """Raise EmptyConstraintSetError if some {(x, u) : F_t x + G_t u <= f_t} is empty."""
        empty = [t for t in range(self.period + 1) if chebyshev_slack(self, t) < -CONSTRAINT_MARGIN]
        if empty:
            raise EmptyConstraintSetError(empty)


def chebyshev_slack(schedule: PolytopicConstraintSchedule, t: int) -> float:
    """Largest s with F_t x + G_t u + s <= f_t, capped at FEASIBILITY_LP_BOUND.

    Negative values mean the polytope at t is empty; zero means it has no interior.
    """
    F, G, f = schedule.F[t], schedule.G[t], schedule.f[t]
    n, m = F.shape[1], G.shape[1]
    cost = np.zeros(n + m + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([F, G, np.ones((F.shape[0], 1))])
    bounds = [(None, None)] * (n + m) + [(None, FEASIBILITY_LP_BOUND)]
    result = linprog(cost, A_ub=A_ub, b_ub=f, bounds=bounds, method="highs")
    if result.status == 2:
        return -np.inf
    if result.status != 0:
        logger.warning("non-emptiness LP at t=%d ended with status %s", t, result.message)
        return -np.inf
    return float(result.x[-1])


def check_constraints(
    schedule: PolytopicConstraintSchedule,
    t: int,
    x: np.ndarray,
    u: np.ndarray,
    margin: float = CONSTRAINT_MARGIN,
) -> ConstraintCheck:
    """Check F_t x + G_t u <= f_t + margin.

    Returns:
        ConstraintCheck with the largest row value of F_t x + G_t u - f_t, negative
        when (x, u) lies strictly inside
    """
    if not 0 <= t <= schedule.period:
        raise InvalidArgumentError("t", f"must lie in [0, {schedule.period}], got {t}")
    slack = schedule.slack(t, np.asarray(x, dtype=float), np.asarray(u, dtype=float))
    violation = float(np.max(-slack)) if slack.size else -np.inf
    return ConstraintCheck(satisfied=violation <= margin, violation=violation)


@dataclass(frozen=True)
class StageCostSchedule:
    """l_t(x, u) = sum q (x - ref)^2 + sum r u^2 + sum |c u| with nonnegative weights."""

    state_weight: np.ndarray
    state_target: np.ndarray
    input_weight: np.ndarray
    input_price: np.ndarray

    def __post_init__(self):
        for name in ("state_weight", "state_target", "input_weight", "input_price"):
            value = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(value)):
                raise InvalidArgumentError(name, "contains non-finite values")
            object.__setattr__(self, name, _frozen(value))
        for name in ("state_weight", "input_weight", "input_price"):
            if np.any(getattr(self, name) < 0):
                raise InvalidArgumentError(name, "weights must be nonnegative")
        if self.state_weight.shape != self.state_target.shape:
            raise InvalidArgumentError("state_target", "shape differs from state_weight")
        if self.input_weight.shape != self.input_price.shape:
            raise InvalidArgumentError("input_price", "shape differs from input_weight")
        if self.state_weight.shape[0] != self.input_weight.shape[0]:
            raise InvalidArgumentError("input_weight", "time length differs from state_weight")

    @property
    def period(self) -> int:
        return self.state_weight.shape[0] - 1

    def __call__(self, t: int, x: np.ndarray, u: np.ndarray) -> float:
        return stage_cost(self, t, x, u)


def stage_cost(costs: StageCostSchedule, t: int, x: np.ndarray, u: np.ndarray) -> float:
    if not 0 <= t <= costs.period:
        raise InvalidArgumentError("t", f"must lie in [0, {costs.period}], got {t}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    error = x - costs.state_target[t]
    return float(
        np.dot(costs.state_weight[t], error * error)
        + np.dot(costs.input_weight[t], u * u)
        + np.sum(np.abs(costs.input_price[t] * u))
    )


def rollout(
    model: PeriodicLtvModel,
    schedule: PolytopicConstraintSchedule,
    costs: StageCostSchedule,
    policy: Policy,
    disturbances: np.ndarray,
    x0: Optional[np.ndarray] = None,
    iteration: Optional[int] = None,
    theta: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Simulate one period under a policy and flag constraint violations.

    Args:
        policy: callable (t, x_t) -> u_t
        disturbances: realized w_t, shape (T+1, d)
        x0: initial state, defaults to model.x_s

    Raises:
        PolicyError: the policy raised a non-library exception at some t
        LmpcError: library errors raised by the policy propagate unchanged
        InvalidArgumentError: disturbance sequence has the wrong shape
    """
    T = model.period
    disturbances = np.asarray(disturbances, dtype=float)
    if disturbances.shape != (T + 1, model.disturbance_dim):
        raise InvalidArgumentError(
            "disturbances",
            f"expected shape {(T + 1, model.disturbance_dim)}, got {disturbances.shape}",
        )
    x = model.x_s.copy() if x0 is None else _vector("x0", x0, model.state_dim)

    states = np.zeros((T + 1, model.state_dim))
    inputs = np.zeros((T + 1, model.input_dim))
    stage_costs = np.zeros(T + 1)
    violations: List[int] = []
    for t in range(T + 1):
        states[t] = x
        try:
            u = _vector("u", policy(t, x.copy()), model.input_dim)
        except LmpcError:
            raise
        except Exception as exc:
            raise PolicyError(t, exc) from exc
        inputs[t] = u
        stage_costs[t] = stage_cost(costs, t, x, u)
        if not check_constraints(schedule, t, x, u).satisfied:
            violations.append(t)
        if t < T:
            x = model.step(t, x, u, disturbances[t])

    if violations:
        logger.debug("rollout violated constraints at t=%s", violations)
    return Trajectory(
        states=states,
        inputs=inputs,
        disturbances=disturbances,
        stage_costs=stage_costs,
        iteration=iteration,
        theta=None if theta is None else np.asarray(theta, dtype=float),
        violations=tuple(violations),
    )
