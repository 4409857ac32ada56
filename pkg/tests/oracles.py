"""Independent reference computations used by the tests."""

from typing import Tuple

import numpy as np

from lmpc_core import DisturbanceBasis, PeriodicLtvModel, ProblemContext
from lmpc_core.disturbance import AtomKind, WaveformAtom
from lmpc_core.model import PolytopicConstraintSchedule, StageCostSchedule
from lmpc_core.tube import FeedbackGainSchedule, RpiSet, tighten_constraints

TINY_REFERENCE = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0])


def tiny_optimal_cost(theta: float, x0: float = 1.5) -> float:
    """Closed-form optimum of the tiny scenario while its constraints are inactive.

    Stages decouple (A = 0): choosing u_t sets x_{t+1} = u_t + w_t, and
    min_u u^2 + (u + w - r)^2 = (r - w)^2 / 2.
    """
    disturbance = np.array([theta, theta, theta, 0.0, 0.0, 0.0])
    tail = 0.5 * np.sum((TINY_REFERENCE[1:] - disturbance) ** 2)
    return float((x0 - TINY_REFERENCE[0]) ** 2 + tail)


def scalar_dp_cost(
    a: float,
    disturbance: np.ndarray,
    x0: float,
    state_bound: float,
    input_bound: float,
    grid_points: int = 2001,
    input_step: float = 0.005,
) -> float:
    """Grid dynamic programming for x' = a x + u + w, stage x^2 + u^2, on |x|, |u| bounds.

    The value function is interpolated linearly between grid points; states
    leaving the bound are infeasible.
    """
    grid = np.linspace(-state_bound, state_bound, grid_points)
    inputs = np.arange(-input_bound, input_bound + 0.5 * input_step, input_step)
    T = disturbance.shape[0] - 1
    value = grid**2  # stage T with u_T = 0
    for t in reversed(range(T)):
        successors = a * grid[:, None] + inputs[None, :] + disturbance[t]
        feasible = np.abs(successors) <= state_bound
        future = np.interp(successors, grid, value)
        totals = np.where(feasible, grid[:, None] ** 2 + inputs[None, :] ** 2 + future, np.inf)
        value = totals.min(axis=1)
    return float(np.interp(x0, grid, value))


def scalar_problem(
    period: int = 4,
    a: float = 0.5,
    residual: float = 0.1,
    bound: float = 5.0,
    input_bound: float = 5.0,
    x_s: float = 1.0,
) -> ProblemContext:
    """x' = a x + u + w with one constant atom, unit costs towards 0 and K = 0."""
    model = PeriodicLtvModel(period=period, A=[[a]], B=[[1.0]], C=[[1.0]], x_s=[x_s])
    schedule = PolytopicConstraintSchedule.from_boxes(
        np.full((period + 1, 1), -bound),
        np.full((period + 1, 1), bound),
        np.full((period + 1, 1), -input_bound),
        np.full((period + 1, 1), input_bound),
    )
    gains = FeedbackGainSchedule(gains=np.zeros((period + 1, 1, 1)), Q=np.eye(1), R=np.eye(1))
    tightened = tighten_constraints(schedule, gains, RpiSet.zero(1))
    basis = DisturbanceBasis(
        period=period,
        channels=1,
        atoms=(WaveformAtom(AtomKind.CONSTANT, channel=0, label="c"),),
        residual_lower=np.array([-residual]),
        residual_upper=np.array([residual]),
    )
    costs = StageCostSchedule(
        state_weight=np.ones((period + 1, 1)),
        state_target=np.zeros((period + 1, 1)),
        input_weight=np.ones((period + 1, 1)),
        input_price=np.zeros((period + 1, 1)),
    )
    return ProblemContext(model=model, basis=basis, gains=gains, tightened=tightened, costs=costs)


def simulate_shift(
    context: ProblemContext,
    states: np.ndarray,
    inputs: np.ndarray,
    theta_old: np.ndarray,
    theta_new: np.ndarray,
    t_start: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Shift by explicit simulation: e_{k+1} = (A + B K) e_k + C (w_new - w_old)."""
    model, basis = context.model, context.basis
    K = context.gains.gains
    T = model.period
    w_old = np.einsum("tdp,p->td", basis.samples, np.asarray(theta_old, dtype=float))
    w_new = np.einsum("tdp,p->td", basis.samples, np.asarray(theta_new, dtype=float))
    e = np.zeros(model.state_dim)
    shifted_states, shifted_inputs = [], []
    for k in range(t_start, T + 1):
        shifted_states.append(states[k] + e)
        shifted_inputs.append(inputs[k] + K[k] @ e)
        if k < T:
            e = (model.A[k] + model.B[k] @ K[k]) @ e + model.C[k] @ (w_new[k] - w_old[k])
    return np.array(shifted_states), np.array(shifted_inputs)
