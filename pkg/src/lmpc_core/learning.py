"""Trajectory shifting, safe sets and the Q-function.

A stored nominal trajectory (z^i, v^i) recorded under theta^i is shifted to a new
theta^j by propagating the error e_{k+1} = Phi_k e_k + C_k (w_{theta^j,k} - w_{theta^i,k})
from e = 0 at the shift start and applying z = z^i + e, v = v^i + K e. A shift is
feasible when its whole tail satisfies the tightened constraints; feasible tails
populate the safe-set levels they pass through.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from lmpc_core.constants import CONSTRAINT_MARGIN, STATE_MATCH_TOLERANCE
from lmpc_core.disturbance import DisturbanceBasis, correlated_sequence
from lmpc_core.exceptions import InvalidArgumentError, SafeSetError
from lmpc_core.model import PeriodicLtvModel, PolytopicConstraintSchedule, StageCostSchedule
from lmpc_core.models import Trajectory
from lmpc_core.tube import FeedbackGainSchedule

logger = logging.getLogger(__name__)

Provenance = Tuple[int, int]


@dataclass(frozen=True)
class ModelDeviation:
    """Additive deviations dA_t, dB_t of one iteration's dynamics from the nominal model."""

    delta_A: np.ndarray
    delta_B: np.ndarray

    @classmethod
    def constant(cls, delta_A, delta_B, period: int) -> "ModelDeviation":
        delta_A = np.asarray(delta_A, dtype=float)
        delta_B = np.asarray(delta_B, dtype=float)
        return cls(
            delta_A=np.broadcast_to(delta_A, (period + 1,) + delta_A.shape).copy(),
            delta_B=np.broadcast_to(delta_B, (period + 1,) + delta_B.shape).copy(),
        )

    @classmethod
    def zero(cls, model: PeriodicLtvModel) -> "ModelDeviation":
        return cls(delta_A=np.zeros_like(model.A), delta_B=np.zeros_like(model.B))

    def apply(self, model: PeriodicLtvModel) -> PeriodicLtvModel:
        return model.with_deviation(self.delta_A, self.delta_B)


@dataclass(frozen=True)
class HistoryRecord:
    """A completed nominal trajectory and the conditions it was recorded under."""

    trajectory: Trajectory
    theta: np.ndarray
    iteration: int
    initial_offset: Optional[np.ndarray] = None
    deviation: Optional[ModelDeviation] = None


class HistoryStore:
    """Completed iterations, indexed contiguously from 0."""

    def __init__(self) -> None:
        self._records: List[HistoryRecord] = []

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[HistoryRecord]:
        return iter(self._records)

    def __getitem__(self, index: int) -> HistoryRecord:
        return self._records[index]

    @property
    def records(self) -> Tuple[HistoryRecord, ...]:
        return tuple(self._records)

    def append(
        self,
        record: HistoryRecord,
        tightened: Optional[PolytopicConstraintSchedule] = None,
        margin: float = CONSTRAINT_MARGIN,
    ) -> None:
        """Store a record after checking its index and, if given, the tightened constraints.

        Raises:
            InvalidArgumentError: non-contiguous index or constraint violation
        """
        if record.iteration != len(self._records):
            raise InvalidArgumentError(
                "iteration", f"expected {len(self._records)}, got {record.iteration}"
            )
        if tightened is not None:
            traj = record.trajectory
            slack = (
                tightened.f
                - np.einsum("tpn,tn->tp", tightened.F, traj.states)
                - np.einsum("tpm,tm->tp", tightened.G, traj.inputs)
            )
            worst = float(-slack.min())
            if worst > margin:
                t = int(np.unravel_index(np.argmin(slack), slack.shape)[0])
                raise InvalidArgumentError(
                    "trajectory", f"violates tightened constraints at t={t} by {worst:.3e}"
                )
        self._records.append(record)


@dataclass(frozen=True)
class ProblemContext:
    """Nominal problem data shared by shifting, planning and the full-horizon oracle."""

    model: PeriodicLtvModel
    basis: DisturbanceBasis
    gains: FeedbackGainSchedule
    tightened: PolytopicConstraintSchedule
    costs: StageCostSchedule
    margin: float = CONSTRAINT_MARGIN


@dataclass(frozen=True)
class ShiftResult:
    """Shifted tail k = t_start..T of one stored trajectory.

    Row r of states/inputs/stage_costs/tail_costs refers to k = t_start + r.
    """

    iteration: int
    t_start: int
    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    tail_costs: np.ndarray
    feasible: bool
    first_violation: Optional[int] = None

    @property
    def provenance(self) -> Provenance:
        return (self.iteration, self.t_start)

    def state(self, k: int) -> np.ndarray:
        return self.states[k - self.t_start]

    def input(self, k: int) -> np.ndarray:
        return self.inputs[k - self.t_start]

    def cost_to_go(self, k: int) -> float:
        return float(self.tail_costs[k - self.t_start])


def _drive(
    record: HistoryRecord,
    theta_new,
    context: ProblemContext,
    deviation: Optional[ModelDeviation],
) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-loop matrices of the new iteration and the additive error input per k."""
    model, basis = context.model, context.basis
    w_new = correlated_sequence(basis, theta_new)
    w_old = correlated_sequence(basis, record.theta)
    drive = np.einsum("tnd,td->tn", model.C, w_new - w_old)

    A, B = model.A, model.B
    if deviation is not None or record.deviation is not None:
        zero = ModelDeviation.zero(model)
        new = deviation or zero
        old = record.deviation or zero
        A = A + new.delta_A
        B = B + new.delta_B
        traj = record.trajectory
        drive = (
            drive
            + np.einsum("tij,tj->ti", new.delta_A - old.delta_A, traj.states)
            + np.einsum("tij,tj->ti", new.delta_B - old.delta_B, traj.inputs)
        )
    phi = A + np.einsum("tij,tjk->tik", B, context.gains.gains)
    return phi, drive


def _initial_error(
    record: HistoryRecord, initial_offset: Optional[np.ndarray], n: int
) -> np.ndarray:
    new = np.zeros(n) if initial_offset is None else np.asarray(initial_offset, dtype=float)
    old = np.zeros(n) if record.initial_offset is None else record.initial_offset
    return new - old


def _stage_costs(costs: StageCostSchedule, ks: np.ndarray, z: np.ndarray, v: np.ndarray):
    error = z - costs.state_target[ks]
    return (
        np.sum(costs.state_weight[ks] * error * error, axis=-1)
        + np.sum(costs.input_weight[ks] * v * v, axis=-1)
        + np.sum(np.abs(costs.input_price[ks] * v), axis=-1)
    )


def _finish(
    record: HistoryRecord, t_start: int, states, inputs, context: ProblemContext
) -> ShiftResult:
    T = context.model.period
    ks = np.arange(t_start, T + 1)
    tightened = context.tightened
    slack = (
        tightened.f[ks]
        - np.einsum("kpn,kn->kp", tightened.F[ks], states)
        - np.einsum("kpm,km->kp", tightened.G[ks], inputs)
    )
    violated = np.nonzero(slack.min(axis=1) < -context.margin)[0]
    stage = _stage_costs(context.costs, ks, states, inputs)
    return ShiftResult(
        iteration=record.iteration,
        t_start=t_start,
        states=states,
        inputs=inputs,
        stage_costs=stage,
        tail_costs=np.cumsum(stage[::-1])[::-1],
        feasible=violated.size == 0,
        first_violation=int(ks[violated[0]]) if violated.size else None,
    )


def shift_trajectory(
    record: HistoryRecord,
    theta_new,
    t_start: int,
    context: ProblemContext,
    *,
    initial_offset: Optional[np.ndarray] = None,
    deviation: Optional[ModelDeviation] = None,
) -> ShiftResult:
    """Shift a stored trajectory to theta_new starting at t_start.

    Args:
        record: stored iteration (nominal trajectory and its theta)
        theta_new: coefficients of the new iteration
        t_start: shift start in [0, T]; the error is zero there
        context: model, basis, gains, tightened constraints and costs
        initial_offset: offset w_s of the new iteration; only used when t_start = 0
        deviation: dynamics deviation of the new iteration

    Returns:
        ShiftResult; infeasibility is reported by its flag
    """
    T = context.model.period
    if not 0 <= t_start <= T:
        raise InvalidArgumentError("t_start", f"must lie in [0, {T}], got {t_start}")
    phi, drive = _drive(record, theta_new, context, deviation)
    K = context.gains.gains
    traj = record.trajectory
    n = context.model.state_dim

    e = _initial_error(record, initial_offset, n) if t_start == 0 else np.zeros(n)
    states = np.zeros((T + 1 - t_start, n))
    inputs = np.zeros((T + 1 - t_start, context.model.input_dim))
    for k in range(t_start, T + 1):
        states[k - t_start] = traj.states[k] + e
        inputs[k - t_start] = traj.inputs[k] + K[k] @ e
        if k < T:
            e = phi[k] @ e + drive[k]
    return _finish(record, t_start, states, inputs, context)


def shift_all_starts(
    record: HistoryRecord,
    theta_new,
    context: ProblemContext,
    *,
    initial_offset: Optional[np.ndarray] = None,
    deviation: Optional[ModelDeviation] = None,
) -> List[ShiftResult]:
    """shift_trajectory for every t_start = 0..T, propagating all errors together."""
    T = context.model.period
    n = context.model.state_dim
    phi, drive = _drive(record, theta_new, context, deviation)
    K = context.gains.gains
    traj = record.trajectory

    # errors[s, k] = e_{k|s} for k >= s
    errors = np.zeros((T + 1, T + 1, n))
    active = np.zeros((T + 1, n))
    active[0] = _initial_error(record, initial_offset, n)
    for k in range(T + 1):
        errors[: k + 1, k] = active[: k + 1]
        if k < T:
            active[: k + 1] = active[: k + 1] @ phi[k].T + drive[k]

    results = []
    for s in range(T + 1):
        e = errors[s, s:]
        states = traj.states[s:] + e
        inputs = traj.inputs[s:] + np.einsum("kmn,kn->km", K[s:], e)
        results.append(_finish(record, s, states, inputs, context))
    return results


@dataclass(frozen=True)
class SafeSetEntry:
    state: np.ndarray
    cost: float
    iteration: int
    shift_start: int

    @property
    def provenance(self) -> Provenance:
        return (self.iteration, self.shift_start)


class QueryResult(NamedTuple):
    cost: float
    provenance: Optional[Provenance]

    @property
    def found(self) -> bool:
        return self.provenance is not None


@dataclass
class SafeSet:
    """Sampled safe set for one iteration: entries per level k = 0..T.

    state_dim sizes the lookup arrays of empty levels; it defaults to the
    dimension of the first stored entry.
    """

    period: int
    levels: Tuple[Tuple[SafeSetEntry, ...], ...]
    shifts: Dict[Provenance, ShiftResult] = field(default_factory=dict, repr=False)
    state_dim: Optional[int] = None

    def __post_init__(self):
        if self.state_dim is None:
            first = next((level[0] for level in self.levels if level), None)
            self.state_dim = 0 if first is None else int(np.asarray(first.state).size)
        n = self.state_dim
        self._states = [
            np.array([e.state for e in level], dtype=float).reshape(len(level), n)
            if level
            else np.empty((0, n))
            for level in self.levels
        ]
        self._costs = [np.array([e.cost for e in level], dtype=float) for level in self.levels]

    def first_level(self, k: int = 0) -> Optional[int]:
        """Smallest non-empty level >= k, or None."""
        return next((j for j in range(k, self.period + 1) if self.levels[j]), None)

    def level(self, k: int) -> Tuple[SafeSetEntry, ...]:
        if not 0 <= k <= self.period:
            raise InvalidArgumentError("k", f"must lie in [0, {self.period}], got {k}")
        return self.levels[k]

    def query(self, k: int, z, tolerance: float = STATE_MATCH_TOLERANCE) -> QueryResult:
        level = self.level(k)
        if not level:
            return QueryResult(np.inf, None)
        z = np.asarray(z, dtype=float)
        matches = np.nonzero(np.max(np.abs(self._states[k] - z), axis=1) <= tolerance)[0]
        if matches.size == 0:
            return QueryResult(np.inf, None)
        best = min(matches, key=lambda r: (self._costs[k][r], *level[r].provenance))
        return QueryResult(float(self._costs[k][best]), level[best].provenance)

    def tail(self, provenance: Provenance, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Shifted states and inputs of one provenance from level k to T."""
        shift = self.shifts[provenance]
        offset = k - shift.t_start
        return shift.states[offset:], shift.inputs[offset:]

    def summary(self) -> List[Dict[str, float]]:
        return [
            {
                "k": k,
                "entries": len(level),
                "min_cost": float(self._costs[k].min()) if level else None,
                "max_cost": float(self._costs[k].max()) if level else None,
            }
            for k, level in enumerate(self.levels)
        ]

    def to_dict(self) -> Dict[str, object]:
        return {
            "period": self.period,
            "levels": [
                [
                    {
                        "state": e.state.tolist(),
                        "cost": e.cost,
                        "iteration": e.iteration,
                        "shift_start": e.shift_start,
                    }
                    for e in level
                ]
                for level in self.levels
            ],
        }


def query_Q(
    safe_set: SafeSet, k: int, z, tolerance: float = STATE_MATCH_TOLERANCE
) -> QueryResult:
    """Minimum cost-to-go among entries of level k matching z, or (+inf, None)."""
    return safe_set.query(k, z, tolerance)


def _deduplicate(entries: List[SafeSetEntry], tolerance: float) -> Tuple[SafeSetEntry, ...]:
    if len(entries) <= 1:
        return tuple(entries)
    ordered = sorted(entries, key=lambda e: (e.cost, e.iteration, e.shift_start))
    states = np.array([e.state for e in ordered])
    neighbours = cKDTree(states).query_ball_point(states, r=tolerance, p=np.inf)
    removed = np.zeros(len(ordered), dtype=bool)
    kept = []
    for index, entry in enumerate(ordered):
        if removed[index]:
            continue
        kept.append(entry)
        removed[neighbours[index]] = True
    return tuple(kept)


def build_safe_set(
    history: HistoryStore,
    theta_new,
    context: ProblemContext,
    *,
    initial_offset: Optional[np.ndarray] = None,
    deviation: Optional[ModelDeviation] = None,
    tolerance: float = STATE_MATCH_TOLERANCE,
    min_level: int = 0,
    max_workers: Optional[int] = None,
) -> SafeSet:
    """Shift every stored iteration from every start and collect the feasible tails.

    Args:
        min_level: levels below this index may be empty

    Raises:
        SafeSetError: history is empty or some level >= min_level is empty
    """
    if len(history) == 0:
        raise SafeSetError("safe set needs at least one stored iteration")
    T = context.model.period

    def shift_record(record: HistoryRecord) -> List[ShiftResult]:
        return shift_all_starts(
            record, theta_new, context, initial_offset=initial_offset, deviation=deviation
        )

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        per_record = list(executor.map(shift_record, history.records))

    shifts: Dict[Provenance, ShiftResult] = {}
    levels: List[List[SafeSetEntry]] = [[] for _ in range(T + 1)]
    for results in per_record:
        for shift in results:
            if not shift.feasible:
                continue
            shifts[shift.provenance] = shift
            for k in range(shift.t_start, T + 1):
                levels[k].append(
                    SafeSetEntry(
                        state=shift.state(k),
                        cost=shift.cost_to_go(k),
                        iteration=shift.iteration,
                        shift_start=shift.t_start,
                    )
                )

    deduplicated = tuple(_deduplicate(level, tolerance) for level in levels)
    empty = [k for k in range(min_level, T + 1) if not deduplicated[k]]
    if empty:
        raise SafeSetError(
            f"safe set empty at levels {empty}: no stored iteration can be shifted "
            "to the new disturbance coefficients there"
        )
    infeasible = sum(1 for results in per_record for s in results if not s.feasible)
    logger.debug(
        "safe set built from %d iterations: %d feasible shifts, %d infeasible",
        len(history),
        len(shifts),
        infeasible,
    )
    return SafeSet(
        period=T, levels=deduplicated, shifts=shifts, state_dim=context.model.state_dim
    )
