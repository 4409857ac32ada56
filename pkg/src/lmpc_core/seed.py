"""Iteration-0 trajectory that every admissible theta can be shifted from.

The seed solves the full-horizon problem at the box center theta^0 with the
tightened constraints reduced further by the worst shifting error over the theta
box. The shift error from start t is linear in theta - theta^0, so its support in
a constraint direction over the box is a weighted absolute sum, and checking
the box vertices afterwards certifies every theta in the box.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from lmpc_core.controller import solve_full_horizon
from lmpc_core.disturbance import ThetaDomain
from lmpc_core.exceptions import InvalidArgumentError, SafeSetError, ScenarioConfigurationError
from lmpc_core.learning import HistoryRecord, ProblemContext, shift_all_starts
from lmpc_core.model import PolytopicConstraintSchedule
from lmpc_core.models import Trajectory

logger = logging.getLogger(__name__)

BISECTION_STEPS = 20
# absolute back-off so solver tolerance cannot push the seed past the margin
SEED_BACKOFF = 1e-7


@dataclass(frozen=True)
class SeedResult:
    """Seed trajectory and how well it covers the theta box.

    Attributes:
        record: iteration-0 history record
        shift_margin: extra tightening per (t, row) applied when solving for the seed
        scale: fraction of shift_margin that was enforced (1.0 for a robust seed)
        failed_shifts: (vertex index, shift start) pairs that violate the tightened constraints
        vertices: number of box vertices checked
        first_start: earliest shift start the seed was built to keep feasible
    """

    record: HistoryRecord
    shift_margin: np.ndarray
    scale: float
    failed_shifts: Tuple[Tuple[int, int], ...]
    vertices: int
    first_start: int = 0

    @property
    def verified(self) -> bool:
        return not self.failed_shifts


def shift_error_margin(
    context: ProblemContext,
    domain: ThetaDomain,
    offset_bound: Optional[np.ndarray] = None,
    first_start: int = 0,
) -> np.ndarray:
    """max over starts first_start <= t <= k and theta in the box of (F_k + G_k K_k) e_{k|t}.

    Args:
        offset_bound: half widths of an initial-state offset, applied to shifts from t = 0
        first_start: earliest shift start that has to stay feasible; rows k < first_start
            get no margin
    """
    model, basis, K = context.model, context.basis, context.gains.gains
    schedule = context.tightened
    T, n = model.period, model.state_dim
    if not 0 <= first_start <= T:
        raise InvalidArgumentError("first_start", f"must lie in [0, {T}], got {first_start}")
    p = basis.size
    phi = model.A + np.einsum("tij,tjk->tik", model.B, K)
    directions = schedule.F + np.einsum("tpm,tmn->tpn", schedule.G, K)
    halfwidth = domain.halfwidth
    injected = np.einsum("tnd,tdp->tnp", model.C, basis.samples)

    margin = np.zeros_like(schedule.f)
    # sensitivities[s] = d e_{k|s} / d theta for the active starts s <= k
    sensitivities = np.zeros((T + 1, n, p))
    offset = np.eye(n)
    for k in range(T + 1):
        if k >= first_start:
            active = sensitivities[first_start : k + 1]
            bound = np.abs(np.einsum("pn,snq->spq", directions[k], active)) @ halfwidth
            margin[k] = bound.max(axis=0)
            if offset_bound is not None and first_start == 0:
                offset_term = np.abs(directions[k] @ offset) @ offset_bound
                margin[k] = np.maximum(margin[k], bound[0] + offset_term)
        if offset_bound is not None:
            offset = phi[k] @ offset
        if k < T:
            sensitivities[: k + 1] = (
                np.einsum("ij,sjq->siq", phi[k], sensitivities[: k + 1]) + injected[k]
            )
    return margin


def _vertex_failures(
    record: HistoryRecord,
    context: ProblemContext,
    domain: ThetaDomain,
    offset_bound: Optional[np.ndarray],
    first_start: int,
) -> Tuple[List[Tuple[int, int]], int]:
    failures: List[Tuple[int, int]] = []
    offsets: List[Optional[np.ndarray]] = [None]
    if offset_bound is not None:
        offsets = list(ThetaDomain(-offset_bound, offset_bound).vertices())
    vertices = list(domain.vertices())
    for index, vertex in enumerate(vertices):
        for offset in offsets:
            for shift in shift_all_starts(record, vertex, context, initial_offset=offset):
                if shift.t_start < first_start or shift.feasible:
                    continue
                if (index, shift.t_start) not in failures:
                    failures.append((index, shift.t_start))
    return failures, len(vertices)


def construct_seed(
    context: ProblemContext,
    domain: ThetaDomain,
    *,
    offset_bound: Optional[np.ndarray] = None,
    relaxed: bool = False,
    first_start: int = 0,
) -> SeedResult:
    """Build and certify the iteration-0 trajectory.

    Args:
        context: nominal problem with tightened constraints
        domain: theta box
        offset_bound: half widths of initial-state offsets to cover
        relaxed: when the robust seed problem is infeasible, enforce the largest
            feasible fraction of the shift margin instead of failing
        first_start: shifts starting before this step are not required to stay
            feasible

    Raises:
        SafeSetError: the robust seed problem is infeasible (strict mode) or some
            vertex shift fails in strict mode
    """
    theta0 = domain.center
    margin = shift_error_margin(context, domain, offset_bound, first_start)
    base = context.tightened

    def solve(scale: float) -> Optional[Trajectory]:
        f_seed = base.f - scale * margin - SEED_BACKOFF
        schedule = PolytopicConstraintSchedule(F=base.F, G=base.G, f=f_seed)
        try:
            return solve_full_horizon(context, theta0, schedule=schedule).trajectory
        except ScenarioConfigurationError:
            return None

    scale = 1.0
    trajectory = solve(scale)
    if trajectory is None:
        if not relaxed:
            raise SafeSetError(
                "no iteration-0 trajectory keeps every theta shift feasible: the constraints "
                f"tightened by the worst-case shift error (up to {margin.max():.3f}) are empty"
            )
        low, high = 0.0, 1.0
        trajectory = solve(low)
        if trajectory is None:
            raise ScenarioConfigurationError("full-horizon problem is infeasible at theta center")
        for _ in range(BISECTION_STEPS):
            middle = 0.5 * (low + high)
            candidate = solve(middle)
            if candidate is None:
                high = middle
            else:
                low, trajectory = middle, candidate
        scale = low
        logger.warning("robust seed infeasible; enforcing %.3f of the shift margin", scale)

    record = HistoryRecord(
        trajectory=trajectory.with_iteration(0),
        theta=theta0,
        iteration=0,
        initial_offset=None if offset_bound is None else np.zeros(context.model.state_dim),
    )
    failures, vertices = _vertex_failures(record, context, domain, offset_bound, first_start)
    if failures and not relaxed:
        raise SafeSetError(
            f"iteration-0 seed fails {len(failures)} vertex shifts (first: vertex "
            f"{failures[0][0]}, start {failures[0][1]})"
        )
    if failures:
        logger.warning(
            "seed covers the theta box only partially: %d vertex shifts fail", len(failures)
        )
    else:
        logger.info("seed verified at %d theta vertices", vertices)
    return SeedResult(
        record=record,
        shift_margin=margin,
        scale=scale,
        failed_shifts=tuple(failures),
        vertices=vertices,
        first_start=first_start,
    )
