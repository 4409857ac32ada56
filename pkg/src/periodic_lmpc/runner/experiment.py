"""Experiment driver: tube, seed and the iterated LMPC closed loop.

One experiment builds the scenario and its tube once, constructs the
iteration-0 seed and then, for j = 1..J, draws theta^j (and the residual,
offset and deviation streams), builds the safe set, runs the closed loop and
the full-horizon optimum, checks the feasibility and cost properties and
writes the iteration's files.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from lmpc_core.cache import TubeArtifactCache, scenario_key
from lmpc_core.constants import RPI_MAX_HORIZON
from lmpc_core.controller import IterationResult, closed_loop_iteration, solve_full_horizon
from lmpc_core.disturbance import (
    DEVIATION_STREAM,
    OFFSET_STREAM,
    iteration_rng,
    sample_residual,
    sample_theta,
)
from lmpc_core.exceptions import LmpcError, StabilizabilityError
from lmpc_core.learning import (
    HistoryRecord,
    HistoryStore,
    ModelDeviation,
    ProblemContext,
    SafeSet,
    build_safe_set,
    shift_trajectory,
)
from lmpc_core.qp import QpSettings
from lmpc_core.seed import SeedResult, construct_seed
from lmpc_core.tube import TubeArtifacts, build_tube

from ..config import DeviationBound, ExperimentConfig
from ..scenarios import ScenarioSpec
from ..types import IterationMetrics, RunManifest, ShiftedCostRow, TubeSummary
from .checks import (
    RepeatedThetaTracker,
    check_cost_chain,
    check_descent,
    check_successor_plans,
)
from .report import MetricsReport
from .utils.artifact_writer import RunArtifactWriter

logger = logging.getLogger(__name__)


def tube_cache_key(spec: ScenarioSpec) -> str:
    """Digest of every input that determines the tube artifacts"""
    model, constraints = spec.model, spec.constraints
    return scenario_key(
        {
            "A": model.A.tolist(),
            "B": model.B.tolist(),
            "C": model.C.tolist(),
            "F": constraints.F.tolist(),
            "G": constraints.G.tolist(),
            "f": constraints.f.tolist(),
            "residual": spec.basis.residual_halfwidth.tolist(),
            "Q": spec.Q_lqr.tolist(),
            "R": spec.R_lqr.tolist(),
            "alpha": spec.alpha_target,
            "max_horizon": RPI_MAX_HORIZON,
        }
    )


def sample_deviation(
    bound: DeviationBound, spec: ScenarioSpec, seed: int, iteration: int
) -> ModelDeviation:
    """Constant dA, dB drawn componentwise uniformly in [-bound, bound]"""
    n, m = spec.model.state_dim, spec.model.input_dim
    rng = iteration_rng(seed, iteration, DEVIATION_STREAM)
    half_A = np.broadcast_to(np.asarray(bound.A, dtype=float), (n, n))
    half_B = np.broadcast_to(np.asarray(bound.B, dtype=float), (n, m))
    delta_A = rng.uniform(-half_A, half_A)
    delta_B = rng.uniform(-half_B, half_B)
    return ModelDeviation.constant(delta_A, delta_B, spec.period)


def sample_offset(bound, seed: int, iteration: int) -> np.ndarray:
    """Initial-state offset w_s drawn uniformly in the box [-bound, bound]"""
    half = np.asarray(bound, dtype=float)
    return iteration_rng(seed, iteration, OFFSET_STREAM).uniform(-half, half)


class ExperimentSession:
    """State of one experiment: scenario, tube, history and collected metrics"""

    def __init__(self, config: ExperimentConfig, cache: Optional[TubeArtifactCache] = None):
        self.config = config
        self.cache = cache
        self.spec = config.build_scenario()
        tolerances = config.tolerances
        self.lmpc = replace(
            self.spec.lmpc,
            qp=QpSettings(eps_abs=tolerances.qp_eps_abs, eps_rel=tolerances.qp_eps_rel),
            state_tolerance=tolerances.state_match,
            property_tolerance=tolerances.property,
        )
        self.history = HistoryStore()
        self.report = MetricsReport(
            scenario=self.spec.name, seed=config.seed, theta_labels=list(self.spec.basis.labels)
        )
        self.tube: Optional[TubeArtifacts] = None
        self.context: Optional[ProblemContext] = None
        self.seed_result: Optional[SeedResult] = None
        self.results: List[IterationResult] = []
        self._tracker = RepeatedThetaTracker(tolerances.property)

    @property
    def extensions_active(self) -> bool:
        extensions = self.config.extensions
        return extensions.initial_offset_bound is not None or extensions.deviation_bound is not None

    def build_tube(self) -> TubeArtifacts:
        spec = self.spec
        key = tube_cache_key(spec)
        artifacts = self.cache.load(key) if self.cache is not None else None
        if artifacts is None:
            artifacts = build_tube(
                spec.model,
                spec.constraints,
                spec.basis.residual_halfwidth,
                spec.Q_lqr,
                spec.R_lqr,
                alpha_target=spec.alpha_target,
            )
            if self.cache is not None:
                self.cache.save(key, artifacts)
        else:
            logger.info("reusing cached tube artifacts %s", key[:12])
        self.tube = artifacts
        self.context = ProblemContext(
            model=spec.model,
            basis=spec.basis,
            gains=artifacts.gains,
            tightened=artifacts.tightened,
            costs=spec.costs,
            margin=self.config.tolerances.constraint_margin,
        )
        logger.info(
            "tube ready: horizon %d, alpha %.4f, spectral radius %.4f",
            artifacts.rpi.horizon,
            artifacts.rpi.alpha,
            artifacts.gains.spectral_radius(spec.model),
        )
        return artifacts

    def tube_summary(self) -> TubeSummary:
        assert self.tube is not None
        return TubeSummary(
            horizon=self.tube.rpi.horizon,
            alpha=self.tube.rpi.alpha,
            spectral_radius=self.tube.gains.spectral_radius(self.spec.model),
            degenerate_steps=list(self.tube.tightened.degenerate_steps),
            digest=self.tube.digest(),
        )

    def build_seed(self) -> SeedResult:
        assert self.context is not None
        bound = self.config.extensions.initial_offset_bound
        result = construct_seed(
            self.context,
            self.spec.theta_domain,
            offset_bound=None if bound is None else np.asarray(bound, dtype=float),
            relaxed=self.spec.relaxed_seed,
            first_start=self.lmpc.horizon if self.spec.relaxed_seed else 0,
        )
        self.history.append(
            result.record, self.context.tightened, self.config.tolerances.constraint_margin
        )
        self.seed_result = result
        logger.info(
            "seed ready: cost %.6f, margin scale %.3f, %d failed vertex shifts",
            result.record.trajectory.cumulative_cost,
            result.scale,
            len(result.failed_shifts),
        )
        return result

    def seed_summary(self) -> Dict[str, Any]:
        assert self.seed_result is not None
        return {
            "cost": self.seed_result.record.trajectory.cumulative_cost,
            "scale": self.seed_result.scale,
            "vertices": self.seed_result.vertices,
            "failed_shifts": [list(pair) for pair in self.seed_result.failed_shifts],
            "verified": self.seed_result.verified,
            "first_start": self.seed_result.first_start,
        }

    def _theta(self, iteration: int) -> np.ndarray:
        fixed = self.config.overrides.fixed_theta
        if fixed is not None:
            return np.asarray(fixed, dtype=float)
        return sample_theta(self.spec.theta_domain, self.config.seed, iteration).values

    def _deviation(self, iteration: int) -> Optional[ModelDeviation]:
        bound = self.config.extensions.deviation_bound
        if bound is None:
            return None
        deviation = sample_deviation(bound, self.spec, self.config.seed, iteration)
        assert self.tube is not None
        radius = self.tube.gains.spectral_radius(deviation.apply(self.spec.model))
        if radius >= 1.0:
            raise StabilizabilityError(
                f"iteration {iteration}: tube gains do not stabilize the deviated model "
                f"(spectral radius {radius:.6f})"
            )
        return deviation

    def _offset(self, iteration: int) -> Optional[np.ndarray]:
        bound = self.config.extensions.initial_offset_bound
        if bound is None:
            return None
        return sample_offset(bound, self.config.seed, iteration)

    def run_iteration(self, iteration: int) -> IterationResult:
        """Run iteration j >= 1 and append its metrics and history record"""
        assert self.context is not None
        spec, config, context = self.spec, self.config, self.context
        theta = self._theta(iteration)
        residual = sample_residual(spec.basis, config.seed, iteration)
        offset = self._offset(iteration)
        deviation = self._deviation(iteration)

        safe_set = build_safe_set(
            self.history,
            theta,
            context,
            initial_offset=offset,
            deviation=deviation,
            tolerance=self.lmpc.state_tolerance,
            min_level=spec.period if spec.relaxed_seed else 0,
        )
        plant_context = context if deviation is None else replace(
            context, model=deviation.apply(spec.model)
        )
        result = closed_loop_iteration(
            iteration, theta, residual, safe_set, plant_context, self.lmpc, initial_offset=offset
        )
        x0 = None if offset is None else spec.model.x_s + offset
        optimal = solve_full_horizon(plant_context, theta, x0=x0, settings=self.lmpc.qp)
        result = result.with_optimal_cost(optimal.value)

        chain = descent = candidate = 0
        if config.toggles.check_invariants:
            tolerance = self.lmpc.property_tolerance
            chain = check_cost_chain(result, safe_set, tolerance)
            descent = check_descent(result, tolerance)
            candidate = check_successor_plans(result, safe_set, plant_context, self.lmpc)
            if not self.extensions_active:
                chain += self._tracker.observe(result)

        self._collect(iteration, result, safe_set, optimal.trajectory.states, offset, deviation)
        summary = result.summary()
        self.report.rows.append(
            IterationMetrics(
                iteration=iteration,
                optimal_cost=float(optimal.value),
                lmpc_cost=float(result.cumulative_cost),
                true_cost=float(result.true.cumulative_cost),
                difference=float(result.cumulative_cost - optimal.value),
                lmpc_value_t0=float(result.lmpc_values[0]),
                safe_set_size=sum(len(level) for level in safe_set.levels),
                feasible_shifts=len(safe_set.shifts),
                candidates=summary["candidates"],
                solved=summary["solved"],
                infeasible=summary["infeasible"],
                pruned=summary["pruned"],
                chain_checks=chain,
                descent_checks=descent,
                candidate_checks=candidate,
                violations=len(result.true.violations),
            )
        )
        self.report.theta[iteration] = theta.tolist()
        self.history.append(
            HistoryRecord(
                trajectory=result.nominal,
                theta=theta,
                iteration=iteration,
                initial_offset=offset,
                deviation=deviation,
            ),
            context.tightened,
            config.tolerances.constraint_margin,
        )
        self.results.append(result)
        logger.info(
            "iteration %d: J=%.6f, J*=%.6f, difference %.3e, safe set %d entries",
            iteration,
            result.cumulative_cost,
            optimal.value,
            result.cumulative_cost - optimal.value,
            self.report.rows[-1]["safe_set_size"],
        )
        return result

    def _collect(
        self,
        iteration: int,
        result: IterationResult,
        safe_set: SafeSet,
        optimal_states: np.ndarray,
        offset: Optional[np.ndarray],
        deviation: Optional[ModelDeviation],
    ) -> None:
        assert self.context is not None
        toggles = self.config.toggles
        report = self.report
        report.safe_set_summaries[iteration] = safe_set.summary()
        if toggles.dump_safe_sets:
            report.safe_set_dumps[iteration] = safe_set.to_dict()

        records: Tuple[HistoryRecord, ...] = ()
        if iteration in toggles.shifted_cost_iterations:
            records = self.history.records
        elif toggles.record_trajectories:
            records = (self.history[0],)
        shifts = {
            record.iteration: shift_trajectory(
                record, result.theta, 0, self.context, initial_offset=offset, deviation=deviation
            )
            for record in records
        }
        if iteration in toggles.shifted_cost_iterations:
            report.shifted_costs[iteration] = [
                ShiftedCostRow(
                    source_iteration=source,
                    shifted_cost=shift.cost_to_go(0),
                    feasible=shift.feasible,
                    closed_loop_cost=result.cumulative_cost,
                )
                for source, shift in sorted(shifts.items())
            ]
        if toggles.record_trajectories:
            report.trajectories[iteration] = self.trajectory_frame(
                result, shifts[0].states, optimal_states
            )

    def trajectory_frame(
        self, result: IterationResult, shifted_states: np.ndarray, optimal_states: np.ndarray
    ) -> pd.DataFrame:
        """Per-step table: nominal and true trajectories, reference, bounds of the tracked
        state, the seed shifted to theta^j and the full-horizon optimum"""
        spec = self.spec
        index = spec.tracked_state
        lower, upper = spec.state_bounds()
        frame = result.to_frame()
        frame["reference"] = spec.reference()
        frame["lower"] = lower
        frame["upper"] = upper
        frame[f"shifted_x{index + 1}"] = shifted_states[:, index]
        frame[f"optimal_x{index + 1}"] = optimal_states[:, index]
        return frame


def _initial_manifest(config: ExperimentConfig, spec: ScenarioSpec) -> RunManifest:
    from .. import get_version

    return RunManifest(
        status="running",
        scenario=spec.name,
        seed=config.seed,
        iterations=config.iterations,
        completed_iterations=0,
        config=config.echo(),
        tube={},
        seed_trajectory={},
        files=[],
        error=None,
        version=get_version(),
    )


def run_experiment(
    config: ExperimentConfig, cache: Optional[TubeArtifactCache] = None
) -> MetricsReport:
    """Run a full experiment and write its run directory.

    Args:
        config: validated experiment configuration
        cache: tube artifact cache (defaults to config.cache_dir when set)

    Returns:
        MetricsReport of the completed run

    Raises:
        LmpcError: any failure; the manifest is flagged incomplete first
    """
    if cache is None and config.cache_dir is not None:
        cache = TubeArtifactCache(Path(config.cache_dir))
    session = ExperimentSession(config, cache)
    writer = RunArtifactWriter(config.run_dir)
    writer.start(_initial_manifest(config, session.spec))
    try:
        artifacts = session.build_tube()
        writer.write_tube(artifacts, session.tube_summary())
        session.build_seed()
        writer.set_seed_summary(session.seed_summary())
        for iteration in range(1, config.iterations + 1):
            session.run_iteration(iteration)
            writer.write_iteration(session.report, iteration)
    except LmpcError as e:
        writer.fail(session.report, e)
        raise
    writer.finish(session.report)
    return session.report
