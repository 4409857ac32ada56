"""
Unit tests for the finite-horizon problem, the closed loop and the full-horizon baseline.
"""

import numpy as np
import pytest

from lmpc_core.controller import (
    LmpcConfig,
    closed_loop_iteration,
    lmpc_step,
    solve_full_horizon,
)
from lmpc_core.disturbance import correlated_sequence
from lmpc_core.exceptions import InvalidArgumentError, RecursiveFeasibilityError
from lmpc_core.learning import (
    HistoryRecord,
    HistoryStore,
    SafeSet,
    SafeSetEntry,
    build_safe_set,
)
from tests.oracles import scalar_dp_cost, scalar_problem, tiny_optimal_cost


@pytest.fixture(scope="module")
def tiny_history(tiny_context):
    """History holding the full-horizon optimum for theta = 0.3"""
    solution = solve_full_horizon(tiny_context, [0.3])
    history = HistoryStore()
    record = HistoryRecord(trajectory=solution.trajectory, theta=np.array([0.3]), iteration=0)
    history.append(record)
    return history


class TestFullHorizon:
    @pytest.mark.parametrize("theta", [0.2, 0.3, 0.4])
    def test_tiny_closed_form(self, tiny_context, theta):
        solution = solve_full_horizon(tiny_context, [theta])

        assert solution.value == pytest.approx(tiny_optimal_cost(theta), rel=1e-5)
        np.testing.assert_allclose(solution.trajectory.states[0], [1.5])

    def test_states_follow_nominal_dynamics(self, spring_mass_context, spring_mass_spec):
        theta = spring_mass_spec.theta_domain.upper
        solution = solve_full_horizon(spring_mass_context, theta)
        model = spring_mass_spec.model
        w = correlated_sequence(spring_mass_spec.basis, theta)
        traj = solution.trajectory

        for t in range(model.period):
            expected = model.A[t] @ traj.states[t] + model.B[t] @ traj.inputs[t] + model.C[t] @ w[t]
            np.testing.assert_allclose(traj.states[t + 1], expected, atol=1e-5)

    @pytest.mark.parametrize(
        "bound,input_bound",
        [(5.0, 5.0), (5.0, 0.3), (1.05, 0.6)],
    )
    def test_matches_grid_dynamic_programming(self, bound, input_bound):
        context = scalar_problem(period=4, a=0.5, bound=bound, input_bound=input_bound)
        theta = [0.5]

        solution = solve_full_horizon(context, theta)
        reference = scalar_dp_cost(
            0.5, correlated_sequence(context.basis, theta)[:, 0], 1.0, bound, input_bound
        )

        assert solution.value == pytest.approx(reference, rel=2e-3, abs=1e-4)
        assert np.all(np.abs(solution.trajectory.states) <= bound + 1e-6)
        assert np.all(np.abs(solution.trajectory.inputs) <= input_bound + 1e-6)


class TestLmpcConfig:
    def test_horizon_range(self):
        with pytest.raises(InvalidArgumentError, match="horizon"):
            LmpcConfig(horizon=0).validate(6)
        with pytest.raises(InvalidArgumentError, match="horizon"):
            LmpcConfig(horizon=7).validate(6)
        LmpcConfig(horizon=6).validate(6)

    def test_candidate_cap(self):
        with pytest.raises(InvalidArgumentError, match="candidate_cap"):
            LmpcConfig(horizon=2, candidate_cap=0).validate(6)


class TestLmpcStep:
    def test_recovers_stored_optimum(self, tiny_context, tiny_history):
        safe_set = build_safe_set(tiny_history, [0.3], tiny_context)

        plan = lmpc_step(np.array([1.5]), 0, [0.3], safe_set, tiny_context, LmpcConfig(horizon=2))

        assert plan.value == pytest.approx(tiny_optimal_cost(0.3), rel=1e-5)
        assert plan.states.shape == (3, 1)
        assert plan.inputs.shape == (2, 1)
        assert plan.provenance[0] == 0
        assert plan.candidates >= 1
        assert plan.solved + plan.infeasible + plan.pruned == plan.candidates

    def test_time_out_of_range(self, tiny_context, tiny_history):
        safe_set = build_safe_set(tiny_history, [0.3], tiny_context)

        with pytest.raises(InvalidArgumentError, match="t"):
            lmpc_step(np.array([0.0]), 5, [0.3], safe_set, tiny_context, LmpcConfig(horizon=2))

    def test_unreachable_candidates(self, tiny_context):
        levels = [() for _ in range(7)]
        levels[2] = (SafeSetEntry(state=np.array([1.99]), cost=1.0, iteration=0, shift_start=0),)
        safe_set = SafeSet(period=6, levels=tuple(levels))

        with pytest.raises(RecursiveFeasibilityError) as excinfo:
            lmpc_step(np.array([1.5]), 0, [0.3], safe_set, tiny_context, LmpcConfig(horizon=2))
        assert excinfo.value.t == 0
        assert excinfo.value.candidates == 1

    def test_empty_level(self, tiny_context):
        safe_set = SafeSet(period=6, levels=tuple(() for _ in range(7)))

        with pytest.raises(RecursiveFeasibilityError):
            lmpc_step(np.array([1.5]), 1, [0.3], safe_set, tiny_context, LmpcConfig(horizon=2))

    def test_explicit_horizon(self, tiny_context, tiny_history):
        safe_set = build_safe_set(tiny_history, [0.3], tiny_context)
        config = LmpcConfig(horizon=2)

        plan = lmpc_step(np.array([1.5]), 0, [0.3], safe_set, tiny_context, config, horizon=4)

        assert plan.horizon == 4
        assert plan.states.shape == (5, 1)
        assert plan.value == pytest.approx(tiny_optimal_cost(0.3), rel=1e-5)
        with pytest.raises(InvalidArgumentError, match="horizon"):
            lmpc_step(np.array([1.5]), 0, [0.3], safe_set, tiny_context, config, horizon=0)
        with pytest.raises(InvalidArgumentError, match="t"):
            lmpc_step(np.array([0.0]), 3, [0.3], safe_set, tiny_context, config, horizon=4)


class TestClosedLoop:
    def test_same_coefficients_reproduce_optimum(self, tiny_context, tiny_history):
        safe_set = build_safe_set(tiny_history, [0.3], tiny_context)

        result = closed_loop_iteration(
            1, [0.3], np.zeros((7, 1)), safe_set, tiny_context, LmpcConfig(horizon=2)
        )

        assert result.cumulative_cost == pytest.approx(tiny_optimal_cost(0.3), rel=1e-5)
        np.testing.assert_allclose(result.true.states, result.nominal.states, atol=1e-9)
        assert len(result.steps) == 5
        assert len(result.lmpc_values) == 5

    def test_value_decrease_along_the_loop(self, tiny_context, tiny_history):
        safe_set = build_safe_set(tiny_history, [0.25], tiny_context)

        result = closed_loop_iteration(
            1, [0.25], np.zeros((7, 1)), safe_set, tiny_context, LmpcConfig(horizon=2)
        )

        stages = result.nominal.stage_costs
        for t in range(len(result.lmpc_values) - 1):
            assert result.lmpc_values[t + 1] <= result.lmpc_values[t] - stages[t] + 1e-6
        assert result.cumulative_cost <= result.lmpc_values[0] + 1e-6

    def test_cost_bounded_by_optimum_and_shifted_trajectory(self, tiny_context, tiny_history):
        safe_set = build_safe_set(tiny_history, [0.35], tiny_context)

        result = closed_loop_iteration(
            1, [0.35], np.zeros((7, 1)), safe_set, tiny_context, LmpcConfig(horizon=2)
        )

        assert result.cumulative_cost >= tiny_optimal_cost(0.35) - 1e-6
        assert result.cumulative_cost <= safe_set.shifts[(0, 0)].cost_to_go(0) + 1e-6

    def test_true_state_stays_in_tube(self, tiny_context, tiny_history, rng):
        safe_set = build_safe_set(tiny_history, [0.3], tiny_context)
        residual = rng.uniform(-0.05, 0.05, size=(7, 1))

        result = closed_loop_iteration(
            1, [0.3], residual, safe_set, tiny_context, LmpcConfig(horizon=2)
        )

        gap = np.abs(result.true.states - result.nominal.states)
        assert np.all(gap <= 0.05 + 1e-9)
        assert result.true.violations == ()

    def test_frame_and_summary(self, tiny_context, tiny_history):
        safe_set = build_safe_set(tiny_history, [0.3], tiny_context)
        result = closed_loop_iteration(
            1, [0.3], np.zeros((7, 1)), safe_set, tiny_context, LmpcConfig(horizon=2)
        ).with_optimal_cost(tiny_optimal_cost(0.3))

        frame = result.to_frame()
        summary = result.summary()

        assert frame.shape[0] == 7
        assert {"t", "lmpc_value"} <= set(frame.columns)
        assert np.isnan(frame["lmpc_value"].iloc[-1])
        assert summary["iteration"] == 1
        assert summary["difference"] == pytest.approx(0.0, abs=1e-4)

    def test_startup_horizon_bridges_empty_levels(self, tiny_context, tiny_history):
        """Levels 2 and 3 are empty: plans reach level 4 and shrink back to N"""
        full = build_safe_set(tiny_history, [0.3], tiny_context)
        safe_set = _with_levels(full, {2: (), 3: ()})

        result = closed_loop_iteration(
            1, [0.3], np.zeros((7, 1)), safe_set, tiny_context, LmpcConfig(horizon=2)
        )

        assert [step.horizon for step in result.steps] == [4, 3, 2, 2, 2]
        assert result.summary()["startup_horizon"] == 4
        assert result.cumulative_cost == pytest.approx(tiny_optimal_cost(0.3), rel=1e-5)
        stages = result.nominal.stage_costs
        for t in range(len(result.lmpc_values) - 1):
            assert result.lmpc_values[t + 1] <= result.lmpc_values[t] - stages[t] + 1e-6

    def test_startup_moves_past_an_unreachable_level(self, tiny_context, tiny_history, caplog):
        full = build_safe_set(tiny_history, [0.3], tiny_context)
        safe_set = _with_levels(full, {2: (_unreachable(),)})

        with caplog.at_level("INFO", logger="lmpc_core.controller"):
            result = closed_loop_iteration(
                1, [0.3], np.zeros((7, 1)), safe_set, tiny_context, LmpcConfig(horizon=2)
            )

        assert result.steps[0].horizon == 3
        assert "start-up horizon 3" in caplog.text
        assert result.cumulative_cost == pytest.approx(tiny_optimal_cost(0.3), rel=1e-5)

    def test_no_reachable_level_raises_feasibility_error(self, tiny_context):
        levels = ((), ()) + tuple((_unreachable(),) for _ in range(5))
        safe_set = SafeSet(period=6, levels=levels)

        with pytest.raises(RecursiveFeasibilityError) as excinfo:
            closed_loop_iteration(
                1, [0.3], np.zeros((7, 1)), safe_set, tiny_context, LmpcConfig(horizon=2)
            )
        assert excinfo.value.t == 0
        assert excinfo.value.iteration == 1


def _unreachable() -> SafeSetEntry:
    """x_k <= 1.5 + 0.3 for every k >= 1 in tiny, so 1.99 is never reached"""
    return SafeSetEntry(state=np.array([1.99]), cost=1.0, iteration=0, shift_start=0)


def _with_levels(safe_set: SafeSet, replaced) -> SafeSet:
    levels = tuple(replaced.get(k, level) for k, level in enumerate(safe_set.levels))
    return SafeSet(period=safe_set.period, levels=levels, shifts=safe_set.shifts, state_dim=1)
