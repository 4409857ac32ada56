"""
Tests for the built-in benchmark scenarios.
"""

import numpy as np
import pytest

from lmpc_core.exceptions import InvalidArgumentError, ScenarioConfigurationError
from periodic_lmpc.scenarios import (
    BUILDING_RESIDUAL_HALFWIDTH,
    BUILDING_RESIDUAL_SCALE,
    SCENARIOS,
    building_comfort_band,
    building_price,
    building_reference,
    building_scenario,
    get_scenario,
)
from tests.oracles import TINY_REFERENCE


class TestRegistry:
    def test_unknown_name(self):
        with pytest.raises(ScenarioConfigurationError, match="available"):
            get_scenario("pendulum")

    @pytest.mark.parametrize(
        "name,period,state_dim,atoms,horizon",
        [
            ("spring-mass", 50, 2, 4, 4),
            ("building", 144, 3, 5, 16),
            ("tiny", 6, 1, 1, 2),
        ],
    )
    def test_dimensions(self, name, period, state_dim, atoms, horizon):
        spec = get_scenario(name)

        assert spec.name == name
        assert spec.period == period
        assert spec.model.state_dim == state_dim
        assert spec.model.input_dim == 1
        assert spec.basis.size == atoms == spec.theta_domain.size
        assert spec.lmpc.horizon == horizon

    def test_registry_names(self):
        assert sorted(SCENARIOS) == ["building", "spring-mass", "tiny"]


class TestSpringMass:
    def test_reference_and_bounds_flip_at_half_period(self, spring_mass_spec):
        reference = spring_mass_spec.reference()
        lower, upper = spring_mass_spec.state_bounds()

        assert reference[0] == -reference[-1]
        assert (lower[0], upper[0]) == (-1.0, 4.0)
        assert (lower[-1], upper[-1]) == (-4.0, 1.0)

    def test_open_loop_is_not_stable(self, spring_mass_spec):
        A = spring_mass_spec.model.A
        assert max(np.max(np.abs(np.linalg.eigvals(A[t]))) for t in range(51)) >= 1.0


class TestBuilding:
    def test_comfort_band(self):
        t = np.array([0, 47, 48, 108, 109, 144])
        lower, upper = building_comfort_band(t)

        np.testing.assert_array_equal(lower, [18, 18, 22, 22, 18, 18])
        np.testing.assert_array_equal(upper, [30, 30, 26, 26, 30, 30])

    def test_reference_switches_back_before_the_band(self):
        t = np.array([47, 48, 107, 108])
        np.testing.assert_array_equal(building_reference(t), [20, 24, 24, 20])

    def test_price_peak(self):
        t = np.array([59, 60, 95, 96])
        np.testing.assert_array_equal(building_price(t), [1, 2, 2, 1])

    def test_input_cost_is_linear(self):
        spec = get_scenario("building")
        assert not np.any(spec.costs.input_weight)
        assert np.all(spec.costs.input_price > 0)

    def test_residual_box_scale(self):
        default = building_scenario()
        full = building_scenario(residual_scale=1.0)

        np.testing.assert_allclose(
            default.basis.residual_halfwidth, BUILDING_RESIDUAL_SCALE * BUILDING_RESIDUAL_HALFWIDTH
        )
        np.testing.assert_allclose(full.basis.residual_halfwidth, [3.0, 5.0, 2.0])
        assert "residual" in default.notes
        with pytest.raises(InvalidArgumentError, match="residual_scale"):
            building_scenario(residual_scale=-1.0)

    @pytest.mark.parametrize("name", ["building", "spring-mass"])
    def test_benchmarks_use_relaxed_seeds(self, name):
        assert get_scenario(name).relaxed_seed


class TestTiny:
    def test_reference(self, tiny_spec):
        np.testing.assert_array_equal(tiny_spec.reference(), TINY_REFERENCE)

    def test_bounds(self, tiny_spec):
        lower, upper = tiny_spec.state_bounds()
        np.testing.assert_array_equal(lower, -2.0)
        np.testing.assert_array_equal(upper, 2.0)


class TestOverrides:
    def test_horizon(self, tiny_spec):
        assert tiny_spec.with_overrides(horizon=3).lmpc.horizon == 3

    def test_horizon_longer_than_period(self, tiny_spec):
        with pytest.raises(InvalidArgumentError, match="horizon"):
            tiny_spec.with_overrides(horizon=7)

    def test_theta_scale_shrinks_about_center(self, tiny_spec):
        domain = tiny_spec.with_overrides(theta_scale=0.5).theta_domain

        np.testing.assert_allclose(domain.center, [0.3])
        np.testing.assert_allclose(domain.halfwidth, [0.05])

    def test_residual_scale(self, tiny_spec):
        basis = tiny_spec.with_overrides(residual_scale=0.0).basis
        np.testing.assert_allclose(basis.residual_halfwidth, [0.0])

    def test_weights_and_initial_state(self, spring_mass_spec):
        spec = spring_mass_spec.with_overrides(Q_lqr=[2.0, 3.0], R_lqr=0.5, x_s=[2.0, 0.0])

        np.testing.assert_allclose(spec.Q_lqr, np.diag([2.0, 3.0]))
        np.testing.assert_allclose(spec.R_lqr, [[0.5]])
        np.testing.assert_allclose(spec.model.x_s, [2.0, 0.0])
