"""
Full benchmark runs. Deselect with -m "not slow".
"""

import numpy as np
import pytest

from periodic_lmpc.config import config_from_mapping
from periodic_lmpc.runner import run_experiment, verify_run
from periodic_lmpc.scenarios import get_scenario

SETTLED_DIFFERENCE = {"spring-mass": 0.5, "building": 2.0}


def _run(scenario, iterations, run_dir, seed=11, **sections):
    data = {
        "scenario": scenario,
        "iterations": iterations,
        "seed": seed,
        "output_dir": str(run_dir),
    }
    data.update(sections)
    return run_experiment(config_from_mapping(data))


def _assert_sound(report):
    assert all(row["violations"] == 0 for row in report.rows)
    assert all(row["difference"] >= -1e-6 for row in report.rows)


@pytest.mark.slow
@pytest.mark.integration
class TestSpringMass:
    def test_twenty_iterations(self, temp_dir):
        report = _run(
            "spring-mass", 20, temp_dir, toggles={"shifted_cost_iterations": [1, 10, 20]}
        )

        assert report.iterations == 20
        _assert_sound(report)
        for iteration in (1, 10, 20):
            for row in report.shifted_costs[iteration]:
                if row["feasible"]:
                    assert row["closed_loop_cost"] <= row["shifted_cost"] + 1e-6
        assert report.max_difference() <= SETTLED_DIFFERENCE["spring-mass"]
        assert verify_run(temp_dir).checks["difference"] == 20

    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_settles_for_every_seed(self, temp_dir, seed):
        report = _run("spring-mass", 20, temp_dir, seed=seed)

        _assert_sound(report)
        assert report.max_difference() <= SETTLED_DIFFERENCE["spring-mass"]

    def test_repeated_theta_reaches_the_optimum(self, temp_dir):
        """With theta fixed the closed loop reaches J* within 15 iterations"""
        center = get_scenario("spring-mass").theta_domain.center
        report = _run(
            "spring-mass", 15, temp_dir, overrides={"fixed_theta": center.tolist()}
        )

        _assert_sound(report)
        differences = [row["difference"] for row in report.rows]
        assert np.all(np.diff(differences) <= 1e-6)
        assert min(differences) <= 1e-3


@pytest.mark.slow
@pytest.mark.integration
class TestBuilding:
    def test_twenty_iterations(self, temp_dir):
        report = _run("building", 20, temp_dir)

        assert report.iterations == 20
        _assert_sound(report)
        assert report.max_difference(10) <= SETTLED_DIFFERENCE["building"]
        assert verify_run(temp_dir).total > 0

