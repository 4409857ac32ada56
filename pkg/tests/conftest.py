"""
Pytest configuration and shared fixtures for the periodic LMPC tests

This file provides scenario fixtures, their tube artifacts and problem
contexts, plus temporary directories for run outputs.
"""

import shutil
import tempfile
from pathlib import Path
from typing import Generator

import numpy as np
import pytest

from lmpc_core import ProblemContext, build_tube
from lmpc_core.tube import TubeArtifacts
from periodic_lmpc.scenarios import ScenarioSpec, get_scenario


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for tests"""
    temp_path = Path(tempfile.mkdtemp(prefix="test_lmpc_"))
    yield temp_path
    # Cleanup
    if temp_path.exists():
        shutil.rmtree(temp_path)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for randomized property tests"""
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tiny_spec() -> ScenarioSpec:
    return get_scenario("tiny")


@pytest.fixture(scope="session")
def spring_mass_spec() -> ScenarioSpec:
    return get_scenario("spring-mass")


@pytest.fixture(scope="session")
def tiny_tube(tiny_spec: ScenarioSpec) -> TubeArtifacts:
    spec = tiny_spec
    return build_tube(
        spec.model, spec.constraints, spec.basis.residual_halfwidth, spec.Q_lqr, spec.R_lqr
    )


@pytest.fixture(scope="session")
def tiny_context(tiny_spec: ScenarioSpec, tiny_tube: TubeArtifacts) -> ProblemContext:
    return ProblemContext(
        model=tiny_spec.model,
        basis=tiny_spec.basis,
        gains=tiny_tube.gains,
        tightened=tiny_tube.tightened,
        costs=tiny_spec.costs,
    )


@pytest.fixture(scope="session")
def spring_mass_tube(spring_mass_spec: ScenarioSpec) -> TubeArtifacts:
    spec = spring_mass_spec
    return build_tube(
        spec.model, spec.constraints, spec.basis.residual_halfwidth, spec.Q_lqr, spec.R_lqr
    )


@pytest.fixture(scope="session")
def spring_mass_context(
    spring_mass_spec: ScenarioSpec, spring_mass_tube: TubeArtifacts
) -> ProblemContext:
    return ProblemContext(
        model=spring_mass_spec.model,
        basis=spring_mass_spec.basis,
        gains=spring_mass_tube.gains,
        tightened=spring_mass_tube.tightened,
        costs=spring_mass_spec.costs,
    )
