"""
Periodic LMPC public package interface.

Runs the learning model predictive controller for periodic linear
time-varying systems with a structured additive disturbance on the
built-in benchmark scenarios, and reads back or verifies the resulting
run directories. The numerical core lives in ``lmpc_core``.
"""

from importlib.metadata import PackageNotFoundError, version

from .config import ExperimentConfig, load_config
from .runner import run_experiment, verify_run
from .scenarios import SCENARIOS, get_scenario

__all__ = [
    "ExperimentConfig",
    "SCENARIOS",
    "get_scenario",
    "get_version",
    "load_config",
    "main",
    "run_experiment",
    "verify_run",
]


def get_version() -> str:
    """Return the installed package version."""
    try:
        return version("periodic-lmpc")
    except PackageNotFoundError:  # pragma: no cover - fallback for editable installs
        return "0.0.0"


def main() -> None:
    """Entry point used by the console script."""
    import sys

    from .cli import app

    sys.exit(app())
