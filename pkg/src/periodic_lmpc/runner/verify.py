"""Re-check a finished run directory from its files alone."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np

from lmpc_core.constants import COST_RELATIVE_TOLERANCE, CONSTRAINT_MARGIN, PROPERTY_TOLERANCE
from lmpc_core.exceptions import ArtifactError, InvariantViolationError
from lmpc_core.model import check_constraints
from lmpc_core.tube import TubeArtifacts

from ..config import config_from_mapping
from .utils.artifact_writer import TUBE_FILE, read_json, load_report

logger = logging.getLogger(__name__)

DIFFERENCE_TOLERANCE = 1e-12


@dataclass
class VerificationReport:
    """Counts of the checks that passed, by kind"""

    run_dir: Path
    checks: Dict[str, int] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def count(self, kind: str, number: int = 1) -> None:
        self.checks[kind] = self.checks.get(kind, 0) + number

    @property
    def total(self) -> int:
        return sum(self.checks.values())


def _columns(frame, prefix: str) -> List[str]:
    columns = [c for c in frame.columns if c.startswith(prefix) and c[len(prefix) :].isdigit()]
    return sorted(columns, key=lambda c: int(c[len(prefix) :]))


def verify_run(run_dir: Path) -> VerificationReport:
    """Check the manifest, the tube digest and every recorded metric against each other.

    Args:
        run_dir: directory written by run_experiment

    Returns:
        VerificationReport with the number of checks per kind

    Raises:
        ArtifactError: missing files, incomplete run or digest mismatch
        InvariantViolationError: a recorded metric contradicts another
    """
    run_dir = Path(run_dir)
    report, manifest = load_report(run_dir)
    result = VerificationReport(run_dir=run_dir)

    if manifest.get("status") != "complete":
        raise ArtifactError(f"run in {run_dir} is {manifest.get('status', 'unknown')}")
    if manifest.get("completed_iterations") != report.iterations:
        raise ArtifactError(
            f"manifest lists {manifest.get('completed_iterations')} iterations, "
            f"costs.csv has {report.iterations}"
        )
    missing = [name for name in manifest.get("files", []) if not (run_dir / name).exists()]
    if missing:
        raise ArtifactError(f"files listed in the manifest are missing: {missing}")
    result.count("manifest")

    tube = read_json(run_dir / TUBE_FILE)
    recorded = manifest.get("tube", {}).get("digest")
    try:
        recomputed = TubeArtifacts.from_dict(tube["artifacts"]).digest()
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"unreadable tube artifacts: {e}")
    if not recorded == tube.get("digest") == recomputed:
        raise ArtifactError(
            f"tube digest mismatch: manifest {recorded}, file {tube.get('digest')}, "
            f"recomputed {recomputed}"
        )
    result.count("tube_digest")

    for row in report.rows:
        expected = row["lmpc_cost"] - row["optimal_cost"]
        if abs(row["difference"] - expected) > DIFFERENCE_TOLERANCE * max(1.0, abs(expected)):
            raise InvariantViolationError(
                f"iteration {row['iteration']}: recorded difference {row['difference']!r} "
                f"is not lmpc_cost - optimal_cost = {expected!r}"
            )
        result.count("difference")

    for iteration, rows in sorted(report.shifted_costs.items()):
        for row in rows:
            excess = row["closed_loop_cost"] - row["shifted_cost"]
            if row["feasible"] and excess > PROPERTY_TOLERANCE:
                raise InvariantViolationError(
                    f"iteration {iteration}: closed-loop cost {row['closed_loop_cost']:.9f} "
                    f"exceeds the shifted cost {row['shifted_cost']:.9f} of iteration "
                    f"{row['source_iteration']}"
                )
            result.count("shifted_cost")

    spec = config_from_mapping(manifest["config"]).build_scenario()
    costs = {row["iteration"]: row["lmpc_cost"] for row in report.rows}
    for iteration, frame in sorted(report.trajectories.items()):
        total = float(frame["nominal_cost"].sum())
        expected = costs.get(iteration)
        if expected is None:
            raise ArtifactError(f"trajectory_{iteration}.csv has no costs.csv row")
        if abs(total - expected) > COST_RELATIVE_TOLERANCE * max(1.0, abs(expected)):
            raise InvariantViolationError(
                f"iteration {iteration}: stage costs sum to {total!r}, costs.csv has {expected!r}"
            )
        result.count("cost_resummation")

        states = frame[_columns(frame, "true_x")].to_numpy()
        inputs = frame[_columns(frame, "true_u")].to_numpy()
        for t in range(states.shape[0]):
            check = check_constraints(spec.constraints, t, states[t], inputs[t], CONSTRAINT_MARGIN)
            if not check.satisfied:
                raise InvariantViolationError(
                    f"iteration {iteration}: true trajectory violates the constraints at t={t} "
                    f"by {check.violation:.3e}"
                )
        result.count("true_constraints", states.shape[0])

    if not report.trajectories:
        result.notes.append("no trajectory files: resummation and constraint checks skipped")
    logger.info("verified %s: %d checks %s", run_dir, result.total, result.checks)
    return result
