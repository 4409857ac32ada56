"""Run directory writer and reader

Layout of a run directory:
    <run_dir>/
        ├── manifest.json              status, config echo, digests, file list
        ├── tube.json                  gains, invariant set, tightened constraints
        ├── costs.csv                  one row per iteration
        ├── summary.json
        ├── shifted_costs_<j>.csv      selected iterations only
        ├── trajectory_<j>.csv         per-step nominal/true/reference/bounds
        ├── safe_set_summary_<j>.json
        └── safe_set_<j>.json          only with dump_safe_sets
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from lmpc_core.exceptions import ArtifactError
from lmpc_core.tube import TubeArtifacts

from ...types import IterationMetrics, RunManifest, ShiftedCostRow, TubeSummary
from ..report import COST_COLUMNS, SHIFTED_COLUMNS, MetricsReport
from .summary_generator import build_summary, write_summary_json

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
TUBE_FILE = "tube.json"
COSTS_FILE = "costs.csv"
SUMMARY_FILE = "summary.json"
REPORT_FILE = "report.json"

_INDEXED = re.compile(r"^(shifted_costs|trajectory|safe_set_summary)_(\d+)\.(csv|json)$")


def _dump_json(path: Path, data: Any) -> None:
    try:
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"failed to write {path}: {e}")


def read_json(path: Path) -> Any:
    if not path.exists():
        raise ArtifactError(f"missing run file {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactError(f"failed to read {path}: {e}")


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise ArtifactError(f"failed to write {path}: {e}")


class RunArtifactWriter:
    """Writes the files of one run and keeps its manifest current"""

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        try:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactError(f"cannot create run directory {self.run_dir}: {e}")
        self.manifest: Optional[RunManifest] = None
        self._files: List[str] = []

    def _record(self, path: Path) -> None:
        name = path.relative_to(self.run_dir).as_posix()
        if name not in self._files:
            self._files.append(name)

    def start(self, manifest: RunManifest) -> None:
        self.manifest = manifest
        self._save_manifest()

    def _save_manifest(self) -> None:
        if self.manifest is None:
            raise ArtifactError("manifest not started")
        self.manifest["files"] = sorted(self._files)
        _dump_json(self.run_dir / MANIFEST_FILE, self.manifest)

    def write_tube(
        self, artifacts: TubeArtifacts, summary: Optional[TubeSummary] = None
    ) -> str:
        """Write tube.json and record its digest and summary in the manifest

        Returns:
            sha256 digest of the artifacts
        """
        digest = artifacts.digest()
        path = self.run_dir / TUBE_FILE
        _dump_json(path, {"digest": digest, "artifacts": artifacts.to_dict()})
        self._record(path)
        if self.manifest is not None:
            self.manifest["tube"] = {"file": TUBE_FILE, **(summary or {}), "digest": digest}
            self._save_manifest()
        return digest

    def set_seed_summary(self, summary: Dict[str, Any]) -> None:
        if self.manifest is not None:
            self.manifest["seed_trajectory"] = summary
            self._save_manifest()

    def write_iteration(self, report: MetricsReport, iteration: int) -> None:
        """Per-iteration files of one completed iteration"""
        if iteration in report.trajectories:
            path = self.run_dir / f"trajectory_{iteration}.csv"
            _write_csv(report.trajectories[iteration], path)
            self._record(path)
        if iteration in report.shifted_costs:
            path = self.run_dir / f"shifted_costs_{iteration}.csv"
            _write_csv(report.shifted_frame(iteration), path)
            self._record(path)
        if iteration in report.safe_set_summaries:
            path = self.run_dir / f"safe_set_summary_{iteration}.json"
            _dump_json(path, report.safe_set_summaries[iteration])
            self._record(path)
        if iteration in report.safe_set_dumps:
            path = self.run_dir / f"safe_set_{iteration}.json"
            _dump_json(path, report.safe_set_dumps[iteration])
            self._record(path)
        if self.manifest is not None:
            self.manifest["completed_iterations"] = iteration
            self._save_manifest()

    def _write_totals(self, report: MetricsReport) -> None:
        path = self.run_dir / COSTS_FILE
        _write_csv(report.costs_frame(), path)
        self._record(path)
        self._record(write_summary_json(report, self.run_dir))

    def finish(self, report: MetricsReport) -> None:
        self._write_totals(report)
        if self.manifest is not None:
            self.manifest["status"] = "complete"
            self._save_manifest()
        logger.info("run written to %s (%d files)", self.run_dir, len(self._files))

    def fail(self, report: MetricsReport, error: BaseException) -> None:
        """Flag the run incomplete; partial metrics are still written"""
        try:
            self._write_totals(report)
        except ArtifactError as e:
            logger.warning("could not write partial metrics: %s", e)
        if self.manifest is not None:
            self.manifest["status"] = "incomplete"
            self.manifest["error"] = f"{type(error).__name__}: {error}"
            self._save_manifest()
        logger.warning("run in %s flagged incomplete: %s", self.run_dir, error)


def emit_report(report: MetricsReport, out_dir: Path, fmt: str = "csv") -> List[Path]:
    """Write report files in the requested format

    Args:
        report: metrics to write
        out_dir: target directory
        fmt: "csv" for costs.csv plus per-iteration tables, "json" for one report.json

    Returns:
        Paths written (summary.json is always among them)

    Raises:
        ArtifactError: unknown format or unwritable path
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactError(f"cannot create {out_dir}: {e}")
    written: List[Path] = []
    if fmt == "csv":
        costs = out_dir / COSTS_FILE
        _write_csv(report.costs_frame(), costs)
        written.append(costs)
        for iteration in sorted(report.shifted_costs):
            path = out_dir / f"shifted_costs_{iteration}.csv"
            _write_csv(report.shifted_frame(iteration), path)
            written.append(path)
        for iteration in sorted(report.trajectories):
            path = out_dir / f"trajectory_{iteration}.csv"
            _write_csv(report.trajectories[iteration], path)
            written.append(path)
    elif fmt == "json":
        path = out_dir / REPORT_FILE
        _dump_json(
            path,
            {
                "summary": build_summary(report),
                "costs": report.costs_frame().to_dict(orient="records"),
                "shifted_costs": {
                    str(j): report.shifted_frame(j).to_dict(orient="records")
                    for j in sorted(report.shifted_costs)
                },
                "trajectories": {
                    str(j): report.trajectories[j].to_dict(orient="list")
                    for j in sorted(report.trajectories)
                },
            },
        )
        written.append(path)
    else:
        raise ArtifactError(f"unknown report format '{fmt}' (expected csv or json)")
    written.append(write_summary_json(report, out_dir))
    return written


def _typed(record: Dict[str, Any], annotations: Dict[str, Any]) -> Dict[str, Any]:
    converters = {int: int, float: float, bool: bool}
    return {key: converters[annotations[key]](record[key]) for key in annotations}


def load_report(run_dir: Path) -> Tuple[MetricsReport, Dict[str, Any]]:
    """Read a run directory back into a MetricsReport

    Returns:
        (report, manifest)

    Raises:
        ArtifactError: missing or unreadable files
    """
    run_dir = Path(run_dir)
    manifest = read_json(run_dir / MANIFEST_FILE)
    costs_path = run_dir / COSTS_FILE
    if not costs_path.exists():
        raise ArtifactError(f"missing run file {costs_path}")
    try:
        costs = pd.read_csv(costs_path)
    except (OSError, pd.errors.ParserError) as e:
        raise ArtifactError(f"failed to read {costs_path}: {e}")
    missing = [column for column in COST_COLUMNS if column not in costs.columns]
    if missing:
        raise ArtifactError(f"{costs_path} lacks columns {missing}")

    theta_columns = [c for c in costs.columns if c.startswith("theta_")]
    report = MetricsReport(
        scenario=manifest.get("scenario", ""),
        seed=int(manifest.get("seed", 0)),
        theta_labels=[c[len("theta_") :] for c in theta_columns],
    )
    annotations = IterationMetrics.__annotations__
    for record in costs.to_dict(orient="records"):
        row = _typed(record, annotations)
        report.rows.append(row)  # type: ignore[arg-type]
        report.theta[row["iteration"]] = [float(record[c]) for c in theta_columns]

    shifted_annotations = ShiftedCostRow.__annotations__
    for path in sorted(run_dir.iterdir()):
        match = _INDEXED.match(path.name)
        if match is None:
            continue
        kind, iteration = match.group(1), int(match.group(2))
        if kind == "shifted_costs":
            frame = pd.read_csv(path)
            report.shifted_costs[iteration] = [
                _typed(record, shifted_annotations)  # type: ignore[misc]
                for record in frame[SHIFTED_COLUMNS].to_dict(orient="records")
            ]
        elif kind == "trajectory":
            report.trajectories[iteration] = pd.read_csv(path)
        else:
            report.safe_set_summaries[iteration] = read_json(path)
    return report, manifest
