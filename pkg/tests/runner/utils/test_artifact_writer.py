"""
Tests for the run directory writer and reader
"""

import json

import pandas as pd
import pytest

from lmpc_core.exceptions import ArtifactError
from periodic_lmpc.runner.report import MetricsReport
from periodic_lmpc.runner.utils.artifact_writer import (
    RunArtifactWriter,
    emit_report,
    load_report,
    read_json,
)
from periodic_lmpc.types import RunManifest, ShiftedCostRow, TubeSummary
from tests.runner.utils.test_summary_generator import make_row


def _manifest() -> RunManifest:
    return RunManifest(
        status="running",
        scenario="tiny",
        seed=7,
        iterations=2,
        completed_iterations=0,
        config={},
        tube={},
        seed_trajectory={},
        files=[],
        error=None,
        version="0.0.0",
    )


def _report() -> MetricsReport:
    report = MetricsReport(scenario="tiny", seed=7, theta_labels=["a"])
    for j in (1, 2):
        report.rows.append(make_row(j, 0.1 / j))
        report.theta[j] = [0.2 + 0.1 * j]
        report.trajectories[j] = pd.DataFrame({"t": [0, 1], "nominal_cost": [1.0, 2.0]})
        report.safe_set_summaries[j] = [{"k": 0, "entries": 1, "min_cost": 3.0, "max_cost": 3.0}]
    report.shifted_costs[2] = [
        ShiftedCostRow(
            source_iteration=0, shifted_cost=12.0, feasible=True, closed_loop_cost=10.05
        ),
        ShiftedCostRow(
            source_iteration=1, shifted_cost=11.0, feasible=False, closed_loop_cost=10.05
        ),
    ]
    return report


class TestRunArtifactWriter:
    def test_complete_run(self, temp_dir, tiny_tube):
        report = _report()
        writer = RunArtifactWriter(temp_dir / "run")
        writer.start(_manifest())

        summary = TubeSummary(
            horizon=1,
            alpha=0.0,
            spectral_radius=0.0,
            degenerate_steps=[],
            digest=tiny_tube.digest(),
        )
        digest = writer.write_tube(tiny_tube, summary)
        writer.set_seed_summary({"verified": True})
        for j in (1, 2):
            writer.write_iteration(report, j)
        writer.finish(report)

        manifest = read_json(temp_dir / "run" / "manifest.json")
        assert manifest["status"] == "complete"
        assert manifest["completed_iterations"] == 2
        assert manifest["tube"] == {"file": "tube.json", **summary}
        assert digest == summary["digest"]
        assert manifest["seed_trajectory"] == {"verified": True}
        assert "shifted_costs_2.csv" in manifest["files"]
        assert "shifted_costs_1.csv" not in manifest["files"]
        for name in manifest["files"]:
            assert (temp_dir / "run" / name).exists()

    def test_failed_run_keeps_partial_metrics(self, temp_dir):
        report = _report()
        writer = RunArtifactWriter(temp_dir)
        writer.start(_manifest())
        writer.write_iteration(report, 1)

        writer.fail(report, RuntimeError("solver gave up"))

        manifest = read_json(temp_dir / "manifest.json")
        assert manifest["status"] == "incomplete"
        assert manifest["error"] == "RuntimeError: solver gave up"
        assert (temp_dir / "costs.csv").exists()

    def test_uncreatable_directory(self, temp_dir):
        blocker = temp_dir / "file"
        blocker.write_text("", encoding="utf-8")

        with pytest.raises(ArtifactError, match="cannot create run directory"):
            RunArtifactWriter(blocker / "run")


class TestLoadReport:
    def test_reads_back_what_was_written(self, temp_dir, tiny_tube):
        report = _report()
        writer = RunArtifactWriter(temp_dir)
        writer.start(_manifest())
        writer.write_tube(tiny_tube)
        for j in (1, 2):
            writer.write_iteration(report, j)
        writer.finish(report)

        loaded, manifest = load_report(temp_dir)

        assert manifest["scenario"] == "tiny"
        for loaded_row, row in zip(loaded.rows, report.rows):
            assert loaded_row == pytest.approx(row)
        assert loaded.theta[2] == pytest.approx(report.theta[2])
        assert [row["feasible"] for row in loaded.shifted_costs[2]] == [True, False]
        assert loaded.shifted_costs[2][1]["shifted_cost"] == pytest.approx(11.0)
        assert loaded.safe_set_summaries == report.safe_set_summaries
        assert list(loaded.trajectories) == [1, 2]

    def test_missing_costs(self, temp_dir):
        (temp_dir / "manifest.json").write_text(json.dumps(_manifest()), encoding="utf-8")

        with pytest.raises(ArtifactError, match="costs.csv"):
            load_report(temp_dir)

    def test_missing_columns(self, temp_dir):
        (temp_dir / "manifest.json").write_text(json.dumps(_manifest()), encoding="utf-8")
        pd.DataFrame({"iteration": [1]}).to_csv(temp_dir / "costs.csv", index=False)

        with pytest.raises(ArtifactError, match="lacks columns"):
            load_report(temp_dir)

    def test_missing_manifest(self, temp_dir):
        with pytest.raises(ArtifactError, match="missing run file"):
            load_report(temp_dir)


class TestEmitReport:
    def test_csv(self, temp_dir):
        written = emit_report(_report(), temp_dir, "csv")

        names = sorted(path.name for path in written)
        assert names == [
            "costs.csv",
            "shifted_costs_2.csv",
            "summary.json",
            "trajectory_1.csv",
            "trajectory_2.csv",
        ]
        costs = pd.read_csv(temp_dir / "costs.csv")
        assert list(costs["theta_a"]) == pytest.approx([0.3, 0.4])

    def test_json(self, temp_dir):
        written = emit_report(_report(), temp_dir, "json")

        document = read_json(temp_dir / "report.json")
        assert {path.name for path in written} == {"report.json", "summary.json"}
        assert document["summary"]["iterations"] == 2
        assert len(document["shifted_costs"]["2"]) == 2

    def test_unknown_format(self, temp_dir):
        with pytest.raises(ArtifactError, match="unknown report format"):
            emit_report(_report(), temp_dir, "xml")
