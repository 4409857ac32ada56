"""Summary generation for experiment reports"""

from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List

from lmpc_core.exceptions import ArtifactError

if TYPE_CHECKING:
    from ..report import MetricsReport

COUNTER_FIELDS = (
    "candidates",
    "solved",
    "infeasible",
    "pruned",
    "chain_checks",
    "descent_checks",
    "candidate_checks",
    "violations",
)


def build_summary(report: MetricsReport) -> Dict[str, Any]:
    """Summary document: cost series, settled difference and counter totals

    Args:
        report: metrics of a (possibly partial) run

    Returns:
        JSON-compatible dictionary
    """
    rows = report.rows
    shifted: Any = sorted(report.shifted_costs) if report.shifted_costs else "omitted"
    return {
        "scenario": report.scenario,
        "seed": report.seed,
        "iterations": report.iterations,
        "costs": [
            {
                "iteration": row["iteration"],
                "optimal_cost": row["optimal_cost"],
                "lmpc_cost": row["lmpc_cost"],
                "difference": row["difference"],
            }
            for row in rows
        ],
        "final_difference": rows[-1]["difference"] if rows else None,
        "max_settled_difference": report.max_difference(),
        "totals": {name: int(sum(row[name] for row in rows)) for name in COUNTER_FIELDS},
        "shifted_cost_iterations": shifted,
    }


def write_summary_json(report: MetricsReport, base_dir: Path) -> Path:
    """Write summary.json

    Returns:
        Path to summary file

    Raises:
        ArtifactError: the file could not be written
    """
    summary_path = Path(base_dir) / "summary.json"
    try:
        summary_path.write_text(
            json.dumps(build_summary(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as e:
        raise ArtifactError(f"failed to write {summary_path}: {e}")
    return summary_path


def format_summary(summary: Dict[str, Any]) -> str:
    """Human-readable table of a summary document"""
    lines: List[str] = [
        f"Scenario: {summary['scenario']} (seed {summary['seed']})",
        f"Iterations: {summary['iterations']}",
        "",
        f"{'j':>4} {'J*':>14} {'J_LMPC':>14} {'difference':>12}",
    ]
    for row in summary["costs"]:
        lines.append(
            f"{row['iteration']:>4} {row['optimal_cost']:>14.6f} "
            f"{row['lmpc_cost']:>14.6f} {row['difference']:>12.3e}"
        )
    settled = summary["max_settled_difference"]
    lines.append("")
    lines.append(
        "Max difference (j >= 10): " + ("n/a" if settled is None else f"{settled:.6f}")
    )
    totals = summary["totals"]
    lines.append(
        f"Candidates: {totals['candidates']} "
        f"(solved {totals['solved']}, infeasible {totals['infeasible']}, "
        f"pruned {totals['pruned']})"
    )
    return "\n".join(lines)
