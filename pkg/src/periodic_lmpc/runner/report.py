"""Metric series collected over an experiment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd

from ..types import IterationMetrics, ShiftedCostRow

COST_COLUMNS = list(IterationMetrics.__annotations__)
SHIFTED_COLUMNS = list(ShiftedCostRow.__annotations__)

# iterations from which the cost difference is expected to have settled
SETTLED_FROM_ITERATION = 10


@dataclass
class MetricsReport:
    """Per-iteration rows plus the optional per-iteration tables.

    Attributes:
        scenario: scenario name
        seed: master seed
        rows: one IterationMetrics per completed iteration
        theta: coefficients per iteration
        shifted_costs: shift-from-t=0 tables for selected iterations
        trajectories: per-step trajectory tables
        safe_set_summaries: per-level counts and Q range per iteration
        safe_set_dumps: full safe-set contents (only when requested)
        theta_labels: atom labels, used as theta column names
    """

    scenario: str
    seed: int
    theta_labels: List[str]
    rows: List[IterationMetrics] = field(default_factory=list)
    theta: Dict[int, List[float]] = field(default_factory=dict)
    shifted_costs: Dict[int, List[ShiftedCostRow]] = field(default_factory=dict)
    trajectories: Dict[int, pd.DataFrame] = field(default_factory=dict)
    safe_set_summaries: Dict[int, List[Dict[str, Any]]] = field(default_factory=dict)
    safe_set_dumps: Dict[int, Dict[str, Any]] = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.rows)

    def costs_frame(self) -> pd.DataFrame:
        """costs.csv: metric columns followed by one column per theta coefficient"""
        frame = pd.DataFrame(self.rows, columns=COST_COLUMNS)
        for index, label in enumerate(self.theta_labels):
            frame[f"theta_{label}"] = [self.theta[row["iteration"]][index] for row in self.rows]
        return frame

    def shifted_frame(self, iteration: int) -> pd.DataFrame:
        return pd.DataFrame(self.shifted_costs[iteration], columns=SHIFTED_COLUMNS)

    def max_difference(self, from_iteration: int = SETTLED_FROM_ITERATION) -> Optional[float]:
        """max |J^j - J*| over j >= from_iteration, None if no such iteration ran"""
        late = [abs(row["difference"]) for row in self.rows if row["iteration"] >= from_iteration]
        return max(late) if late else None
