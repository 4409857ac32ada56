"""Trajectory data classes"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class Trajectory:
    """One period of states, inputs, disturbances and stage costs

    Attributes:
        states: x_0..x_T, shape (T+1, n)
        inputs: u_0..u_T, shape (T+1, m)
        disturbances: w_0..w_T, shape (T+1, d)
        stage_costs: l_t(x_t, u_t), shape (T+1,)
        iteration: iteration index the trajectory belongs to, if any
        theta: disturbance coefficients the trajectory was generated with
        violations: time indices where constraints were violated
    """

    states: np.ndarray
    inputs: np.ndarray
    disturbances: np.ndarray
    stage_costs: np.ndarray
    iteration: Optional[int] = None
    theta: Optional[np.ndarray] = None
    violations: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def period(self) -> int:
        return self.states.shape[0] - 1

    @property
    def cumulative_cost(self) -> float:
        return float(np.sum(self.stage_costs))

    @property
    def feasible(self) -> bool:
        return not self.violations

    def cost_to_go(self) -> np.ndarray:
        """J_t = sum_{k >= t} l_k for t = 0..T"""
        return np.cumsum(self.stage_costs[::-1])[::-1].copy()

    def with_iteration(self, iteration: int) -> "Trajectory":
        return replace(self, iteration=iteration)

    def to_frame(self, prefix: str = "") -> pd.DataFrame:
        """Columns: t, {prefix}x1.., {prefix}u1.., {prefix}w1.., {prefix}cost"""
        columns: Dict[str, Any] = {"t": np.arange(self.period + 1)}
        for name, values in (("x", self.states), ("u", self.inputs), ("w", self.disturbances)):
            for i in range(values.shape[1]):
                columns[f"{prefix}{name}{i + 1}"] = values[:, i]
        columns[f"{prefix}cost"] = self.stage_costs
        return pd.DataFrame(columns)

    def to_csv(self, path: Path) -> None:
        self.to_frame().to_csv(path, index=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "theta": None if self.theta is None else self.theta.tolist(),
            "states": self.states.tolist(),
            "inputs": self.inputs.tolist(),
            "disturbances": self.disturbances.tolist(),
            "stage_costs": self.stage_costs.tolist(),
            "cumulative_cost": self.cumulative_cost,
            "violations": list(self.violations),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Trajectory":
        theta: Optional[List[float]] = data.get("theta")
        return cls(
            states=np.asarray(data["states"], dtype=float),
            inputs=np.asarray(data["inputs"], dtype=float),
            disturbances=np.asarray(data["disturbances"], dtype=float),
            stage_costs=np.asarray(data["stage_costs"], dtype=float),
            iteration=data.get("iteration"),
            theta=None if theta is None else np.asarray(theta, dtype=float),
            violations=tuple(data.get("violations", ())),
        )
