"""Convex QP interface backed by osqp.

Problems are posed as

    minimize    1/2 x' P x + q' x + constant
    subject to  A_ineq x <= b_ineq,  A_eq x = b_eq

and handed to osqp in its two-sided form l <= A x <= u.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
import osqp
from scipy import sparse

from lmpc_core.constants import QP_EPS_ABS, QP_EPS_REL, QP_INACCURATE_FEASIBILITY, QP_MAX_ITER
from lmpc_core.exceptions import InvalidArgumentError, QpSolverError

logger = logging.getLogger(__name__)

_OPTIMAL = {"solved"}
_INACCURATE = {"solved inaccurate", "maximum iterations reached"}
_INFEASIBLE = {"primal infeasible", "primal infeasible inaccurate"}


class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpSettings:
    eps_abs: float = QP_EPS_ABS
    eps_rel: float = QP_EPS_REL
    max_iter: int = QP_MAX_ITER
    polish: bool = True

    def as_osqp(self) -> Dict[str, Any]:
        """Keyword settings for osqp >= 1.0 setup."""
        return {
            "eps_abs": self.eps_abs,
            "eps_rel": self.eps_rel,
            "max_iter": self.max_iter,
            "polishing": self.polish,
            "warm_starting": True,
            "verbose": False,
        }


def _as_csc(matrix, shape) -> sparse.csc_matrix:
    if matrix is None:
        return sparse.csc_matrix(shape)
    result = sparse.csc_matrix(matrix, dtype=float)
    if result.shape != shape:
        raise InvalidArgumentError("matrix", f"expected shape {shape}, got {result.shape}")
    return result


@dataclass
class QpProblem:
    P: Any
    q: np.ndarray
    A_ineq: Any = None
    b_ineq: Optional[np.ndarray] = None
    A_eq: Any = None
    b_eq: Optional[np.ndarray] = None
    constant: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.shape[0]
        self.b_ineq = np.zeros(0) if self.b_ineq is None else np.asarray(self.b_ineq, dtype=float)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float)
        P = _as_csc(self.P, (n, n))
        self.P = ((P + P.T) * 0.5).tocsc()
        self.A_ineq = _as_csc(self.A_ineq, (self.b_ineq.shape[0], n))
        self.A_eq = _as_csc(self.A_eq, (self.b_eq.shape[0], n))
        for name in ("q", "b_ineq", "b_eq"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidArgumentError(name, "contains non-finite values")

    @property
    def num_variables(self) -> int:
        return self.q.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x + self.constant)

    def max_violation(self, x: np.ndarray) -> float:
        violation = 0.0
        if self.b_ineq.size:
            violation = max(violation, float(np.max(self.A_ineq @ x - self.b_ineq)))
        if self.b_eq.size:
            violation = max(violation, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        return violation

    def stacked_constraints(self):
        """(A, l, u) with equality rows first."""
        A = sparse.vstack([self.A_eq, self.A_ineq], format="csc")
        lower = np.concatenate([self.b_eq, np.full(self.b_ineq.shape[0], -np.inf)])
        upper = np.concatenate([self.b_eq, self.b_ineq])
        return A, lower, upper


@dataclass(frozen=True)
class QpSolution:
    status: QpStatus
    value: float = np.inf
    x: Optional[np.ndarray] = None
    iterations: int = 0
    info: Dict[str, Any] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


class QpWorkspace:
    """osqp workspace reused across solves that only change constraint bounds.

    Equality rows come first in the stacked constraint matrix, so
    ``set_equality_rows`` addresses rows by their position in b_eq.
    """

    def __init__(self, problem: QpProblem, settings: Optional[QpSettings] = None):
        self.problem = problem
        self.settings = settings or QpSettings()
        A, self.lower, self.upper = problem.stacked_constraints()
        if A.shape[0] == 0:
            # osqp needs at least one constraint row
            A = sparse.csc_matrix((1, problem.num_variables))
            self.lower, self.upper = np.array([-np.inf]), np.array([np.inf])
        self.num_eq = problem.b_eq.shape[0]
        self._solver = osqp.OSQP()
        self._solver.setup(
            P=sparse.triu(problem.P, format="csc"),
            q=problem.q,
            A=A,
            l=self.lower,
            u=self.upper,
            **self.settings.as_osqp(),
        )
        self._lower_eq = problem.b_eq.copy()
        self._upper_eq = problem.b_eq.copy()

    def set_equality_rows(self, rows: slice, values: Optional[np.ndarray]) -> None:
        """Pin rows of A_eq x to values, or release them when values is None."""
        if values is None:
            self._lower_eq[rows] = -np.inf
            self._upper_eq[rows] = np.inf
        else:
            self._lower_eq[rows] = values
            self._upper_eq[rows] = values
        self.lower[: self.num_eq] = self._lower_eq
        self.upper[: self.num_eq] = self._upper_eq
        self._solver.update(l=self.lower, u=self.upper)

    def solve(self, context: Optional[Dict[str, Any]] = None) -> QpSolution:
        result = self._solver.solve()
        status = result.info.status
        context = dict(context or {})
        if status in _INFEASIBLE:
            return QpSolution(status=QpStatus.INFEASIBLE, iterations=result.info.iter)
        if status not in _OPTIMAL | _INACCURATE or result.x is None:
            raise QpSolverError(f"osqp returned '{status}'", context)

        x = np.asarray(result.x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise QpSolverError(f"osqp returned '{status}' without a finite primal", context)
        violation = self._violation(x)
        if status in _INACCURATE:
            if violation > QP_INACCURATE_FEASIBILITY:
                raise QpSolverError(
                    f"osqp returned '{status}' with residual {violation:.2e}", context
                )
            logger.warning(
                "accepting '%s' QP solution (residual %.2e) %s", status, violation, context
            )
        return QpSolution(
            status=QpStatus.OPTIMAL,
            value=self.problem.objective(x),
            x=x,
            iterations=result.info.iter,
            info={"status": status, "violation": violation},
        )

    def _violation(self, x: np.ndarray) -> float:
        problem = self.problem
        violation = 0.0
        if problem.b_ineq.size:
            violation = max(violation, float(np.max(problem.A_ineq @ x - problem.b_ineq)))
        if self.num_eq:
            residual = problem.A_eq @ x
            pinned = np.isfinite(self._lower_eq)
            if np.any(pinned):
                violation = max(
                    violation, float(np.max(np.abs(residual[pinned] - self._lower_eq[pinned])))
                )
        return violation


def solve_qp(problem: QpProblem, settings: Optional[QpSettings] = None) -> QpSolution:
    """Solve a convex QP once.

    Returns:
        QpSolution with status OPTIMAL (value, x) or INFEASIBLE

    Raises:
        QpSolverError: numerical failure
    """
    return QpWorkspace(problem, settings).solve()
