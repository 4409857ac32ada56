"""Type definitions for run outputs

TypedDict structures for the metric rows, manifest and file listings
that the runner writes and the verifier reads back.
"""

from typing import Dict, List, Literal, Optional, TypedDict


class IterationMetrics(TypedDict):
    """One row of costs.csv

    Attributes:
        iteration: iteration index j (1-based; 0 is the seed)
        optimal_cost: J* of the full-horizon problem for theta^j
        lmpc_cost: closed-loop cumulative cost of the nominal trajectory
        true_cost: cumulative cost of the true (tube-corrected) trajectory
        difference: lmpc_cost - optimal_cost
        lmpc_value_t0: J_LMPC at t = 0
        safe_set_size: entries over all levels
        feasible_shifts: feasible (iteration, start) pairs in the safe set
        candidates: terminal candidates over all steps
        solved: candidate QPs solved
        infeasible: candidate QPs reported infeasible
        pruned: candidates skipped by the lower bound
        chain_checks: cost-bound inequalities evaluated
        descent_checks: per-step descent inequalities evaluated
        candidate_checks: successor plans verified feasible
        violations: failed checks (always 0 in a complete run)
    """

    iteration: int
    optimal_cost: float
    lmpc_cost: float
    true_cost: float
    difference: float
    lmpc_value_t0: float
    safe_set_size: int
    feasible_shifts: int
    candidates: int
    solved: int
    infeasible: int
    pruned: int
    chain_checks: int
    descent_checks: int
    candidate_checks: int
    violations: int


class ShiftedCostRow(TypedDict):
    """Cost of shifting one stored iteration to theta^j from t = 0"""

    source_iteration: int
    shifted_cost: float
    feasible: bool
    closed_loop_cost: float


class TubeSummary(TypedDict):
    horizon: int
    alpha: float
    spectral_radius: float
    degenerate_steps: List[int]
    digest: str


class RunManifest(TypedDict):
    """Contents of manifest.json

    Attributes:
        status: "running" while the run is in progress, then "complete" or "incomplete"
        scenario: scenario name
        seed: master seed
        iterations: requested iteration count
        completed_iterations: iterations whose outputs were written
        config: echo of the validated configuration
        tube: tube artifact file and digest
        seed_trajectory: scale and vertex coverage of the iteration-0 seed
        files: relative paths of every file written
        error: failure message of an incomplete run
        version: package version
    """

    status: Literal["running", "complete", "incomplete"]
    scenario: str
    seed: int
    iterations: int
    completed_iterations: int
    config: Dict[str, object]
    tube: Dict[str, object]
    seed_trajectory: Dict[str, object]
    files: List[str]
    error: Optional[str]
    version: str


class SweepEntry(TypedDict):
    seed: int
    run_dir: str
    status: str
    max_late_difference: Optional[float]
    error: Optional[str]
