"""Exception hierarchy for the LMPC library."""

from typing import Any, Dict, Optional, Sequence


class LmpcError(Exception):
    """Base exception for every failure raised by the library."""

    pass


class InvalidArgumentError(LmpcError):
    """Operand with the wrong shape, length or value."""

    def __init__(self, operand: str, message: str):
        super().__init__(f"{operand}: {message}")
        self.operand = operand


class EmptyConstraintSetError(LmpcError):
    """A constraint polytope has no feasible (x, u) pair at some time step."""

    def __init__(self, time_steps: Sequence[int], message: str = ""):
        steps = ", ".join(str(t) for t in time_steps)
        super().__init__(message or f"empty constraint set at t = {steps}")
        self.time_steps = list(time_steps)


class StabilizabilityError(LmpcError):
    """Periodic Riccati recursion did not converge or the closed loop is unstable."""

    pass


class RpiApproximationError(LmpcError):
    """The invariant-set horizon exceeded its cap."""

    pass


class InfeasibleTighteningError(EmptyConstraintSetError):
    """Tightened constraints are empty at one or more time steps."""

    pass


class QpSolverError(LmpcError):
    """The QP solver failed numerically."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        self.context = dict(context or {})
        if self.context:
            details = ", ".join(f"{key}={value}" for key, value in self.context.items())
            message = f"{message} ({details})"
        super().__init__(message)


class PolicyError(LmpcError):
    """A rollout policy raised while computing the input at time t."""

    def __init__(self, t: int, cause: BaseException):
        super().__init__(f"policy failed at t={t}: {cause}")
        self.t = t
        self.cause = cause


class ScenarioConfigurationError(LmpcError):
    """A scenario cannot be built or its full-horizon problem is infeasible."""

    pass


class TheoremViolationError(LmpcError):
    """A feasibility or performance guarantee was observed to fail."""

    pass


class SafeSetError(TheoremViolationError):
    """Safe set is empty at some level or the iteration-0 seed does not cover the theta domain."""

    pass


class RecursiveFeasibilityError(TheoremViolationError):
    """Every terminal candidate of the finite-horizon problem was infeasible."""

    def __init__(self, t: int, iteration: Optional[int], candidates: int):
        super().__init__(
            f"no feasible terminal candidate at t={t} "
            f"(iteration={iteration}, candidates={candidates})"
        )
        self.t = t
        self.iteration = iteration
        self.candidates = candidates


class ConstraintViolationError(TheoremViolationError):
    """The true closed-loop state violated the untightened constraints."""

    def __init__(self, t: int, violation: float, iteration: Optional[int] = None):
        super().__init__(
            f"constraint violated at t={t} by {violation:.3e} (iteration={iteration})"
        )
        self.t = t
        self.violation = violation
        self.iteration = iteration


class InvariantViolationError(TheoremViolationError):
    """A property check over recorded data failed."""

    pass


class ConfigError(LmpcError):
    """An experiment configuration could not be read or validated."""

    pass


class ArtifactError(LmpcError):
    """A run artifact is missing, unwritable or does not match its recorded digest."""

    pass
