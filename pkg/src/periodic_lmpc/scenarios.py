"""Built-in benchmark scenarios.

- spring-mass: periodic LTV oscillator with switching constraints and set-point
- building: single-zone thermal model with comfort band and electricity price
- tiny: scalar plant small enough for grid and enumeration checks
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from lmpc_core.constants import RPI_ALPHA_TARGET
from lmpc_core.controller import LmpcConfig
from lmpc_core.disturbance import AtomKind, DisturbanceBasis, ThetaDomain, WaveformAtom
from lmpc_core.exceptions import InvalidArgumentError, ScenarioConfigurationError
from lmpc_core.model import PeriodicLtvModel, PolytopicConstraintSchedule, StageCostSchedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to run one benchmark.

    Attributes:
        name: scenario identifier
        model: nominal plant (x_s included)
        constraints: original (untightened) constraints
        costs: stage costs
        basis: disturbance atoms and residual box
        theta_domain: admissible coefficients
        Q_lqr: state weight of the tube gain
        R_lqr: input weight of the tube gain
        lmpc: controller defaults (horizon N)
        alpha_target: invariant-set contraction target
        relaxed_seed: accept a seed that covers only part of the theta box
    """

    name: str
    model: PeriodicLtvModel
    constraints: PolytopicConstraintSchedule
    costs: StageCostSchedule
    basis: DisturbanceBasis
    theta_domain: ThetaDomain
    Q_lqr: np.ndarray
    R_lqr: np.ndarray
    lmpc: LmpcConfig
    alpha_target: float = RPI_ALPHA_TARGET
    relaxed_seed: bool = False
    tracked_state: int = 0
    notes: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        T = self.model.period
        for name, period in (
            ("constraints", self.constraints.period),
            ("costs", self.costs.period),
            ("basis", self.basis.period),
        ):
            if period != T:
                raise InvalidArgumentError(name, f"period {period} differs from model period {T}")
        if self.constraints.F.shape[2] != self.model.state_dim:
            raise InvalidArgumentError("constraints", "state dimension differs from the model")
        if self.constraints.G.shape[2] != self.model.input_dim:
            raise InvalidArgumentError("constraints", "input dimension differs from the model")
        if self.costs.state_weight.shape[1] != self.model.state_dim:
            raise InvalidArgumentError("costs", "state dimension differs from the model")
        if self.basis.channels != self.model.disturbance_dim:
            raise InvalidArgumentError("basis", "channel count differs from the model")
        if self.theta_domain.size != self.basis.size:
            raise InvalidArgumentError("theta_domain", "size differs from the atom count")
        self.lmpc.validate(T)

    @property
    def period(self) -> int:
        return self.model.period

    def reference(self) -> np.ndarray:
        """Target of the tracked state component per t."""
        return self.costs.state_target[:, self.tracked_state].copy()

    def state_bounds(self, index: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Lower/upper bounds of one state component from its pure box rows (inf if none)."""
        index = self.tracked_state if index is None else index
        return state_bounds(self.constraints, index)

    def with_overrides(
        self,
        *,
        horizon: Optional[int] = None,
        x_s: Optional[Sequence[float]] = None,
        alpha_target: Optional[float] = None,
        Q_lqr: Optional[Sequence] = None,
        R_lqr: Optional[Sequence] = None,
        residual_scale: Optional[float] = None,
        theta_scale: Optional[float] = None,
        relaxed_seed: Optional[bool] = None,
    ) -> "ScenarioSpec":
        """Copy with selected parameters replaced.

        residual_scale shrinks the residual box and theta_scale the coefficient box
        about its center.
        """
        spec = self
        if horizon is not None:
            spec = replace(spec, lmpc=replace(spec.lmpc, horizon=int(horizon)))
        if x_s is not None:
            spec = replace(spec, model=spec.model.with_initial_state(np.asarray(x_s, dtype=float)))
        if alpha_target is not None:
            spec = replace(spec, alpha_target=float(alpha_target))
        if Q_lqr is not None:
            spec = replace(spec, Q_lqr=_weight(Q_lqr, spec.model.state_dim))
        if R_lqr is not None:
            spec = replace(spec, R_lqr=_weight(R_lqr, spec.model.input_dim))
        if residual_scale is not None:
            basis = spec.basis
            spec = replace(
                spec,
                basis=basis.with_residual(
                    residual_scale * basis.residual_lower, residual_scale * basis.residual_upper
                ),
            )
        if theta_scale is not None:
            spec = replace(spec, theta_domain=spec.theta_domain.scaled(theta_scale))
        if relaxed_seed is not None:
            spec = replace(spec, relaxed_seed=bool(relaxed_seed))
        return spec


def _weight(value, size: int) -> np.ndarray:
    """Scalar -> scaled identity, vector -> diagonal, matrix as is."""
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        return float(array) * np.eye(size)
    if array.ndim == 1:
        return np.diag(array)
    return array


def state_bounds(
    schedule: PolytopicConstraintSchedule, index: int
) -> Tuple[np.ndarray, np.ndarray]:
    T = schedule.period
    lower = np.full(T + 1, -np.inf)
    upper = np.full(T + 1, np.inf)
    for t in range(T + 1):
        F, G, f = schedule.F[t], schedule.G[t], schedule.f[t]
        for row in range(F.shape[0]):
            others = np.delete(F[row], index)
            coefficient = F[row, index]
            if coefficient == 0 or np.any(others) or np.any(G[row]):
                continue
            bound = f[row] / coefficient
            if coefficient > 0:
                upper[t] = min(upper[t], bound)
            else:
                lower[t] = max(lower[t], bound)
    return lower, upper


def _single_state_schedule(
    state_dim: int,
    index: int,
    state_lower: np.ndarray,
    state_upper: np.ndarray,
    input_lower: float,
    input_upper: float,
) -> PolytopicConstraintSchedule:
    """Bounds on one state component and a scalar input box."""
    horizon = state_lower.shape[0]
    F_t = np.zeros((4, state_dim))
    F_t[0, index], F_t[1, index] = 1.0, -1.0
    G_t = np.array([[0.0], [0.0], [1.0], [-1.0]])
    f = np.column_stack(
        [state_upper, -state_lower, np.full(horizon, input_upper), np.full(horizon, -input_lower)]
    )
    return PolytopicConstraintSchedule(
        F=np.broadcast_to(F_t, (horizon,) + F_t.shape),
        G=np.broadcast_to(G_t, (horizon,) + G_t.shape),
        f=f,
    )


SPRING_MASS_PERIOD = 50
SPRING_MASS_REFERENCE = 2.0


def spring_mass_scenario() -> ScenarioSpec:
    """Periodic oscillator tracking a set-point that flips sign at T/2."""
    T = SPRING_MASS_PERIOD
    t = np.arange(T + 1)
    A = np.zeros((T + 1, 2, 2))
    A[:, 0, 0] = 1.0
    A[:, 0, 1] = 0.1
    A[:, 1, 0] = 0.1 * (1.0 - np.sin(2.0 * np.pi * t / T))
    A[:, 1, 1] = 1.0
    B = np.array([[0.0], [0.1]])
    model = PeriodicLtvModel(period=T, A=A, B=B, C=np.eye(2), x_s=np.array([3.0, 0.0]))

    first_half = t < T / 2
    state_lower = np.where(first_half[:, None], [-1.0, -3.0], [-4.0, -3.0])
    state_upper = np.where(first_half[:, None], [4.0, 3.0], [1.0, 3.0])
    constraints = PolytopicConstraintSchedule.from_boxes(
        state_lower, state_upper, np.full((T + 1, 1), -10.0), np.full((T + 1, 1), 10.0)
    )

    target = np.zeros((T + 1, 2))
    target[:, 0] = np.where(first_half, SPRING_MASS_REFERENCE, -SPRING_MASS_REFERENCE)
    costs = StageCostSchedule(
        state_weight=np.tile([1.0, 0.0], (T + 1, 1)),
        state_target=target,
        input_weight=np.ones((T + 1, 1)),
        input_price=np.zeros((T + 1, 1)),
    )

    atoms = (
        WaveformAtom(AtomKind.CONSTANT, channel=0, label="a0.1"),
        WaveformAtom(AtomKind.CONSTANT, channel=1, label="a0.2"),
        WaveformAtom(AtomKind.SINE, channel=0, harmonic=1, label="a1.1"),
        WaveformAtom(AtomKind.SINE, channel=1, harmonic=1, label="a1.2"),
    )
    basis = DisturbanceBasis(
        period=T, channels=2, atoms=atoms, residual_lower=np.zeros(2), residual_upper=np.zeros(2)
    )
    return ScenarioSpec(
        name="spring-mass",
        model=model,
        constraints=constraints,
        costs=costs,
        basis=basis,
        theta_domain=ThetaDomain(lower=np.full(4, -0.1), upper=np.full(4, 0.1)),
        Q_lqr=np.eye(2),
        R_lqr=np.eye(1),
        lmpc=LmpcConfig(horizon=4),
        relaxed_seed=True,
        notes={
            "seed": "shift errors across the coefficient box exceed the constraint margins; "
            "the seed enforces the largest feasible fraction of them",
        },
    )


BUILDING_PERIOD = 144

BUILDING_A = np.array(
    [
        [0.8511, 0.0541, 0.0707],
        [0.1293, 0.8635, 0.0055],
        [0.0989, 0.0032, 0.7541],
    ]
)
BUILDING_B = np.array([[0.0035], [0.0003], [0.0002]])
BUILDING_C = 1e-3 * np.array(
    [
        [22.2170, 1.7912, 42.2123],
        [1.5376, 0.6944, 2.9214],
        [103.1813, 0.1032, 196.0444],
    ]
)
BUILDING_RESIDUAL_HALFWIDTH = np.array([3.0, 5.0, 2.0])
BUILDING_RESIDUAL_SCALE = 0.1


def building_comfort_band(t: np.ndarray, period: int = BUILDING_PERIOD):
    """Room temperature bounds: 22..26 for T/3 <= t <= 3T/4, else 18..30."""
    occupied = (3 * t >= period) & (4 * t <= 3 * period)
    return np.where(occupied, 22.0, 18.0), np.where(occupied, 26.0, 30.0)


def building_reference(t: np.ndarray, period: int = BUILDING_PERIOD) -> np.ndarray:
    """24 for T/3 <= t < 3T/4, else 20."""
    occupied = (3 * t >= period) & (4 * t < 3 * period)
    return np.where(occupied, 24.0, 20.0)


def building_price(t: np.ndarray, period: int = BUILDING_PERIOD) -> np.ndarray:
    """2 for 5T/12 <= t < 2T/3, else 1."""
    peak = (12 * t >= 5 * period) & (3 * t < 2 * period)
    return np.where(peak, 2.0, 1.0)


def building_scenario(residual_scale: float = BUILDING_RESIDUAL_SCALE) -> ScenarioSpec:
    """Single-zone building: room temperature x1 under internal gains, solar and outdoor air.

    The residual box is residual_scale * BUILDING_RESIDUAL_HALFWIDTH. With the full box
    the error set of x1 is wider than the occupied comfort band, so tightening leaves
    that band empty; residual_scale=1.0 reproduces that failure.
    """
    if residual_scale < 0:
        raise InvalidArgumentError("residual_scale", f"must be nonnegative, got {residual_scale}")
    T = BUILDING_PERIOD
    t = np.arange(T + 1)
    model = PeriodicLtvModel(
        period=T, A=BUILDING_A, B=BUILDING_B, C=BUILDING_C, x_s=np.array([19.0, 19.0, 15.0])
    )
    lower, upper = building_comfort_band(t, T)
    constraints = _single_state_schedule(3, 0, lower, upper, -30.0, 30.0)

    target = np.zeros((T + 1, 3))
    target[:, 0] = building_reference(t, T)
    costs = StageCostSchedule(
        state_weight=np.tile([1.0, 0.0, 0.0], (T + 1, 1)),
        state_target=target,
        input_weight=np.zeros((T + 1, 1)),
        input_price=building_price(t, T)[:, None],
    )

    atoms = (
        WaveformAtom(AtomKind.CONSTANT, channel=0, label="a1"),
        WaveformAtom(AtomKind.SINE, channel=0, harmonic=1, label="a2"),
        WaveformAtom(AtomKind.TRIANGLE, channel=1, window=(0.25, 0.5, 0.75), label="a3"),
        WaveformAtom(AtomKind.CONSTANT, channel=2, label="a4"),
        WaveformAtom(AtomKind.SQUARE, channel=2, window=(1.0 / 3.0, 0.75), label="a5"),
    )
    basis = DisturbanceBasis(
        period=T,
        channels=3,
        atoms=atoms,
        residual_lower=-residual_scale * BUILDING_RESIDUAL_HALFWIDTH,
        residual_upper=residual_scale * BUILDING_RESIDUAL_HALFWIDTH,
    )
    return ScenarioSpec(
        name="building",
        model=model,
        constraints=constraints,
        costs=costs,
        basis=basis,
        theta_domain=ThetaDomain(
            lower=np.array([10.0, -6.0, 0.0, 0.0, 6.0]),
            upper=np.array([14.0, -2.0, 16.0, 2.0, 7.0]),
        ),
        Q_lqr=10.0 * np.eye(3),
        R_lqr=np.eye(1),
        lmpc=LmpcConfig(horizon=16),
        relaxed_seed=True,
        notes={
            "comfort_band": "inclusive at t = 3T/4 while the reference switches back at 3T/4",
            "residual": f"residual box scaled by {residual_scale:g} of +-[3, 5, 2]",
            "seed": "x_s sits on the night band, so shifts from early starts may leave it",
        },
    )


TINY_PERIOD = 6


def tiny_scenario() -> ScenarioSpec:
    """x' = u + w with one square-wave coefficient; stages decouple, so grid checks are exact."""
    T = TINY_PERIOD
    t = np.arange(T + 1)
    model = PeriodicLtvModel(period=T, A=[[0.0]], B=[[1.0]], C=[[1.0]], x_s=np.array([1.5]))
    constraints = PolytopicConstraintSchedule.from_boxes(
        np.full((T + 1, 1), -2.0),
        np.full((T + 1, 1), 2.0),
        np.full((T + 1, 1), -1.5),
        np.full((T + 1, 1), 1.5),
    )
    costs = StageCostSchedule(
        state_weight=np.ones((T + 1, 1)),
        state_target=np.where(t < T / 2, 1.0, -1.0)[:, None],
        input_weight=np.ones((T + 1, 1)),
        input_price=np.zeros((T + 1, 1)),
    )
    basis = DisturbanceBasis(
        period=T,
        channels=1,
        atoms=(WaveformAtom(AtomKind.SQUARE, channel=0, window=(0.0, 0.5), label="a"),),
        residual_lower=np.array([-0.05]),
        residual_upper=np.array([0.05]),
    )
    return ScenarioSpec(
        name="tiny",
        model=model,
        constraints=constraints,
        costs=costs,
        basis=basis,
        theta_domain=ThetaDomain(lower=np.array([0.2]), upper=np.array([0.4])),
        Q_lqr=np.eye(1),
        R_lqr=np.eye(1),
        lmpc=LmpcConfig(horizon=2),
    )


SCENARIOS: Dict[str, Callable[[], ScenarioSpec]] = {
    "spring-mass": spring_mass_scenario,
    "building": building_scenario,
    "tiny": tiny_scenario,
}


def get_scenario(name: str) -> ScenarioSpec:
    """Build a registered scenario by name.

    Raises:
        ScenarioConfigurationError: unknown name or empty constraint sets
    """
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ScenarioConfigurationError(
            f"unknown scenario '{name}' (available: {', '.join(sorted(SCENARIOS))})"
        )
    spec = factory()
    spec.constraints.check_nonempty()
    logger.info("scenario %s: T=%d, N=%d", spec.name, spec.period, spec.lmpc.horizon)
    return spec
