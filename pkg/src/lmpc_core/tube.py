"""Robust tube machinery: periodic LQR gains, invariant error sets and constraint tightening.

Error sets are zonotopes stored as generator matrices; support functions are
sums of absolute projections of the generators, so no vertex enumeration is
needed.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from lmpc_core.constants import (
    CONSTRAINT_MARGIN,
    INVARIANCE_SLACK,
    RICCATI_MAX_PERIODS,
    RICCATI_TOLERANCE,
    RPI_ALPHA_TARGET,
    RPI_BASIS_CONDITION,
    RPI_FLATNESS,
    RPI_MAX_HORIZON,
    RPI_REGULARIZATION,
)
from lmpc_core.exceptions import (
    InfeasibleTighteningError,
    InvalidArgumentError,
    RpiApproximationError,
    StabilizabilityError,
)
from lmpc_core.model import PeriodicLtvModel, PolytopicConstraintSchedule, chebyshev_slack

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeedbackGainSchedule:
    """u = v + K_t (x - z); K_T equals K_0."""

    gains: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @property
    def period(self) -> int:
        return self.gains.shape[0] - 1

    def closed_loop(self, model: PeriodicLtvModel) -> np.ndarray:
        """Phi_t = A_t + B_t K_t, shape (T+1, n, n)."""
        return model.A + np.einsum("tij,tjk->tik", model.B, self.gains)

    def monodromy(self, model: PeriodicLtvModel) -> np.ndarray:
        phi = self.closed_loop(model)
        product = np.eye(model.state_dim)
        for t in range(model.period):
            product = phi[t] @ product
        return product

    def spectral_radius(self, model: PeriodicLtvModel) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.monodromy(model)))))


def lqr_gains(
    model: PeriodicLtvModel,
    Q,
    R,
    tolerance: float = RICCATI_TOLERANCE,
    max_periods: int = RICCATI_MAX_PERIODS,
) -> FeedbackGainSchedule:
    """Periodic LQR gains from the backward Riccati recursion over repeated periods.

    Raises:
        StabilizabilityError: no convergence within max_periods, or unstable monodromy
    """
    n, m, T = model.state_dim, model.input_dim, model.period
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape != (n, n):
        raise InvalidArgumentError("Q", f"expected shape {(n, n)}, got {Q.shape}")
    if R.shape != (m, m):
        raise InvalidArgumentError("R", f"expected shape {(m, m)}, got {R.shape}")

    phases = 1 if model.is_time_invariant() else T
    gains = np.zeros((phases, m, n))
    P = Q.copy()
    for sweep in range(1, max_periods + 1):
        P_start = P.copy()
        for t in reversed(range(T)):
            phase = t % phases
            A, B = model.A[phase], model.B[phase]
            BtP = B.T @ P
            gains[phase] = -np.linalg.solve(R + BtP @ B, BtP @ A)
            P = Q + A.T @ P @ (A + B @ gains[phase])
            P = 0.5 * (P + P.T)
        if not np.all(np.isfinite(P)):
            raise StabilizabilityError("Riccati recursion diverged")
        if np.max(np.abs(P - P_start)) < tolerance:
            logger.debug("Riccati recursion converged after %d periods", sweep)
            break
    else:
        raise StabilizabilityError(f"Riccati recursion did not converge in {max_periods} periods")

    full = np.zeros((T + 1, m, n))
    for t in range(T + 1):
        full[t] = gains[t % phases]
    schedule = FeedbackGainSchedule(gains=full, Q=Q, R=R)
    radius = schedule.spectral_radius(model)
    if radius >= 1.0:
        raise StabilizabilityError(f"closed-loop monodromy spectral radius {radius:.6f} >= 1")
    logger.info("LQR gains ready (monodromy spectral radius %.4f)", radius)
    return schedule


def facet_normals(generators: np.ndarray) -> np.ndarray:
    """Unit facet normals (one per +/- pair) of the zonotope spanned by the columns."""
    n = generators.shape[0]
    norms = np.linalg.norm(generators, axis=0)
    gens = generators[:, norms > 1e-14 * max(1.0, norms.max(initial=0.0))]
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        normals = np.stack([-gens[1], gens[0]], axis=1)
    elif n == 3:
        i, j = np.triu_indices(gens.shape[1], k=1)
        normals = np.cross(gens[:, i].T, gens[:, j].T)
    else:
        rows = []
        for subset in combinations(range(gens.shape[1]), n - 1):
            block = gens[:, subset]
            u, s, _ = np.linalg.svd(block, full_matrices=True)
            if s[-1] > 1e-12 * s[0]:
                rows.append(u[:, -1])
        normals = np.array(rows).reshape(-1, n)
    lengths = np.linalg.norm(normals, axis=1)
    normals = normals[lengths > 1e-12 * max(1.0, lengths.max(initial=0.0))]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    pivot = np.argmax(np.abs(normals) > 1e-12, axis=1)
    signs = np.sign(normals[np.arange(normals.shape[0]), pivot])
    normals = normals * signs[:, None]
    return np.unique(np.round(normals, 12), axis=0)


def zonotope_support(generators: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """h(d) = sum_k |d' g_k| for each row d."""
    directions = np.atleast_2d(directions)
    if generators.shape[1] == 0:
        return np.zeros(directions.shape[0])
    return np.abs(directions @ generators).sum(axis=1)


@dataclass(frozen=True)
class RpiSet:
    """Outer approximation of the minimal robust positive invariant error set.

    Attributes:
        generators: one (n, g_t) generator matrix per phase, inflation already applied
        alpha: contraction factor reached by the approximation
        horizon: number of closed-loop steps summed (s)
        scale: inflation factor 1/(1 - alpha)
    """

    generators: Tuple[np.ndarray, ...]
    alpha: float = 0.0
    horizon: int = 0
    scale: float = 1.0
    _normals: Dict[int, np.ndarray] = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def zero(cls, state_dim: int) -> "RpiSet":
        return cls(generators=(np.zeros((state_dim, 0)),))

    @property
    def phases(self) -> int:
        return len(self.generators)

    @property
    def state_dim(self) -> int:
        return self.generators[0].shape[0]

    @property
    def is_zero(self) -> bool:
        return all(g.shape[1] == 0 or not np.any(g) for g in self.generators)

    def phase(self, t: int) -> int:
        return t % self.phases

    def support(self, directions, phase: Optional[int] = None) -> np.ndarray:
        """Support function per direction row; phase None takes the worst phase."""
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        if phase is None:
            return np.max([zonotope_support(g, directions) for g in self.generators], axis=0)
        return zonotope_support(self.generators[phase % self.phases], directions)

    def facet_normals(self, phase: int = 0) -> np.ndarray:
        phase %= self.phases
        if phase not in self._normals:
            self._normals[phase] = facet_normals(self.generators[phase])
        return self._normals[phase]

    def contains(self, point, phase: int = 0, slack: float = INVARIANCE_SLACK) -> bool:
        point = np.asarray(point, dtype=float)
        if self.is_zero:
            return bool(np.max(np.abs(point), initial=0.0) <= slack)
        normals = self.facet_normals(phase)
        bound = self.support(normals, phase)
        return bool(np.all(np.abs(normals @ point) <= (1.0 + slack) * bound + 1e-14))

    def sample(
        self, rng: np.random.Generator, count: int, phase: int = 0, extreme: bool = False
    ) -> np.ndarray:
        """Random points G @ lam, lam uniform in [-1, 1]^g (or sign vectors if extreme)."""
        gens = self.generators[phase % self.phases]
        if extreme:
            weights = rng.choice([-1.0, 1.0], size=(count, gens.shape[1]))
        else:
            weights = rng.uniform(-1.0, 1.0, size=(count, gens.shape[1]))
        return weights @ gens.T

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "horizon": self.horizon,
            "scale": self.scale,
            "generators": [g.tolist() for g in self.generators],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RpiSet":
        generators = tuple(
            np.asarray(g, dtype=float).reshape(len(g), -1) for g in data["generators"]
        )
        return cls(
            generators=generators,
            alpha=float(data["alpha"]),
            horizon=int(data["horizon"]),
            scale=float(data["scale"]),
        )


def _regularize(generators: np.ndarray) -> np.ndarray:
    n = generators.shape[0]
    if np.linalg.matrix_rank(generators) == n:
        return generators
    size = RPI_REGULARIZATION * max(1.0, float(np.max(np.linalg.norm(generators, axis=0))))
    logger.debug("disturbance generators rank-deficient; adding %.1e box", size)
    return np.hstack([generators, size * np.eye(n)])


def _is_flat(generators: np.ndarray) -> bool:
    n = generators.shape[0]
    if generators.shape[1] < n:
        return True
    singular = np.linalg.svd(generators, compute_uv=False)
    return bool(singular[n - 1] < RPI_FLATNESS * singular[0])


def _real_eigenbasis(matrix: np.ndarray) -> Optional[Tuple[np.ndarray, List[Tuple[int, ...]]]]:
    """Columns Re v, Im v for complex pairs and v for real eigenvalues.

    Returns:
        (basis, groups) where groups index the columns of each eigenvalue, or None
        when the basis is numerically singular
    """
    values, vectors = np.linalg.eig(matrix)
    columns: List[np.ndarray] = []
    groups: List[Tuple[int, ...]] = []
    for value, vector in zip(values, vectors.T):
        if abs(value.imag) <= 1e-12 * max(1.0, abs(value)):
            groups.append((len(columns),))
            columns.append(vector.real)
        elif value.imag > 0:
            groups.append((len(columns), len(columns) + 1))
            columns.extend([vector.real, vector.imag])
    basis = np.column_stack(columns) if columns else np.zeros((matrix.shape[0], 0))
    if basis.shape != matrix.shape or np.linalg.cond(basis) > RPI_BASIS_CONDITION:
        return None
    return basis, groups


def _eigenbox(generators: np.ndarray, monodromy: np.ndarray) -> Optional[np.ndarray]:
    """Parallelotope V diag(h) containing the zonotope, aligned with the eigenvectors.

    Half widths are equal within each complex pair, so the monodromy shrinks the
    box at its spectral radius even when the zonotope itself is nearly flat.
    """
    eigen = _real_eigenbasis(monodromy)
    if eigen is None:
        return None
    basis, groups = eigen
    halfwidth = np.abs(np.linalg.solve(basis, generators)).sum(axis=1)
    for group in groups:
        halfwidth[list(group)] = halfwidth[list(group)].max()
    floor = RPI_REGULARIZATION * max(float(halfwidth.max()), 1e-300)
    return basis * np.maximum(halfwidth, floor)


def _contraction(
    test_set: np.ndarray, monodromy: np.ndarray, alpha_target: float, max_horizon: int
) -> Tuple[int, float]:
    """Smallest s with M^s X inside alpha X, checked on the facet normals of X"""
    normals = facet_normals(test_set)
    reference = zonotope_support(test_set, normals)
    power = np.eye(monodromy.shape[0])
    alpha = np.inf
    for steps in range(1, max_horizon + 1):
        power = monodromy @ power
        alpha = float(np.max(zonotope_support(power @ test_set, normals) / reference))
        if alpha <= alpha_target:
            return steps, alpha
    raise RpiApproximationError(
        f"contraction {alpha:.3f} > {alpha_target} after {max_horizon} steps; "
        "increase alpha_target or max_horizon"
    )


def _partial_sum(generators: np.ndarray, monodromy: np.ndarray, steps: int) -> np.ndarray:
    """Generators of X + M X + ... + M^(steps-1) X"""
    blocks = []
    power = np.eye(monodromy.shape[0])
    for _ in range(steps):
        blocks.append(power @ generators)
        power = monodromy @ power
    return np.hstack(blocks)


def rpi_outer_approx(
    closed_loop,
    C,
    residual_halfwidth: Sequence[float],
    alpha_target: float = RPI_ALPHA_TARGET,
    max_horizon: int = RPI_MAX_HORIZON,
) -> RpiSet:
    """(s, alpha) outer approximation of the minimal RPI set.

    A single (n, n) closed loop gives one set. A stack of T phase matrices gives
    one set per phase: the contraction test runs on the monodromy matrix against
    the error accumulated over one period, the phase-0 set is inflated by
    1/(1 - alpha) and the remaining phases follow by one-step propagation.

    When the accumulated error set W is nearly flat, M^s W never fits inside
    alpha W for small alpha. The test then runs on a box B around W in the
    eigenbasis of M, and the phase-0 set becomes
    W + M W + ... + M^(s-1) W  plus  alpha / (1 - alpha) (B + M B + ... + M^(s-1) B),
    which is still robust positive invariant and still contains the minimal set.

    Args:
        closed_loop: Phi (n, n) or Phi_0..Phi_{T-1} (T, n, n)
        C: disturbance matrix (n, d) or (T, n, d)
        residual_halfwidth: half widths of the symmetric residual box
        alpha_target: required contraction, in (0, 1)
        max_horizon: cap on contraction steps

    Raises:
        RpiApproximationError: the cap was reached before alpha <= alpha_target
    """
    if not 0.0 < alpha_target < 1.0:
        raise InvalidArgumentError("alpha_target", f"must lie in (0, 1), got {alpha_target}")
    phi = np.asarray(closed_loop, dtype=float)
    C = np.asarray(C, dtype=float)
    if phi.ndim == 2:
        phi, C = phi[None], C[None]
    if C.ndim == 2:
        C = np.broadcast_to(C, (phi.shape[0],) + C.shape)
    phases, n = phi.shape[0], phi.shape[1]
    halfwidth = np.asarray(residual_halfwidth, dtype=float).reshape(-1)
    if halfwidth.shape[0] != C.shape[2]:
        raise InvalidArgumentError("residual_halfwidth", f"expected {C.shape[2]} entries")
    if np.any(halfwidth < 0):
        raise InvalidArgumentError("residual_halfwidth", "must be nonnegative")

    if not np.any(halfwidth) or not np.any(C):
        return RpiSet(generators=tuple(np.zeros((n, 0)) for _ in range(phases)))

    step_generators = [C[t] * halfwidth for t in range(phases)]
    # error accumulated over one period, as seen at phase 0
    period_set = np.zeros((n, 0))
    monodromy = np.eye(n)
    for t in range(phases):
        period_set = np.hstack([phi[t] @ period_set, step_generators[t]])
        monodromy = phi[t] @ monodromy

    box = _eigenbox(period_set, monodromy) if _is_flat(period_set) else None
    if box is None:
        period_set = _regularize(period_set)
        steps, alpha = _contraction(period_set, monodromy, alpha_target, max_horizon)
        scale = 1.0 / (1.0 - alpha)
        phase_zero = scale * _partial_sum(period_set, monodromy, steps)
    else:
        logger.debug("accumulated error set is flat; testing contraction on its eigenbasis box")
        steps, alpha = _contraction(box, monodromy, alpha_target, max_horizon)
        scale = 1.0 / (1.0 - alpha)
        phase_zero = np.hstack(
            [
                _partial_sum(period_set, monodromy, steps),
                alpha * scale * _partial_sum(box, monodromy, steps),
            ]
        )

    phase_sets = [phase_zero]
    for t in range(phases - 1):
        phase_sets.append(np.hstack([phi[t] @ phase_sets[-1], step_generators[t]]))

    logger.info(
        "RPI approximation: %d phase(s), s=%d, alpha=%.4f, %d generators",
        phases,
        steps * phases,
        alpha,
        phase_sets[0].shape[1],
    )
    return RpiSet(
        generators=tuple(phase_sets), alpha=alpha, horizon=steps * phases, scale=scale
    )


@dataclass(frozen=True)
class TightenedConstraintSchedule(PolytopicConstraintSchedule):
    """F z + G v <= f_bar with f_bar = f - tightening."""

    tightening: np.ndarray = None
    degenerate_steps: Tuple[int, ...] = ()

    @property
    def raw_f(self) -> np.ndarray:
        return self.f + self.tightening

    def original(self) -> PolytopicConstraintSchedule:
        return PolytopicConstraintSchedule(F=self.F, G=self.G, f=self.raw_f)


def tighten_constraints(
    schedule: PolytopicConstraintSchedule, gains: FeedbackGainSchedule, rpi: RpiSet
) -> TightenedConstraintSchedule:
    """f_bar_t[i] = f_t[i] - h_eps((F_t + G_t K_t)[i]).

    Raises:
        InfeasibleTighteningError: the tightened polytope is empty at some t
    """
    T = schedule.period
    if gains.period != T:
        raise InvalidArgumentError("gains", f"period {gains.period} differs from schedule {T}")
    tightening = np.zeros_like(schedule.f)
    for t in range(T + 1):
        directions = schedule.F[t] + schedule.G[t] @ gains.gains[t]
        tightening[t] = rpi.support(directions, rpi.phase(t))

    tightened = TightenedConstraintSchedule(
        F=schedule.F, G=schedule.G, f=schedule.f - tightening, tightening=tightening
    )
    if rpi.is_zero:
        return tightened

    empty: List[int] = []
    degenerate: List[int] = []
    for t in range(T + 1):
        slack = chebyshev_slack(tightened, t)
        if slack < -CONSTRAINT_MARGIN:
            empty.append(t)
        elif slack <= CONSTRAINT_MARGIN:
            degenerate.append(t)
    if empty:
        raise InfeasibleTighteningError(
            empty, f"tightened constraints are empty at {len(empty)} time step(s): {empty}"
        )
    if degenerate:
        logger.warning("tightened constraints have empty interior at t=%s", degenerate)
    return TightenedConstraintSchedule(
        F=schedule.F,
        G=schedule.G,
        f=schedule.f - tightening,
        tightening=tightening,
        degenerate_steps=tuple(degenerate),
    )


@dataclass(frozen=True)
class TubeArtifacts:
    gains: FeedbackGainSchedule
    rpi: RpiSet
    tightened: TightenedConstraintSchedule

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gains": self.gains.gains.tolist(),
            "Q": self.gains.Q.tolist(),
            "R": self.gains.R.tolist(),
            "rpi": self.rpi.to_dict(),
            "F": self.tightened.F.tolist(),
            "G": self.tightened.G.tolist(),
            "f_bar": self.tightened.f.tolist(),
            "tightening": self.tightened.tightening.tolist(),
            "degenerate_steps": list(self.tightened.degenerate_steps),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TubeArtifacts":
        tightening = np.asarray(data["tightening"], dtype=float)
        return cls(
            gains=FeedbackGainSchedule(
                gains=np.asarray(data["gains"], dtype=float),
                Q=np.asarray(data["Q"], dtype=float),
                R=np.asarray(data["R"], dtype=float),
            ),
            rpi=RpiSet.from_dict(data["rpi"]),
            tightened=TightenedConstraintSchedule(
                F=np.asarray(data["F"], dtype=float),
                G=np.asarray(data["G"], dtype=float),
                f=np.asarray(data["f_bar"], dtype=float),
                tightening=tightening,
                degenerate_steps=tuple(int(t) for t in data.get("degenerate_steps", [])),
            ),
        )

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def build_tube(
    model: PeriodicLtvModel,
    schedule: PolytopicConstraintSchedule,
    residual_halfwidth: Sequence[float],
    Q,
    R,
    alpha_target: float = RPI_ALPHA_TARGET,
    max_horizon: int = RPI_MAX_HORIZON,
) -> TubeArtifacts:
    """Gains, invariant set and tightened constraints for one scenario."""
    gains = lqr_gains(model, Q, R)
    phi = gains.closed_loop(model)
    if model.is_time_invariant():
        rpi = rpi_outer_approx(phi[0], model.C[0], residual_halfwidth, alpha_target, max_horizon)
    else:
        T = model.period
        rpi = rpi_outer_approx(
            phi[:T], model.C[:T], residual_halfwidth, alpha_target, max_horizon
        )
    tightened = tighten_constraints(schedule, gains, rpi)
    return TubeArtifacts(gains=gains, rpi=rpi, tightened=tightened)
