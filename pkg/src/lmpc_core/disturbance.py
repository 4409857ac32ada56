"""Periodically correlated disturbances.

A disturbance channel is a linear combination of waveform atoms whose amplitudes
form the coefficient vector theta, plus a bounded white residual drawn uniformly
from a box. theta is ordered as the atom list of the basis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from itertools import product
from typing import Iterator, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from lmpc_core.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

# Fractional window boundaries are compared against t/T with this slack.
WINDOW_SLACK = 1e-12


class AtomKind(str, Enum):
    CONSTANT = "constant"
    SINE = "sine"
    COSINE = "cosine"
    TRIANGLE = "triangle"
    SQUARE = "square"


@dataclass(frozen=True)
class WaveformAtom:
    """One basis function on one channel.

    Attributes:
        kind: waveform family
        channel: disturbance channel the atom drives (0-based)
        harmonic: q for sine/cosine atoms
        window: fractions of T; (start, peak, end) for triangles, (start, end) for squares
        label: name used in reports and config files
    """

    kind: AtomKind
    channel: int
    harmonic: int = 0
    window: Tuple[float, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", AtomKind(self.kind))
        object.__setattr__(self, "window", tuple(float(v) for v in self.window))
        if self.channel < 0:
            raise InvalidArgumentError("channel", f"must be >= 0, got {self.channel}")
        if self.kind in (AtomKind.SINE, AtomKind.COSINE) and self.harmonic < 1:
            raise InvalidArgumentError("harmonic", f"sine/cosine need q >= 1, got {self.harmonic}")
        if self.kind is AtomKind.TRIANGLE:
            if len(self.window) != 3 or not (0 <= self.window[0] < self.window[1] < self.window[2]):
                raise InvalidArgumentError(
                    "window", f"triangle needs start < peak < end: {self.window}"
                )
        if self.kind is AtomKind.SQUARE:
            if len(self.window) != 2 or not (0 <= self.window[0] < self.window[1]):
                raise InvalidArgumentError("window", f"square needs start < end: {self.window}")
        if not self.label:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self) -> str:
        if self.kind in (AtomKind.SINE, AtomKind.COSINE):
            return f"w{self.channel + 1}.{self.kind.value}{self.harmonic}"
        return f"w{self.channel + 1}.{self.kind.value}"

    def evaluate(self, t: int, period: int) -> float:
        tau = t / period
        if self.kind is AtomKind.CONSTANT:
            return 1.0
        if self.kind is AtomKind.SINE:
            return float(np.sin(2.0 * np.pi * self.harmonic * t / period))
        if self.kind is AtomKind.COSINE:
            return float(np.cos(2.0 * np.pi * self.harmonic * t / period))
        if self.kind is AtomKind.TRIANGLE:
            start, peak, end = self.window
            if start - WINDOW_SLACK <= tau < peak - WINDOW_SLACK:
                return (tau - start) / (peak - start)
            if peak - WINDOW_SLACK <= tau < end - WINDOW_SLACK:
                return (end - tau) / (end - peak)
            return 0.0
        start, end = self.window
        return 1.0 if start - WINDOW_SLACK <= tau < end - WINDOW_SLACK else 0.0


@dataclass(frozen=True)
class ThetaDomain:
    """Box of admissible coefficient vectors."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise InvalidArgumentError("theta_domain", "lower and upper lengths differ")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InvalidArgumentError("theta_domain", "box must be bounded")
        if np.any(lower > upper):
            raise InvalidArgumentError("theta_domain", "lower exceeds upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def contains(self, theta: Sequence[float]) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def vertices(self) -> Iterator[np.ndarray]:
        """All 2^p corners (degenerate coordinates contribute a single value)."""
        choices = [
            (lo,) if lo == hi else (lo, hi) for lo, hi in zip(self.lower, self.upper)
        ]
        for corner in product(*choices):
            yield np.array(corner)

    def scaled(self, factor: float) -> "ThetaDomain":
        """Box shrunk (or grown) about its center."""
        return ThetaDomain(
            lower=self.center - factor * self.halfwidth, upper=self.center + factor * self.halfwidth
        )


@dataclass(frozen=True)
class ThetaSample:
    values: np.ndarray
    seed: Optional[int] = None
    iteration: Optional[int] = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class DisturbanceBasis:
    """Atoms per channel plus the residual box W_r."""

    period: int
    channels: int
    atoms: Tuple[WaveformAtom, ...]
    residual_lower: np.ndarray
    residual_upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        lower = np.asarray(self.residual_lower, dtype=float).reshape(-1)
        upper = np.asarray(self.residual_upper, dtype=float).reshape(-1)
        if lower.shape != (self.channels,) or upper.shape != (self.channels,):
            raise InvalidArgumentError("residual", f"bounds need {self.channels} entries")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InvalidArgumentError("residual", "bounds must be finite")
        if np.any(lower > 0) or np.any(upper < 0):
            raise InvalidArgumentError("residual", "bounds must contain 0")
        for atom in self.atoms:
            if atom.channel >= self.channels:
                raise InvalidArgumentError("atoms", f"{atom.label} targets missing channel")
        object.__setattr__(self, "residual_lower", lower)
        object.__setattr__(self, "residual_upper", upper)
        self._check_independence()

    def _check_independence(self) -> None:
        if not self.atoms:
            return
        design = self.fit_design_matrix()
        rank = np.linalg.matrix_rank(design)
        if rank < len(self.atoms):
            raise InvalidArgumentError(
                "atoms", f"atoms are linearly dependent over one period (rank {rank})"
            )

    @property
    def size(self) -> int:
        return len(self.atoms)

    @property
    def truncation_order(self) -> int:
        return max((atom.harmonic for atom in self.atoms), default=0)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(atom.label for atom in self.atoms)

    @property
    def residual_halfwidth(self) -> np.ndarray:
        """Half widths of the symmetric hull of W_r."""
        return np.maximum(np.abs(self.residual_lower), np.abs(self.residual_upper))

    @cached_property
    def samples(self) -> np.ndarray:
        """Stacked design matrices, shape (T+1, d, p)."""
        values = np.zeros((self.period + 1, self.channels, self.size))
        for t in range(self.period + 1):
            for k, atom in enumerate(self.atoms):
                values[t, atom.channel, k] = atom.evaluate(t, self.period)
        values.setflags(write=False)
        return values

    def design_matrix(self, t: int) -> np.ndarray:
        if not 0 <= t <= self.period:
            raise InvalidArgumentError("t", f"must lie in [0, {self.period}], got {t}")
        return self.samples[t]

    def fit_design_matrix(self) -> np.ndarray:
        """Rows (t, channel) for t = 0..T-1, columns atoms."""
        return self.samples[: self.period].reshape(self.period * self.channels, self.size)

    def with_residual(self, lower: Sequence[float], upper: Sequence[float]) -> "DisturbanceBasis":
        return DisturbanceBasis(self.period, self.channels, self.atoms, lower, upper)


def _theta_vector(basis: DisturbanceBasis, theta) -> np.ndarray:
    values = np.asarray(theta, dtype=float).reshape(-1)
    if values.shape != (basis.size,):
        raise InvalidArgumentError(
            "theta", f"expected {basis.size} coefficients, got {values.shape[0]}"
        )
    return values


def evaluate_correlated(basis: DisturbanceBasis, theta, t: int) -> np.ndarray:
    """w_{theta,t}, linear in theta."""
    return basis.design_matrix(t) @ _theta_vector(basis, theta)


def correlated_sequence(basis: DisturbanceBasis, theta) -> np.ndarray:
    """w_{theta,t} for t = 0..T, shape (T+1, d)."""
    return np.einsum("tdp,p->td", basis.samples, _theta_vector(basis, theta))


class FitResult(NamedTuple):
    theta: np.ndarray
    residual: np.ndarray
    residual_max_abs: float


def fit_coefficients(basis: DisturbanceBasis, realization) -> FitResult:
    """Least-squares projection of a realization onto the atom span over t = 0..T-1.

    Args:
        basis: disturbance basis
        realization: sequence of shape (T+1, d) (or (T+1,) for one channel)

    Returns:
        FitResult with theta, the residual over t = 0..T and its max-abs
    """
    values = np.asarray(realization, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape != (basis.period + 1, basis.channels):
        raise InvalidArgumentError(
            "realization",
            f"expected shape {(basis.period + 1, basis.channels)}, got {values.shape}",
        )
    design = basis.fit_design_matrix()
    target = values[: basis.period].reshape(-1)
    theta, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < basis.size:
        raise InvalidArgumentError("atoms", f"rank-deficient atom Gram matrix (rank {rank})")
    residual = values - correlated_sequence(basis, theta)
    residual_max_abs = float(np.max(np.abs(residual))) if residual.size else 0.0
    logger.debug("fitted %d coefficients, residual max-abs %.3e", basis.size, residual_max_abs)
    return FitResult(theta=theta, residual=residual, residual_max_abs=residual_max_abs)


def iteration_rng(seed: int, iteration: int, stream: int) -> np.random.Generator:
    """Independent generator for (experiment seed, iteration, stream)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration, stream)))


# Stream ids below the channel range are reserved for non-residual draws.
THETA_STREAM = 1_000_000
OFFSET_STREAM = 1_000_001
DEVIATION_STREAM = 1_000_002


def sample_theta(domain: ThetaDomain, seed: int, iteration: int = 0) -> ThetaSample:
    """Componentwise uniform draw from the box, reproducible from (seed, iteration)."""
    rng = iteration_rng(seed, iteration, THETA_STREAM)
    values = rng.uniform(domain.lower, domain.upper)
    degenerate = domain.lower == domain.upper
    values[degenerate] = domain.lower[degenerate]
    return ThetaSample(values=values, seed=seed, iteration=iteration)


def sample_residual(basis: DisturbanceBasis, seed: int, iteration: int = 0) -> np.ndarray:
    """Uniform residual sequence in W_r, shape (T+1, d); one stream per channel."""
    residual = np.zeros((basis.period + 1, basis.channels))
    for channel in range(basis.channels):
        lo, hi = basis.residual_lower[channel], basis.residual_upper[channel]
        if lo == hi:
            residual[:, channel] = lo
            continue
        rng = iteration_rng(seed, iteration, channel)
        residual[:, channel] = rng.uniform(lo, hi, size=basis.period + 1)
    return residual


def generate_realization(
    basis: DisturbanceBasis, theta, seed: int, iteration: int = 0
) -> np.ndarray:
    """Correlated part for theta plus a seeded residual, shape (T+1, d)."""
    return correlated_sequence(basis, theta) + sample_residual(basis, seed, iteration)
