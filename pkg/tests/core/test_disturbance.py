"""
Unit tests for waveform atoms, coefficient fitting and seeded sampling.
"""

import numpy as np
import pytest

from lmpc_core.disturbance import (
    AtomKind,
    DisturbanceBasis,
    ThetaDomain,
    WaveformAtom,
    correlated_sequence,
    evaluate_correlated,
    fit_coefficients,
    generate_realization,
    iteration_rng,
    sample_residual,
    sample_theta,
)
from lmpc_core.exceptions import InvalidArgumentError


def _basis(period=12, residual=0.0):
    atoms = (
        WaveformAtom(AtomKind.CONSTANT, channel=0, label="c"),
        WaveformAtom(AtomKind.SINE, channel=0, harmonic=1, label="s1"),
        WaveformAtom(AtomKind.TRIANGLE, channel=1, window=(0.25, 0.5, 0.75), label="tri"),
        WaveformAtom(AtomKind.SQUARE, channel=1, window=(0.0, 0.25), label="sq"),
    )
    return DisturbanceBasis(
        period=period,
        channels=2,
        atoms=atoms,
        residual_lower=np.array([-residual, -2 * residual]),
        residual_upper=np.array([residual, 2 * residual]),
    )


class TestWaveformAtom:
    def test_triangle_peaks_inside_window(self):
        atom = WaveformAtom(AtomKind.TRIANGLE, channel=0, window=(0.25, 0.5, 0.75))

        values = [atom.evaluate(t, 8) for t in range(9)]

        np.testing.assert_allclose(values, [0, 0, 0, 0.5, 1.0, 0.5, 0, 0, 0])

    def test_square_window_is_half_open(self, tiny_spec):
        np.testing.assert_allclose(tiny_spec.basis.samples[:, 0, 0], [1, 1, 1, 0, 0, 0, 0])

    def test_sine_harmonic(self):
        atom = WaveformAtom(AtomKind.SINE, channel=0, harmonic=2)

        assert atom.evaluate(1, 8) == pytest.approx(1.0)
        assert atom.label == "w1.sine2"

    def test_invalid_windows(self):
        with pytest.raises(InvalidArgumentError, match="window"):
            WaveformAtom(AtomKind.TRIANGLE, channel=0, window=(0.5, 0.25, 0.75))
        with pytest.raises(InvalidArgumentError, match="window"):
            WaveformAtom(AtomKind.SQUARE, channel=0, window=(0.5,))
        with pytest.raises(InvalidArgumentError, match="harmonic"):
            WaveformAtom(AtomKind.COSINE, channel=0)


class TestDisturbanceBasis:
    def test_samples_shape_and_labels(self):
        basis = _basis()

        assert basis.samples.shape == (13, 2, 4)
        assert basis.labels == ("c", "s1", "tri", "sq")
        assert basis.truncation_order == 1

    def test_correlated_sequence_is_linear(self, rng):
        basis = _basis()
        a, b = rng.normal(size=4), rng.normal(size=4)

        np.testing.assert_allclose(
            correlated_sequence(basis, 2 * a - b),
            2 * correlated_sequence(basis, a) - correlated_sequence(basis, b),
            atol=1e-12,
        )
        np.testing.assert_allclose(
            evaluate_correlated(basis, a, 5), correlated_sequence(basis, a)[5], atol=1e-12
        )

    def test_dependent_atoms_rejected(self):
        with pytest.raises(InvalidArgumentError, match="dependent"):
            DisturbanceBasis(
                period=4,
                channels=1,
                atoms=(
                    WaveformAtom(AtomKind.CONSTANT, channel=0, label="a"),
                    WaveformAtom(AtomKind.SQUARE, channel=0, window=(0.0, 1.0), label="b"),
                ),
                residual_lower=np.zeros(1),
                residual_upper=np.zeros(1),
            )

    def test_residual_box_must_contain_zero(self):
        with pytest.raises(InvalidArgumentError, match="residual"):
            DisturbanceBasis(
                period=4,
                channels=1,
                atoms=(),
                residual_lower=np.array([0.1]),
                residual_upper=np.array([0.2]),
            )

    def test_residual_halfwidth_is_symmetric_hull(self):
        basis = DisturbanceBasis(
            period=4,
            channels=2,
            atoms=(),
            residual_lower=np.array([-0.3, -0.1]),
            residual_upper=np.array([0.1, 0.2]),
        )

        np.testing.assert_allclose(basis.residual_halfwidth, [0.3, 0.2])

    def test_wrong_theta_length(self):
        with pytest.raises(InvalidArgumentError, match="theta"):
            correlated_sequence(_basis(), [1.0, 2.0])


class TestFitCoefficients:
    def test_residual_free_round_trip(self, rng):
        basis = _basis()
        theta = rng.uniform(-1.0, 1.0, size=4)

        fit = fit_coefficients(basis, correlated_sequence(basis, theta))

        np.testing.assert_allclose(fit.theta, theta, atol=1e-9)
        assert fit.residual_max_abs <= 1e-9

    def test_fit_matches_lstsq_oracle_with_residual(self):
        basis = _basis(residual=0.2)
        realization = generate_realization(basis, [1.0, 0.5, -0.3, 0.8], seed=3)

        fit = fit_coefficients(basis, realization)

        design = basis.samples[:12].reshape(24, 4)
        oracle = np.linalg.lstsq(design, realization[:12].reshape(-1), rcond=None)[0]
        np.testing.assert_allclose(fit.theta, oracle, atol=1e-10)
        np.testing.assert_allclose(
            fit.residual, realization - correlated_sequence(basis, fit.theta), atol=1e-12
        )

    def test_one_channel_vector_input(self, tiny_spec):
        realization = correlated_sequence(tiny_spec.basis, [0.3])[:, 0]

        fit = fit_coefficients(tiny_spec.basis, realization)

        assert fit.theta[0] == pytest.approx(0.3)

    def test_wrong_length(self, tiny_spec):
        with pytest.raises(InvalidArgumentError, match="realization"):
            fit_coefficients(tiny_spec.basis, np.zeros(5))


class TestSampling:
    def test_theta_draws_are_reproducible_and_inside(self):
        domain = ThetaDomain(lower=[-1.0, 0.0, 2.0], upper=[1.0, 0.0, 3.0])

        first = sample_theta(domain, seed=11, iteration=4)
        again = sample_theta(domain, seed=11, iteration=4)
        other = sample_theta(domain, seed=11, iteration=5)

        np.testing.assert_array_equal(first.values, again.values)
        assert not np.array_equal(first.values, other.values)
        assert domain.contains(first.values)
        assert first.values[1] == 0.0
        assert (first.seed, first.iteration) == (11, 4)

    def test_residuals_stay_in_box(self):
        basis = _basis(residual=0.5)

        residual = sample_residual(basis, seed=1, iteration=2)

        assert residual.shape == (13, 2)
        assert np.all(residual >= basis.residual_lower)
        assert np.all(residual <= basis.residual_upper)

    def test_zero_width_residual_channel(self):
        residual = sample_residual(_basis(residual=0.0), seed=1)

        np.testing.assert_array_equal(residual, 0.0)

    def test_streams_are_independent(self):
        a = iteration_rng(1, 1, 0).uniform(size=4)
        b = iteration_rng(1, 1, 1).uniform(size=4)

        assert not np.allclose(a, b)


class TestThetaDomain:
    def test_vertices_skip_degenerate_coordinates(self):
        domain = ThetaDomain(lower=[0.0, 1.0, -1.0], upper=[1.0, 1.0, 1.0])

        vertices = list(domain.vertices())

        assert len(vertices) == 4
        assert all(v[1] == 1.0 for v in vertices)

    def test_scaled_about_center(self):
        domain = ThetaDomain(lower=[0.0], upper=[4.0])

        half = domain.scaled(0.5)

        np.testing.assert_allclose([half.lower[0], half.upper[0]], [1.0, 3.0])

    def test_unbounded_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ThetaDomain(lower=[0.0], upper=[np.inf])
