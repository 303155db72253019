import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tdqmc.analysis import (
    CoherenceTrace,
    antidiagonal,
    build_density_matrix,
    coherence_antidiagonal,
    expectation,
    fringe_visibility,
    kde_density,
    l1_deviation,
    mixture_antidiagonal,
    mixture_diagonal,
    mixture_purity,
    silverman_bandwidth,
)
from tdqmc.errors import ConfigurationError, DegenerateError, ShapeMismatchError
from tdqmc.grid import density, gaussian_wave, make_grid, normalize

GRID = make_grid(-60, 60, 1024)
SMALL = make_grid(-16, 16, 128)


def random_waves(seed, m, grid=SMALL):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(m, grid.n_points)) + 1j * rng.normal(size=(m, grid.n_points))
    return normalize(raw * np.exp(-grid.x**2 / 20), grid)


class TestDensityMatrix:
    def test_identical_waves_pure(self):
        phi = gaussian_wave(GRID, 0.3, 1.2, momentum=0.4)
        dm = build_density_matrix(np.stack([phi] * 5), GRID)
        np.testing.assert_allclose(dm.rho, np.outer(phi, phi.conj()), atol=1e-15)
        assert dm.purity == pytest.approx(1.0, abs=1e-8)

    def test_orthogonal_pair(self):
        even = gaussian_wave(GRID, 0.0, 1.0)
        odd = normalize(GRID.x * even, GRID)
        dm = build_density_matrix(np.stack([even, odd]), GRID)
        assert dm.trace == pytest.approx(1.0, abs=1e-8)
        assert dm.purity == pytest.approx(0.5, abs=1e-8)

    def test_row_index_is_unconjugated_argument(self):
        phi = gaussian_wave(SMALL, 0.0, 1.0, momentum=1.0)
        rho = build_density_matrix(phi, SMALL).rho
        assert rho[70, 60] == pytest.approx(phi[70] * np.conj(phi[60]))

    def test_mixed_grids(self):
        with pytest.raises(ShapeMismatchError):
            build_density_matrix(gaussian_wave(SMALL), GRID)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), m=st.integers(1, 8))
    def test_hermitian_unit_trace(self, seed, m):
        dm = build_density_matrix(random_waves(seed, m), SMALL)
        assert dm.hermiticity_error() < 1e-15
        assert dm.trace == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), m=st.integers(1, 8))
    def test_diagonal_consistency(self, seed, m):
        waves = random_waves(seed, m)
        dm = build_density_matrix(waves, SMALL)
        np.testing.assert_allclose(dm.diagonal, mixture_diagonal(waves), atol=1e-12)
        np.testing.assert_allclose(dm.diagonal, density(waves).mean(axis=0), atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), m=st.integers(1, 8))
    def test_gram_purity(self, seed, m):
        waves = random_waves(seed, m)
        assert mixture_purity(waves, SMALL) == pytest.approx(
            build_density_matrix(waves, SMALL).purity, rel=1e-12)

    def test_mixing_lowers_purity(self):
        phi = random_waves(0, 1)
        pure = build_density_matrix(np.repeat(phi, 3, axis=0), SMALL).purity
        mixed = build_density_matrix(np.vstack([np.repeat(phi, 3, axis=0), random_waves(1, 1)]),
                                     SMALL).purity
        assert mixed < pure - 1e-3


class TestExpectation:
    def test_identity(self):
        dm = build_density_matrix(random_waves(3, 4), SMALL)
        assert expectation(dm, np.ones(SMALL.n_points)) == pytest.approx(1.0, abs=1e-12)

    def test_position_on_symmetric_state(self):
        waves = np.stack([gaussian_wave(GRID, 0.0, w) for w in (0.5, 1.0, 2.0)])
        assert abs(expectation(build_density_matrix(waves, GRID), GRID.x)) < 1e-8

    def test_projector_kernel(self):
        phi = random_waves(4, 1)[0]
        dm = build_density_matrix(phi, SMALL)
        # kernel form sums rho(x, x') A(x', x); for a projector onto phi this is |<phi|phi>|^2
        assert expectation(dm, np.outer(phi, phi.conj())) == pytest.approx(1.0, abs=1e-12)

    def test_bad_shape(self):
        with pytest.raises(ShapeMismatchError):
            expectation(build_density_matrix(random_waves(0, 1), SMALL), np.ones(3))


class TestCoherence:
    def test_pure_symmetric_gaussian(self):
        phi = np.real(gaussian_wave(GRID, 0.0, 1.5))
        dm = build_density_matrix(phi, GRID)
        assert coherence_antidiagonal(dm) == pytest.approx(np.mean(density(phi)), rel=1e-12)
        dens = density(phi)
        mask = dens > 1e-3 * dens.max()
        assert coherence_antidiagonal(dm, support=1e-3) == pytest.approx(dens[mask].mean())

    def test_matrix_free_antidiagonal(self):
        waves = random_waves(5, 6)
        np.testing.assert_allclose(mixture_antidiagonal(waves, SMALL),
                                   antidiagonal(build_density_matrix(waves, SMALL)), atol=1e-15)

    def test_asymmetric_grid(self):
        g = make_grid(0, 32, 128)
        with pytest.raises(ConfigurationError):
            coherence_antidiagonal(build_density_matrix(gaussian_wave(g, 16.0), g))

    def test_trace_threshold(self):
        tr = CoherenceTrace(np.arange(5.0), np.array([2.0, 1.8, 1.2, 0.9, 0.5]))
        assert tr.first_time_below(0.5) == 3.0
        assert tr.first_time_below(0.1) is None


class TestKDE:
    def test_silverman_example(self):
        c = np.sqrt(1023 / 1024)
        samples = np.repeat([-c, c], 512)
        assert np.std(samples, ddof=1) == pytest.approx(1.0)
        assert silverman_bandwidth(samples) == pytest.approx(0.225, abs=1e-12)

    def test_two_walkers(self):
        p = kde_density([-1.0, 1.0], GRID)
        assert np.sum(p) * GRID.dx == pytest.approx(1.0)
        np.testing.assert_allclose(p[1:], p[1:][::-1], atol=1e-12)

    def test_normal_draws(self):
        draws = np.random.default_rng(0).normal(size=10_000)
        ref = stats.norm.pdf(GRID.x)
        assert l1_deviation(kde_density(draws, GRID), ref, GRID) < 0.05

    def test_degenerate(self):
        with pytest.raises(DegenerateError):
            kde_density([1.0], GRID)
        with pytest.raises(DegenerateError):
            kde_density([2.0, 2.0, 2.0], GRID)


class TestL1:
    def test_identity_and_disjoint(self):
        p = density(gaussian_wave(GRID, -20.0, 1.0))
        q = density(gaussian_wave(GRID, 20.0, 1.0))
        assert l1_deviation(p, p, GRID) == 0.0
        assert l1_deviation(p, q, GRID) == pytest.approx(2.0, abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(c=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
           w=st.lists(st.floats(0.5, 4), min_size=3, max_size=3))
    def test_metric(self, c, w):
        p, q, r = (density(gaussian_wave(GRID, ci, wi)) for ci, wi in zip(c, w))
        assert l1_deviation(p, q, GRID) == pytest.approx(l1_deviation(q, p, GRID))
        assert l1_deviation(p, r, GRID) <= l1_deviation(p, q, GRID) + l1_deviation(q, r, GRID) + 1e-12


class TestVisibility:
    def test_full_contrast_cosine(self):
        k = 2 * np.pi / (64 * GRID.dx)
        assert fringe_visibility(1 + np.cos(k * GRID.x), GRID) == pytest.approx(1.0, abs=1e-6)

    def test_partial_contrast(self):
        k = 2 * np.pi / (64 * GRID.dx)
        assert fringe_visibility(1 + 0.3 * np.cos(k * GRID.x), GRID) == pytest.approx(0.3, abs=1e-6)

    def test_featureless(self):
        assert fringe_visibility(np.ones(GRID.n_points), GRID) == 0.0
        assert fringe_visibility(density(gaussian_wave(GRID, 0.0, 3.0)), GRID) == 0.0

    def test_bad_window(self):
        with pytest.raises(ConfigurationError):
            fringe_visibility(np.ones(GRID.n_points), GRID, window=0.0)
