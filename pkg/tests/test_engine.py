import numpy as np
import pytest
from scipy import stats

from tdqmc.analysis import kde_density, l1_deviation
from tdqmc.config import preset_config
from tdqmc.engine import (
    estimate_energy,
    evolve_real_time,
    init_ensemble,
    make_ensemble,
    real_time_step,
    relax_ground_state,
    release,
    scan_alpha,
)
from tdqmc.errors import StateError
from tdqmc.grid import (
    density,
    gaussian_wave,
    make_grid,
    norm,
    sample_inverse_cdf,
    single_particle_energy,
    split_step,
)
from tdqmc.potentials import CouplingParams, NuclearFrame, v_en

SMALL = make_grid(-30, 30, 256)
ATOM = NuclearFrame.atom()


def ensemble(b=1.0, mode="optimized", m=40, seed=0, grid=SMALL, alpha=0.6, **kw):
    coupling = CouplingParams(b=b, alpha=(alpha, alpha), mode=mode)
    return make_ensemble(grid, ATOM, coupling, m, seed=seed, **kw)


def pairwise_l1_max(waves, grid):
    d = density(waves)
    return max(l1_deviation(d[a], d[b], grid) for a in range(len(d)) for b in range(a + 1, len(d)))


def soft_core_e1(grid):
    pot = v_en(grid.x, ATOM)
    psi = np.real(gaussian_wave(grid))
    for _ in range(3000):
        psi = split_step(psi, pot, 0.02, grid, mode="imaginary")
    return single_particle_energy(psi, pot, grid)


class TestInit:
    def test_preset_ensemble(self):
        cfg = preset_config("fig2-atom-single-slit", m_walkers=400)
        st = init_ensemble(cfg)
        assert st.waves.shape == (2, 400, 1024)
        np.testing.assert_allclose(norm(st.waves, st.grid), 1.0, atol=1e-12)
        for i in range(2):
            assert stats.kstest(st.walkers[i], "norm").statistic < 1.63 / np.sqrt(400)
        assert np.all(st.sigmas >= st.coupling.sigma_floor)

    def test_molecule_width(self):
        st = init_ensemble(preset_config("fig3-molecule", m_walkers=2000))
        assert np.std(st.walkers) == pytest.approx(3.0, rel=0.1)

    def test_same_seed_identical(self):
        a, b = ensemble(seed=7), ensemble(seed=7)
        np.testing.assert_array_equal(a.walkers, b.walkers)
        np.testing.assert_array_equal(a.waves, b.waves)
        assert not np.array_equal(a.walkers, ensemble(seed=8).walkers)


class TestRelax:
    def test_decoupled_limit(self):
        res = relax_ground_state(ensemble(b=0.0, m=10), 800)
        assert pairwise_l1_max(res.state.waves[0], SMALL) < 1e-3
        assert res.trace[-1].total == pytest.approx(2 * soft_core_e1(SMALL), abs=1e-6)
        assert res.trace[-1].ee == 0.0

    def test_harmonic_substitute(self):
        g = make_grid(-15, 15, 128)
        st = ensemble(b=0.0, m=8, grid=g, external=0.5 * g.x**2)
        res = relax_ground_state(st, 800)
        est = res.trace[-1]
        assert abs(est.total - 1.0) <= max(3 * est.std_error, 1e-6)

    def test_correlated_waves_differ(self):
        res = relax_ground_state(ensemble(m=60), 300)
        assert pairwise_l1_max(res.state.waves[0], SMALL) > 0.05
        assert np.all(res.state.sigmas >= 1e-3)
        np.testing.assert_allclose(norm(res.state.waves, SMALL), 1.0, atol=1e-10)

    def test_energy_identity_and_trace(self):
        res = relax_ground_state(ensemble(m=30), 200, energy_every=10)
        assert res.trace_steps == list(range(10, 201, 10))
        for e in res.trace:
            assert e.total == pytest.approx(e.kinetic_plus_en + e.ee, abs=1e-12)

    def test_input_untouched_and_resample_move(self):
        st = ensemble(m=20)
        before = st.walkers.copy()
        res = relax_ground_state(st, 20, walker_move="resample")
        np.testing.assert_array_equal(st.walkers, before)
        assert not np.array_equal(res.state.walkers, before)

    def test_mean_field_keeps_waves_identical(self):
        res = relax_ground_state(ensemble(mode="mean-field", m=12), 100)
        assert pairwise_l1_max(res.state.waves[0], SMALL) < 1e-10
        final, _ = evolve_real_time(release(res.state), 0.5, 0.01, 0.5)
        assert pairwise_l1_max(final.waves[1], SMALL) < 1e-10

    def test_huge_alpha_matches_mean_field(self):
        a = relax_ground_state(ensemble(alpha=1e6, m=60, seed=3), 200).tail_energy()
        b = relax_ground_state(ensemble(mode="mean-field", m=60, seed=3), 200).tail_energy()
        assert abs(a.total - b.total) <= 3 * max(a.std_error, b.std_error)

    def test_released_frame_rejected(self):
        st = release(ensemble(m=4))
        with pytest.raises(StateError):
            relax_ground_state(st, 1)


class TestRelease:
    def test_release(self):
        st = ensemble(m=6)
        st.time = 3.0
        rel = release(st)
        assert rel.time == 0.0
        assert not np.any(rel.nuclear_potential())
        np.testing.assert_array_equal(rel.waves, st.waves)
        np.testing.assert_array_equal(rel.walkers, st.walkers)
        with pytest.raises(StateError):
            release(rel)


class TestRealTime:
    def test_norm_and_snapshots(self):
        st = release(relax_ground_state(ensemble(m=20), 100).state)
        final, snaps = evolve_real_time(st, 1.0, 0.01, 0.25, keep_waves=True)
        assert [s.time for s in snaps] == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])
        assert final.wave_norm_error() < 1e-6
        assert snaps[-1].waves.shape == (2, 20, SMALL.n_points)
        assert st.time == 0.0

    def test_permutation_equivariance(self):
        st = release(relax_ground_state(ensemble(m=16), 50).state)
        st.waves = st.waves.astype(complex)
        perm = np.random.default_rng(0).permutation(16)
        a = st.copy()
        real_time_step(a, 0.01)
        b = st.copy()
        b.waves, b.walkers = b.waves[:, perm].copy(), b.walkers[:, perm].copy()
        real_time_step(b, 0.01)
        assert np.max(np.abs(a.waves[:, perm] - b.waves)) < 1e-12
        assert np.max(np.abs(a.walkers[:, perm] - b.walkers)) < 1e-12
        c = st.copy()
        c.waves, c.walkers = c.waves[::-1].copy(), c.walkers[::-1].copy()
        c.sigmas = c.sigmas[::-1].copy()
        real_time_step(c, 0.01)
        assert np.max(np.abs(a.waves[::-1] - c.waves)) < 1e-12
        assert np.max(np.abs(a.walkers[::-1] - c.walkers)) < 1e-12

    def test_determinism(self):
        def run():
            st = relax_ground_state(ensemble(m=20, seed=11), 60).state
            return evolve_real_time(release(st), 0.3, 0.01, 0.3)[0]
        a, b = run(), run()
        np.testing.assert_array_equal(a.walkers, b.walkers)
        np.testing.assert_array_equal(a.waves, b.waves)

    def test_free_diffraction_matches_single_particle(self):
        # at b=0 every guide wave is the same ground state, so build the
        # M=4000 ensemble from one relaxed wave instead of relaxing 4000 copies
        g = make_grid(-40, 40, 512)
        ground = relax_ground_state(ensemble(b=0.0, m=2, grid=g), 800).state.waves[0, 0]
        st = ensemble(b=0.0, m=4000, grid=g, n_electrons=1)
        st.waves[:] = ground
        st.walkers[0] = sample_inverse_cdf(density(ground), g, st.rng.random(4000))
        ref = ground.astype(complex)
        _, snaps = evolve_real_time(release(st), 2.0, 0.01, 0.5)
        for s in snaps:
            exact = density(ref)
            assert l1_deviation(kde_density(s.walkers[0], g), exact, g) < 0.05
            assert l1_deviation(s.densities[0], exact, g) < 1e-10
            for _ in range(50):
                ref = split_step(ref, np.zeros(g.n_points), 0.01, g)

    def test_electrons_statistically_equivalent(self):
        st = release(relax_ground_state(ensemble(m=500), 150).state)
        _, snaps = evolve_real_time(st, 1.0, 0.01, 1.0)
        for s in snaps:
            p1, p2 = (kde_density(s.walkers[i], SMALL) for i in range(2))
            assert l1_deviation(p1, p2, SMALL) < 3 / np.sqrt(500)


def test_scan_alpha_shape():
    cfg = preset_config("alpha-scan", m_walkers=10, relax_steps=20, grid=(-30, 30, 256),
                        exact_points=128)
    out = scan_alpha(cfg, [0.4, 1.0])
    assert [a for a, _ in out] == [0.4, 1.0]
    assert all(np.isfinite(e.total) for _, e in out)
    with pytest.raises(ValueError):
        scan_alpha(cfg, [0.0])


def test_estimate_energy_pairs_walkers():
    st = ensemble(m=3)
    st.walkers = np.array([[0.0, 1.0, 2.0], [0.0, 0.0, 0.0]])
    est = estimate_energy(st)
    expected_ee = np.mean(1 / np.sqrt(1 + np.array([0.0, 1.0, 4.0])))
    assert est.ee == pytest.approx(expected_ee, abs=1e-14)
