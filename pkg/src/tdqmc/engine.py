"""Guide-wave / walker ensembles: ground-state preparation and real-time dynamics.

Each electron ``i`` carries ``M`` guide waves ``waves[i, k]`` and ``M`` walkers
``walkers[i, k]``; walker k of electron i is moved only by wave k of electron
i.  Wave k of electron i feels the other electrons through the kernel-weighted
Coulomb average centred on their walker k.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import grid as gridmod
from .errors import NodeClampWarning, NumericalBlowupError, StateError
from .potentials import CouplingParams, Mode, effective_potentials, sigma_update, v_ee, v_en

log = logging.getLogger(__name__)

WALKER_MOVES = ("langevin", "resample")
NODE_WARN_FRACTION = 0.01


@dataclass
class EnsembleState:
    grid: gridmod.Grid1D
    frame: object
    coupling: CouplingParams
    waves: np.ndarray  # (n_electrons, M, n_points)
    walkers: np.ndarray  # (n_electrons, M)
    sigmas: np.ndarray  # (n_electrons,)
    rng: np.random.Generator
    seed: int = 0
    time: float = 0.0
    external: np.ndarray = None  # replaces the nuclear potential while the frame is active
    node_events: int = 0
    walker_steps: int = 0

    @property
    def n_electrons(self):
        return self.waves.shape[0]

    @property
    def m_walkers(self):
        return self.waves.shape[1]

    def copy(self):
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return replace(self, waves=self.waves.copy(), walkers=self.walkers.copy(),
                       sigmas=self.sigmas.copy(), rng=rng)

    def nuclear_potential(self):
        if not self.frame.active:
            return np.zeros(self.grid.n_points)
        if self.external is not None:
            return np.asarray(self.external, dtype=float)
        return v_en(self.grid.x, self.frame)

    def wave_norm_error(self):
        return float(np.max(np.abs(gridmod.norm(self.waves, self.grid) - 1.0)))


@dataclass
class EnergyEstimate:
    total: float
    kinetic_plus_en: float
    ee: float
    std_error: float


@dataclass
class Snapshot:
    """Immutable record of the ensemble at one time."""

    time: float
    walkers: np.ndarray
    sigmas: np.ndarray
    densities: np.ndarray  # density-matrix diagonal per electron
    antidiagonals: np.ndarray = None  # rho(x, -x) per electron, symmetric grids only
    waves: np.ndarray = None
    node_events: int = 0


@dataclass
class RelaxResult:
    state: EnsembleState
    trace_steps: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def tail_energy(self, fraction=0.5):
        """Average of the last ``fraction`` of the energy trace."""
        n = len(self.trace)
        tail = self.trace[max(0, n - max(1, int(round(fraction * n)))):]
        totals = np.array([e.total for e in tail])
        kin = np.mean([e.kinetic_plus_en for e in tail])
        ee = np.mean([e.ee for e in tail])
        if totals.size > 1:
            err = float(np.std(totals, ddof=1) / np.sqrt(totals.size))
            err = max(err, float(np.mean([e.std_error for e in tail])) / np.sqrt(totals.size))
        else:
            err = tail[0].std_error
        return EnergyEstimate(float(totals.mean()), float(kin), float(ee), err)


def make_ensemble(grid, frame, coupling, m_walkers, seed=0, width=1.0, center=0.0,
                  n_electrons=2, external=None):
    """All waves start as the same real Gaussian; walkers are drawn from its density."""
    rng = np.random.default_rng(seed)
    wave = np.real(gridmod.gaussian_wave(grid, center, width))
    waves = np.broadcast_to(wave, (n_electrons, m_walkers, grid.n_points)).copy()
    dens = gridmod.density(wave)
    walkers = gridmod.sample_inverse_cdf(dens, grid, rng.random((n_electrons, m_walkers)))
    state = EnsembleState(grid, frame, coupling, waves, walkers, np.zeros(n_electrons), rng,
                          seed=seed, external=external)
    state.sigmas = _sigmas(state)
    return state


def init_ensemble(config):
    """Build the starting ensemble described by an :class:`ExperimentConfig`."""
    return make_ensemble(config.make_grid(), config.make_frame(), config.make_coupling(),
                         config.m_walkers, seed=config.seed, width=config.initial_width)


def _alpha(coupling, i):
    return coupling.alpha[i] if len(coupling.alpha) > i else coupling.alpha[-1]


def _sigmas(state):
    c = state.coupling
    return np.array([sigma_update(state.walkers[i], _alpha(c, i), c.sigma_floor)
                     for i in range(state.n_electrons)])


def electron_potentials(state, i, walkers=None, sigmas=None):
    """Total potential, shape (M, n), for every guide wave of electron ``i``.

    ``walkers``/``sigmas`` default to the state's; pass a frozen copy to keep
    every wave of a step on the same walker snapshot.
    """
    walkers = state.walkers if walkers is None else walkers
    sigmas = state.sigmas if sigmas is None else sigmas
    c = state.coupling
    pot = np.broadcast_to(state.nuclear_potential(), (state.m_walkers, state.grid.n_points))
    for j in range(state.n_electrons):
        if j != i and c.b != 0:
            pot = pot + effective_potentials(state.grid.x, walkers[j], sigmas[j], c.b,
                                             c.mode, c.cutoff)
    return pot


def estimate_energy(state):
    """Per-configuration energy: wave expectations of T + V_en plus the
    e-e repulsion between index-paired walkers."""
    vn = state.nuclear_potential()
    per_k = np.zeros(state.m_walkers)
    for i in range(state.n_electrons):
        per_k += gridmod.single_particle_energy(state.waves[i], vn, state.grid)
    one_body = float(per_k.mean())
    ee_k = np.zeros(state.m_walkers)
    for i in range(state.n_electrons):
        for j in range(i + 1, state.n_electrons):
            ee_k += v_ee(state.walkers[i] - state.walkers[j], state.coupling.b)
    per_k += ee_k
    err = float(np.std(per_k, ddof=1) / np.sqrt(per_k.size)) if per_k.size > 1 else 0.0
    return EnergyEstimate(float(per_k.mean()), one_body, float(ee_k.mean()), err)


def _drift_and_density(waves, grid, x):
    """Re(psi'/psi) and |psi|^2 at x, row-wise, by local interpolation."""
    frac, p0, p1, d0, d1 = gridmod._stencil_at(waves, grid, x)
    num = (1 - frac) * np.real(np.conj(p0) * d0) + frac * np.real(np.conj(p1) * d1)
    rho = (1 - frac) * np.abs(p0) ** 2 + frac * np.abs(p1) ** 2
    tiny = np.finfo(float).tiny
    return num / np.maximum(rho, tiny), rho


def _langevin_move(waves, grid, x, dtau, rng):
    """One Metropolis-adjusted drift-diffusion step sampling |psi|^2 (D = 1/2)."""
    drift, rho = _drift_and_density(waves, grid, x)
    prop = x + dtau * drift + np.sqrt(dtau) * rng.standard_normal(x.shape)
    drift_p, rho_p = _drift_and_density(waves, grid, prop)
    fwd = -((prop - x - dtau * drift) ** 2) / (2 * dtau)
    bwd = -((x - prop - dtau * drift_p) ** 2) / (2 * dtau)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(rho_p) - np.log(rho) + bwd - fwd
    accept = np.log(rng.random(x.shape)) < log_ratio
    return np.where(accept, prop, x)


def relax_ground_state(state, n_steps, dtau=0.02, walker_move="langevin", energy_every=10):
    """Imaginary-time preparation of the correlated ground-state ensemble.

    Per step: freeze the walkers, propagate every wave one imaginary split
    step in its effective potential, move every walker on its own updated
    density, then refresh the kernel widths.  Returns a :class:`RelaxResult`
    with the energy sampled every ``energy_every`` steps.
    """
    if not state.frame.active:
        raise StateError("ground-state relaxation needs the nuclear frame active")
    if walker_move not in WALKER_MOVES:
        raise ValueError(f"walker_move must be one of {WALKER_MOVES}")
    state = state.copy()
    result = RelaxResult(state)
    grid = state.grid
    for step in range(1, n_steps + 1):
        frozen, frozen_sigma = state.walkers.copy(), state.sigmas.copy()
        for i in range(state.n_electrons):
            pot = electron_potentials(state, i, frozen, frozen_sigma)
            state.waves[i] = gridmod.split_step(state.waves[i], pot, dtau, grid, mode="imaginary")
        for i in range(state.n_electrons):
            if walker_move == "resample":
                u = state.rng.random(state.m_walkers)
                state.walkers[i] = gridmod.sample_inverse_cdf(
                    gridmod.density(state.waves[i]), grid, u)
            else:
                state.walkers[i] = _langevin_move(state.waves[i], grid, state.walkers[i],
                                                  dtau, state.rng)
        state.sigmas = _sigmas(state)
        if step % energy_every == 0 or step == n_steps:
            est = estimate_energy(state)
            if not np.isfinite(est.total):
                raise NumericalBlowupError(f"energy became non-finite at relaxation step {step}")
            result.trace_steps.append(step)
            result.trace.append(est)
        if step % 100 == 0:
            log.info("relax step %d/%d  E=%.6f", step, n_steps,
                     result.trace[-1].total if result.trace else float("nan"))
    return result


def release(state):
    """Switch the nuclear attraction off and restart the clock at zero."""
    if not state.frame.active:
        raise StateError("ensemble has already been released")
    new = state.copy()
    new.frame = state.frame.released()
    new.time = 0.0
    return new


def _snapshot(state, keep_waves):
    grid = state.grid
    waves = state.waves
    dens = np.mean(np.abs(waves) ** 2, axis=1)
    anti = None
    if grid.is_symmetric:
        mirror = grid.mirror_index()
        anti = np.mean(waves * waves[:, :, mirror].conj(), axis=1)
    return Snapshot(state.time, state.walkers.copy(), state.sigmas.copy(), dens, anti,
                    waves.copy() if keep_waves else None, state.node_events)


def _phase(pot, scale):
    """exp(-i * scale * pot) via real cos/sin (cheaper than complex exp)."""
    arg = scale * pot
    out = np.empty(np.shape(pot), dtype=complex)
    np.cos(arg, out=out.real)
    np.sin(-arg, out=out.imag)
    return out


def real_time_step(state, dt):
    """Advance waves then walkers by ``dt`` in place; returns node events this step."""
    grid = state.grid
    frozen, frozen_sigma = state.walkers.copy(), state.sigmas.copy()
    kin = gridmod._kinetic_factor(grid, dt, False, False)
    for i in range(state.n_electrons):
        pot = electron_potentials(state, i, frozen, frozen_sigma)
        half = _phase(pot, 0.5 * dt)
        psi = gridmod.sfft.fft(state.waves[i] * half, axis=-1)
        psi *= kin
        psi = gridmod.sfft.ifft(psi, axis=-1, overwrite_x=True)
        psi *= half
        state.waves[i] = psi
    max_speed = grid.dx / dt
    events = 0
    for i in range(state.n_electrons):
        x = frozen[i]
        v1, n1 = gridmod.bohm_velocity(state.waves[i], grid, x, max_speed, method="stencil")
        v2, n2 = gridmod.bohm_velocity(state.waves[i], grid, x + 0.5 * dt * v1, max_speed,
                                       method="stencil")
        state.walkers[i] = x + dt * v2
        events += int(np.count_nonzero(n1 | n2))
    state.sigmas = _sigmas(state)
    state.node_events += events
    state.walker_steps += state.n_electrons * state.m_walkers
    return events


def evolve_real_time(state, t_final, dt=0.01, snapshot_stride=0.1, keep_waves=False):
    """Coupled real-time propagation of all guide waves and walkers.

    Returns ``(final_state, snapshots)``; the first snapshot is the initial
    state.  The input state is not modified.
    """
    state = state.copy()
    if not np.iscomplexobj(state.waves):
        state.waves = state.waves.astype(complex)
    n_steps = int(round(t_final / dt))
    every = max(1, int(round(snapshot_stride / dt)))
    t0 = state.time
    snaps = [_snapshot(state, keep_waves)]
    for step in range(1, n_steps + 1):
        real_time_step(state, dt)
        state.time = t0 + step * dt
        if step % every == 0 or step == n_steps:
            if not np.all(np.isfinite(state.walkers)) or not np.isfinite(state.waves[:, :, 0]).all():
                raise NumericalBlowupError(f"non-finite values at t={state.time:.3f}")
            snaps.append(_snapshot(state, keep_waves))
        if step % 100 == 0:
            log.info("evolve step %d/%d  t=%.3f", step, n_steps, state.time)
    if state.walker_steps and state.node_events > NODE_WARN_FRACTION * state.walker_steps:
        warnings.warn(f"{state.node_events} node-clamped walker evaluations "
                      f"({state.node_events / state.walker_steps:.2%} of walker steps)",
                      NodeClampWarning, stacklevel=2)
    return state, snaps


def scan_alpha(config, alphas, walker_move="langevin", tail=0.5):
    """Relax a fresh, identically seeded ensemble for every alpha.

    Returns a list of ``(alpha, EnergyEstimate)`` with the tail-averaged energy.
    """
    out = []
    for a in alphas:
        if a <= 0:
            raise ValueError("alpha values must be positive")
        cfg = config.with_overrides(alpha=float(a), mode=Mode.OPTIMIZED.value)
        res = relax_ground_state(init_ensemble(cfg), cfg.relax_steps, cfg.d_tau, walker_move)
        out.append((float(a), res.tail_energy(tail)))
        log.info("alpha=%g  E=%.6f +- %.6f", a, out[-1][1].total, out[-1][1].std_error)
    return out
