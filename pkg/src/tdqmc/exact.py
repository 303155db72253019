"""Numerically exact two-electron reference on the tensor grid.

``psi[i, j]`` is the two-body amplitude at ``(x1, x2) = (x_i, x_j)``.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .analysis import DensityMatrix
from .errors import ConvergenceError, GridTooSmallWarning, NumericalBlowupError
from .grid import NODE_THRESHOLD
from .potentials import v_ee, v_en

BOUNDARY_LIMIT = 1e-6


@dataclass
class ExactState2D:
    grid: object
    psi: np.ndarray
    time: float = 0.0
    energy: float = None

    @property
    def norm2(self):
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx**2)

    def exchange_error(self):
        """Max |Psi(x1, x2) - Psi(x2, x1)|."""
        return float(np.max(np.abs(self.psi - self.psi.T)))


@dataclass
class ConfigTrajectory:
    times: np.ndarray
    points: np.ndarray
    clamped: int = field(default=0)


def two_body_potential(grid, frame, b, external=None):
    """V_en(x1) + V_en(x2) + V_ee(x1 - x2) on the tensor grid.

    ``external`` (a 1D array) replaces the nuclear term on both axes.
    """
    x = grid.x
    one = v_en(x, frame) if external is None else np.asarray(external, dtype=float)
    return one[:, None] + one[None, :] + v_ee(x[:, None] - x[None, :], b)


def _k2(grid, half):
    k = grid.k_values
    k_last = 2 * np.pi * sfft.rfftfreq(grid.n_points, d=grid.dx) if half else k
    return k[:, None] ** 2 + k_last[None, :] ** 2


def energy_2d(psi, potential, grid):
    """<H> / <Psi|Psi> with the kinetic part evaluated spectrally."""
    power = np.abs(sfft.fft2(psi)) ** 2
    kinetic = 0.5 * np.sum(_k2(grid, False) * power) / np.sum(power)
    dens = np.abs(psi) ** 2
    return float(kinetic + np.sum(potential * dens) / np.sum(dens))


def _normalize(psi, grid):
    return psi / np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx**2)


def default_initial_width(frame):
    return 1.0 + 0.5 * max(abs(p) for p, _ in frame.nuclei)


def exact_ground_state(frame, b, grid, dtau=0.02, tol=1e-8, max_steps=50000,
                       external=None, initial_width=None):
    """Imaginary-time relaxation of the two-body Hamiltonian.

    Starts from an exchange-symmetric Gaussian blob and stops once the energy
    changes by less than ``tol`` between steps.
    """
    width = default_initial_width(frame) if initial_width is None else initial_width
    x = grid.x
    psi = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (4 * width**2))
    psi = _normalize(psi, grid)
    pot = two_body_potential(grid, frame, b, external)
    half_v = np.exp(-0.5 * dtau * pot)
    kin = np.exp(-0.5 * dtau * _k2(grid, True))
    energy = energy_2d(psi, pot, grid)
    for _ in range(max_steps):
        psi = half_v * sfft.irfft2(sfft.rfft2(half_v * psi) * kin, s=psi.shape)
        psi = _normalize(psi, grid)
        new_energy = energy_2d(psi, pot, grid)
        if not np.isfinite(new_energy):
            raise NumericalBlowupError("energy became non-finite during relaxation")
        if abs(new_energy - energy) < tol:
            return ExactState2D(grid, psi.astype(complex), 0.0, new_energy)
        energy = new_energy
    raise ConvergenceError(f"exact ground state not converged in {max_steps} steps", energy)


def marginal_density(state, electron=1):
    """One-electron density: |Psi|^2 integrated over the other coordinate."""
    dens = np.abs(state.psi) ** 2
    axis = 1 if electron == 1 else 0
    marg = dens.sum(axis=axis) * state.grid.dx
    return marg / (marg.sum() * state.grid.dx)


def _boundary_density(state):
    m1, m2 = marginal_density(state, 1), marginal_density(state, 2)
    return float(max(m1[0], m1[-1], m2[0], m2[-1]))


def exact_evolve(state, t_final, dt, frame, b, stride=0.1, strict=False, external=None):
    """Real-time split-operator evolution; yields states every ``stride``.

    The first item is the initial state at ``state.time``.  Energy is attached
    to every yielded state.  Probability reaching the grid edge raises a
    :class:`GridTooSmallWarning` (an error when ``strict``).
    """
    grid = state.grid
    pot = two_body_potential(grid, frame, b, external)
    half_v = np.exp(-0.5j * dt * pot)
    kin = np.exp(-0.5j * dt * _k2(grid, False))
    n_steps = int(round(t_final / dt))
    every = max(1, int(round(stride / dt)))
    psi = np.array(state.psi, dtype=complex)
    t0 = state.time

    def snapshot(step):
        snap = ExactState2D(grid, psi.copy(), t0 + step * dt, energy_2d(psi, pot, grid))
        if not np.isfinite(snap.energy):
            raise NumericalBlowupError(f"non-finite energy at t={snap.time}")
        edge = _boundary_density(snap)
        if edge > BOUNDARY_LIMIT:
            msg = f"edge density {edge:.2e} at t={snap.time:.3f}; enlarge the grid"
            if strict:
                raise NumericalBlowupError(msg)
            warnings.warn(msg, GridTooSmallWarning, stacklevel=3)
        return snap

    yield snapshot(0)
    for step in range(1, n_steps + 1):
        psi = half_v * sfft.ifft2(kin * sfft.fft2(half_v * psi))
        if step % every == 0 or step == n_steps:
            yield snapshot(step)


def reduced_density_matrix(state, electron=1):
    """Single-electron density matrix, partner coordinate integrated out, unit trace."""
    psi = state.psi if electron == 1 else state.psi.T
    dx = state.grid.dx
    rho = psi @ psi.conj().T * dx
    rho /= np.real(np.trace(rho)) * dx
    return DensityMatrix(state.grid, rho, state.time)


def reduced_antidiagonal(state, electron=1):
    """rho(x, -x) of the reduced density matrix without forming the matrix."""
    psi = state.psi if electron == 1 else state.psi.T
    mirror = state.grid.mirror_index()
    dx = state.grid.dx
    vals = np.sum(psi * psi[mirror].conj(), axis=1) * dx
    return vals / (np.sum(np.abs(psi) ** 2) * dx * dx)


def _velocity_field(psi, grid):
    """Currents (j1, j2) and density on the tensor grid."""
    k = grid.derivative_k
    coeffs = sfft.fft2(psi)
    d1 = sfft.ifft2(1j * k[:, None] * coeffs)
    d2 = sfft.ifft2(1j * k[None, :] * coeffs)
    conj = psi.conj()
    return np.imag(conj * d1), np.imag(conj * d2), np.abs(psi) ** 2


def _bilinear(field_, grid, p1, p2):
    n = grid.n_points
    s1 = (p1 - grid.x_min) / grid.dx
    s2 = (p2 - grid.x_min) / grid.dx
    i1, i2 = np.floor(s1).astype(int), np.floor(s2).astype(int)
    f1, f2 = s1 - i1, s2 - i2
    a1, b1 = i1 % n, (i1 + 1) % n
    a2, b2 = i2 % n, (i2 + 1) % n
    return ((1 - f1) * (1 - f2) * field_[a1, a2] + f1 * (1 - f2) * field_[b1, a2]
            + (1 - f1) * f2 * field_[a1, b2] + f1 * f2 * field_[b1, b2])


def _config_velocity(fields, grid, p, max_speed):
    j1, j2, dens = fields
    rho = _bilinear(dens, grid, p[:, 0], p[:, 1])
    node = rho < NODE_THRESHOLD * dens.max()
    safe = np.where(node, 1.0, rho)
    v = np.stack([_bilinear(j1, grid, p[:, 0], p[:, 1]) / safe,
                  _bilinear(j2, grid, p[:, 0], p[:, 1]) / safe], axis=1)
    v[node] = np.clip(v[node], -max_speed, max_speed)
    return v, node


def exact_trajectories(series, starts):
    """Integrate configuration-space Bohmian trajectories through ``series``.

    Midpoint (RK2) steps between consecutive states; the velocity field at the
    half step is the average of the two neighbouring fields, evaluated by
    bilinear interpolation.
    """
    points = np.array(starts, dtype=float).reshape(-1, 2)
    it = iter(series)
    prev = next(it)
    grid = prev.grid
    times, path = [prev.time], [points.copy()]
    clamped = np.zeros(len(points), dtype=int)
    f_prev = _velocity_field(prev.psi, grid)
    for state in it:
        h = state.time - prev.time
        max_speed = grid.dx / h
        f_next = _velocity_field(state.psi, grid)
        k1, n1 = _config_velocity(f_prev, grid, points, max_speed)
        mid = points + 0.5 * h * k1
        va, na = _config_velocity(f_prev, grid, mid, max_speed)
        vb, nb = _config_velocity(f_next, grid, mid, max_speed)
        points = points + h * 0.5 * (va + vb)
        clamped += n1 | na | nb
        times.append(state.time)
        path.append(points.copy())
        prev, f_prev = state, f_next
    times = np.array(times)
    path = np.array(path)
    return [ConfigTrajectory(times, path[:, i, :], int(clamped[i])) for i in range(len(points))]
