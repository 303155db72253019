"""Uniform periodic grids, wave utilities and the split-operator propagator.

Wavefunctions are plain numpy arrays whose last axis runs over the grid, so
every routine here works on a single wave of shape ``(n,)`` or on a batch of
shape ``(..., n)``.  Atomic units throughout (hbar = m = 1).
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DegenerateError, ShapeMismatchError

NODE_THRESHOLD = 1e-12

# 6th-order centered first-derivative stencil, offsets -3..3
_STENCIL = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid ``x_i = x_min + i*dx`` for ``i = 0..n_points-1``."""

    x_min: float
    x_max: float
    n_points: int

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n_points

    @property
    def length(self):
        return self.x_max - self.x_min

    @cached_property
    def x(self):
        x = self.x_min + self.dx * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def k_values(self):
        """Angular wavenumbers in FFT ordering."""
        k = 2 * np.pi * sfft.fftfreq(self.n_points, d=self.dx)
        k.flags.writeable = False
        return k

    @cached_property
    def derivative_k(self):
        """Wavenumbers for first derivatives: the unpaired Nyquist mode is zeroed
        so that derivatives of real fields stay real."""
        k = np.array(self.k_values)
        k[self.n_points // 2] = 0.0
        k.flags.writeable = False
        return k

    @property
    def is_symmetric(self):
        return abs(self.x_min + self.x_max) <= 1e-12 * self.length

    def mirror_index(self):
        """Index map i -> j with x_j = -x_i (periodic), valid for symmetric grids."""
        if not self.is_symmetric:
            raise ConfigurationError("grid is not symmetric about x = 0")
        return (-np.arange(self.n_points)) % self.n_points


def make_grid(x_min, x_max, n_points):
    """Build a :class:`Grid1D`, validating bounds and size."""
    n_points = int(n_points)
    if not x_max > x_min:
        raise ConfigurationError(f"x_max ({x_max}) must exceed x_min ({x_min})")
    if n_points < 16 or n_points & (n_points - 1):
        raise ConfigurationError(f"n_points must be a power of two >= 16, got {n_points}")
    return Grid1D(float(x_min), float(x_max), n_points)


def _check_last_axis(arr, grid):
    if np.shape(arr)[-1] != grid.n_points:
        raise ShapeMismatchError(
            f"last axis has length {np.shape(arr)[-1]}, grid has {grid.n_points} points")


def norm(psi, grid):
    """sqrt(sum |psi|^2 dx) along the last axis."""
    return np.sqrt(np.sum(np.abs(psi) ** 2, axis=-1) * grid.dx)


def normalize(psi, grid):
    """Return ``psi`` scaled to unit L2 norm (row-wise for batches)."""
    _check_last_axis(psi, grid)
    nrm = norm(psi, grid)
    if np.any(~np.isfinite(nrm)) or np.any(nrm == 0):
        raise DegenerateError("cannot normalize a wave with zero or non-finite norm")
    return psi / np.asarray(nrm)[..., None]


def density(psi):
    """Pointwise probability density |psi|^2."""
    return np.abs(psi) ** 2


def gaussian_wave(grid, center=0.0, width=1.0, momentum=0.0):
    """Normalized Gaussian whose density has standard deviation ``width``."""
    x = grid.x
    psi = np.exp(-((x - center) ** 2) / (4 * width**2) + 1j * momentum * x)
    return normalize(psi, grid)


def sample_inverse_cdf(dens, grid, u):
    """Map uniform variates ``u`` to positions distributed like ``dens``.

    Each grid value is the mass of a cell centred on its grid point; the CDF is
    linear inside a cell.  ``dens`` may be one density of shape ``(n,)`` (then
    ``u`` can have any shape) or a batch ``(m, n)`` paired row-wise with ``u``
    of shape ``(m,)``.
    """
    dens = np.asarray(dens, dtype=float)
    _check_last_axis(dens, grid)
    u = np.asarray(u, dtype=float)
    if np.any(dens < 0):
        raise DegenerateError("density must be nonnegative")
    total = dens.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateError("cannot sample an all-zero density")
    cdf = np.cumsum(dens / total, axis=-1)
    n = grid.n_points
    if dens.ndim == 1:
        idx = np.searchsorted(cdf, u, side="right")
        idx = np.minimum(idx, n - 1)
        upper = cdf[idx]
        mass = dens[idx] / total[0]
    else:
        if u.shape != dens.shape[:-1]:
            raise ShapeMismatchError("batched sampling needs one variate per density row")
        m = dens.shape[0]
        cdf[:, -1] = 1.0
        offsets = np.arange(m)[:, None]
        flat = (cdf + offsets).ravel()
        pos = np.searchsorted(flat, u + np.arange(m), side="right")
        idx = np.minimum(pos - np.arange(m) * n, n - 1)
        rows = np.arange(m)
        upper = cdf[rows, idx]
        mass = dens[rows, idx] / total[:, 0]
    frac = np.where(mass > 0, 1.0 - (upper - u) / np.where(mass > 0, mass, 1.0), 0.5)
    frac = np.clip(frac, 0.0, 1.0)
    return grid.x_min + (idx - 0.5 + frac) * grid.dx


@lru_cache(maxsize=64)
def _kinetic_factor(grid, dt, imaginary, half_spectrum):
    if half_spectrum:
        k = 2 * np.pi * sfft.rfftfreq(grid.n_points, d=grid.dx)
    else:
        k = grid.k_values
    if imaginary:
        return np.exp(-0.5 * k**2 * dt)
    return np.exp(-0.5j * k**2 * dt)


def split_step(psi, potential, dt, grid, mode="real"):
    """One Strang step ``exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2)``.

    ``mode="imaginary"`` replaces ``dt`` by ``-i*dt`` and renormalizes the
    result.  Real-valued input in imaginary mode stays real (half-spectrum
    transforms are used).  ``potential`` broadcasts against ``psi``.
    """
    _check_last_axis(psi, grid)
    _check_last_axis(potential, grid)
    if dt == 0:
        raise ConfigurationError("time step must be nonzero")
    if mode == "real":
        half = np.exp(-0.5j * dt * np.asarray(potential))
        psi = np.asarray(psi, dtype=complex) * half
        psi = sfft.ifft(sfft.fft(psi, axis=-1) * _kinetic_factor(grid, dt, False, False), axis=-1)
        return psi * half
    if mode == "imaginary":
        half = np.exp(-0.5 * dt * np.asarray(potential))
        if np.isrealobj(psi):
            psi = np.asarray(psi) * half
            kin = _kinetic_factor(grid, dt, True, True)
            psi = sfft.irfft(sfft.rfft(psi, axis=-1) * kin, n=grid.n_points, axis=-1)
        else:
            psi = np.asarray(psi) * half
            psi = sfft.ifft(sfft.fft(psi, axis=-1) * _kinetic_factor(grid, dt, True, False), axis=-1)
        return normalize(psi * half, grid)
    raise ConfigurationError(f"unknown propagation mode {mode!r}")


def spectral_derivative(psi, grid):
    _check_last_axis(psi, grid)
    return sfft.ifft(1j * grid.derivative_k * sfft.fft(psi, axis=-1), axis=-1)


def kinetic_energy(psi, grid):
    """<psi| -1/2 d^2/dx^2 |psi> / <psi|psi>, computed spectrally."""
    coeffs = sfft.fft(psi, axis=-1)
    power = np.abs(coeffs) ** 2
    return 0.5 * np.sum(grid.k_values**2 * power, axis=-1) / np.sum(power, axis=-1)


def single_particle_energy(psi, potential, grid):
    """Energy expectation of ``-1/2 d^2/dx^2 + V`` (row-wise for batches)."""
    _check_last_axis(psi, grid)
    dens = density(psi)
    pot = np.sum(dens * potential, axis=-1) / np.sum(dens, axis=-1)
    return kinetic_energy(psi, grid) + pot


def interp_periodic(values, grid, x):
    """Linear interpolation of grid values at positions ``x``.

    ``values`` of shape ``(n,)`` is evaluated at every ``x``; a batch of shape
    ``(m, n)`` is evaluated row-wise at ``x`` of shape ``(m,)``.
    """
    x = np.asarray(x, dtype=float)
    s = (x - grid.x_min) / grid.dx
    i0 = np.floor(s).astype(np.int64)
    frac = s - i0
    i0 %= grid.n_points
    i1 = (i0 + 1) % grid.n_points
    if values.ndim == 1:
        return values[i0] * (1 - frac) + values[i1] * frac
    rows = np.arange(values.shape[0])
    return values[rows, i0] * (1 - frac) + values[rows, i1] * frac


def _stencil_at(psi, grid, x):
    """psi and its 6th-order finite-difference derivative at the two grid
    points bracketing each x, row-wise; returns (frac, psi0, psi1, d0, d1)."""
    n = grid.n_points
    s = (x - grid.x_min) / grid.dx
    i0 = np.floor(s).astype(np.int64)
    frac = s - i0
    rows = np.arange(psi.shape[0])[:, None]
    offs = np.arange(-3, 5)
    window = psi[rows, (i0[:, None] + offs) % n]
    d0 = window[:, 0:7] @ _STENCIL / grid.dx
    d1 = window[:, 1:8] @ _STENCIL / grid.dx
    return frac, window[:, 3], window[:, 4], d0, d1


def bohm_velocity(psi, grid, x, max_speed=np.inf, method="spectral"):
    """De Broglie-Bohm velocity Im(psi'/psi) at positions ``x``.

    Current ``j = Im(conj(psi) psi')`` and density are interpolated linearly
    and divided.  Where the density falls below ``NODE_THRESHOLD`` times the
    wave's peak density the speed is clamped to ``max_speed`` and flagged.

    ``psi`` of shape ``(n,)`` is evaluated at all ``x``; a batch ``(m, n)`` is
    evaluated row-wise (walker k reads only wave k).  ``method="stencil"`` uses
    a local 6th-order finite difference instead of a full FFT derivative.

    Returns ``(velocity, at_node)``.
    """
    _check_last_axis(psi, grid)
    x = np.asarray(x, dtype=float)
    single = psi.ndim == 1
    if method == "spectral":
        dpsi = spectral_derivative(psi, grid)
        current = np.imag(np.conj(psi) * dpsi)
        dens = density(psi)
        j_at = interp_periodic(current, grid, x)
        rho_at = interp_periodic(dens, grid, x)
        peak = dens.max(axis=-1)
    elif method == "stencil":
        if single:
            psi_b = np.broadcast_to(psi, (x.size, grid.n_points))
            xb = x.ravel()
        else:
            psi_b, xb = psi, x
        frac, p0, p1, d0, d1 = _stencil_at(psi_b, grid, xb)
        j_at = (1 - frac) * np.imag(np.conj(p0) * d0) + frac * np.imag(np.conj(p1) * d1)
        rho_at = (1 - frac) * np.abs(p0) ** 2 + frac * np.abs(p1) ** 2
        peak = density(psi).max(axis=-1)
        if single:
            j_at, rho_at = j_at.reshape(x.shape), rho_at.reshape(x.shape)
    else:
        raise ConfigurationError(f"unknown derivative method {method!r}")
    at_node = rho_at < NODE_THRESHOLD * peak
    safe = np.where(at_node, 1.0, rho_at)
    # without a finite speed cap a node simply stalls the walker
    cap = max_speed if np.isfinite(max_speed) else 0.0
    v = np.where(at_node, np.sign(j_at) * cap, j_at / safe)
    return v, at_node


def boundary_density(dens):
    """Largest density value on the two edge points (last axis)."""
    return float(np.max(np.maximum(dens[..., 0], dens[..., -1])))


def resample_periodic(values, n_new):
    """Fourier-interpolate real periodic samples onto ``n_new`` points of the
    same extent (the even points of the finer grid coincide with the originals)."""
    values = np.asarray(values, dtype=float)
    n_old = values.shape[-1]
    if n_new == n_old:
        return values.copy()
    coeffs = sfft.rfft(values, axis=-1)
    keep = min(n_old, n_new) // 2
    out = np.zeros(values.shape[:-1] + (n_new // 2 + 1,), dtype=complex)
    out[..., :keep] = coeffs[..., :keep]
    if n_new < n_old:
        # fold the retained Nyquist term so real signals stay real
        out[..., keep] = coeffs[..., keep].real
    return sfft.irfft(out, n=n_new, axis=-1) * (n_new / n_old)
