"""Observables measured from guide-wave ensembles and exact states."""
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DegenerateError, ShapeMismatchError


@dataclass
class DensityMatrix:
    """Coordinate-representation density matrix, ``rho[i, j] = rho(x_i, x_j)``.

    Convention: ``rho(x, x') = sum_k p_k phi_k(x) conj(phi_k(x'))``.
    """

    grid: object
    rho: np.ndarray
    time: float = 0.0

    @property
    def diagonal(self):
        return np.real(np.diagonal(self.rho)).copy()

    @property
    def trace(self):
        return float(np.real(np.trace(self.rho)) * self.grid.dx)

    @property
    def purity(self):
        # Tr(rho^2) for Hermitian rho
        return float(np.sum(np.abs(self.rho) ** 2) * self.grid.dx**2)

    def hermiticity_error(self):
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))


@dataclass
class CoherenceTrace:
    times: np.ndarray
    raw: np.ndarray

    @property
    def normalized(self):
        return self.raw / self.raw[0]

    def first_time_below(self, level):
        """First time the normalized trace drops below ``level`` (None if never)."""
        below = np.nonzero(self.normalized < level)[0]
        return float(self.times[below[0]]) if below.size else None


def build_density_matrix(waves, grid, time=0.0):
    """Equal-weight mixture of the guide waves (rows of ``waves``)."""
    waves = np.atleast_2d(waves)
    if waves.shape[-1] != grid.n_points:
        raise ShapeMismatchError("waves do not live on this grid")
    m = waves.shape[0]
    rho = waves.T @ waves.conj() / m
    return DensityMatrix(grid, rho, time)


def mixture_diagonal(waves):
    """rho(x, x) of the guide-wave mixture without forming the matrix."""
    return np.mean(np.abs(waves) ** 2, axis=0)


def mixture_antidiagonal(waves, grid):
    """rho(x, -x) of the guide-wave mixture without forming the matrix."""
    mirror = grid.mirror_index()
    return np.mean(waves * waves[:, mirror].conj(), axis=0)


def mixture_purity(waves, grid):
    """Tr(rho^2) of the equal-weight mixture via the M x M overlap matrix."""
    waves = np.atleast_2d(waves)
    gram = waves.conj() @ waves.T * grid.dx
    return float(np.sum(np.abs(gram) ** 2) / waves.shape[0] ** 2)


def expectation(rho, observable):
    """Tr(rho A): ``observable`` is a diagonal array A(x) or a kernel A(x', x)."""
    observable = np.asarray(observable)
    n = rho.grid.n_points
    dx = rho.grid.dx
    if observable.shape == (n,):
        return float(np.real(np.sum(np.diagonal(rho.rho) * observable)) * dx)
    if observable.shape == (n, n):
        # sum_{x,x'} rho(x, x') A(x', x)
        return float(np.real(np.sum(rho.rho * observable.T)) * dx * dx)
    raise ShapeMismatchError(f"observable shape {observable.shape} does not match grid")


def antidiagonal(rho):
    """rho(x, -x) for a grid symmetric about the origin."""
    mirror = rho.grid.mirror_index()
    return rho.rho[np.arange(rho.grid.n_points), mirror]


def coherence_from_antidiagonal(values, diag=None, support=None):
    """Mean of |rho(x, -x)| over the grid.

    With ``support`` the mean is restricted to points where the diagonal
    density exceeds ``support`` times its maximum.
    """
    mags = np.abs(values)
    if support is None:
        return float(np.mean(mags))
    if diag is None:
        raise ConfigurationError("support masking needs the diagonal density")
    mask = diag > support * np.max(diag)
    return float(np.mean(mags[mask]))


def coherence_antidiagonal(rho, support=None):
    """Average modulus of the anti-diagonal ``rho(x, -x)``."""
    return coherence_from_antidiagonal(antidiagonal(rho), rho.diagonal, support)


def silverman_bandwidth(samples):
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise DegenerateError("bandwidth needs at least two samples")
    s = np.std(samples, ddof=1)
    q75, q25 = np.percentile(samples, [75, 25])
    spread = min(s, (q75 - q25) / 1.34) if q75 > q25 else s
    return 0.9 * spread * samples.size ** (-0.2)


def kde_density(walkers, grid, bandwidth=None):
    """Gaussian KDE of walker positions on the grid, normalized on the grid."""
    walkers = np.asarray(walkers, dtype=float).ravel()
    if walkers.size < 2:
        raise DegenerateError("KDE needs at least two walkers")
    h = silverman_bandwidth(walkers) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise DegenerateError("walkers are all identical; bandwidth is zero")
    out = np.zeros(grid.n_points)
    for chunk in np.array_split(walkers, max(1, walkers.size // 512)):
        out += np.exp(-0.5 * ((grid.x[None, :] - chunk[:, None]) / h) ** 2).sum(axis=0)
    return out / (out.sum() * grid.dx)


def l1_deviation(p, q, grid):
    """Integral of |p - q| over the grid."""
    p, q = np.asarray(p), np.asarray(q)
    if p.shape != q.shape or p.shape[-1] != grid.n_points:
        raise ShapeMismatchError("densities must share the grid")
    return float(np.sum(np.abs(p - q), axis=-1) * grid.dx) if p.ndim == 1 else \
        np.sum(np.abs(p - q), axis=-1) * grid.dx


def gaussian_smooth(values, grid, bandwidth):
    """Periodic convolution with a unit-mass Gaussian of std ``bandwidth``."""
    if not bandwidth:
        return np.asarray(values, dtype=float)
    k = 2 * np.pi * sfft.rfftfreq(grid.n_points, d=grid.dx)
    return sfft.irfft(sfft.rfft(values) * np.exp(-0.5 * (k * bandwidth) ** 2), n=grid.n_points)


def fringe_visibility(p, grid, window=0.5, bandwidth=None, floor=1e-3):
    """Fringe contrast (I_max - I_min)/(I_max + I_min) in the central window.

    I_max and I_min are the means of the interior local maxima and minima of
    the (optionally Gaussian-smoothed) profile inside the central ``window``
    fraction of the grid.  Maxima below ``floor`` times the window maximum are
    ignored as numerical tails, and only minima lying between the outermost
    remaining maxima count.  Returns 0 when no such pair of extrema exists.
    """
    if not 0 < window <= 1:
        raise ConfigurationError("window must be in (0, 1]")
    prof = gaussian_smooth(np.asarray(p, dtype=float), grid, bandwidth)
    n = grid.n_points
    half = int(round(window * n / 2))
    center = n // 2
    lo, hi = max(center - half, 1), min(center + half, n - 1)
    seg = prof[lo - 1:hi + 1]
    mid = seg[1:-1]
    is_max = (mid > seg[:-2]) & (mid >= seg[2:])
    is_min = (mid < seg[:-2]) & (mid <= seg[2:])
    peak = mid.max() if mid.size else 0.0
    if peak <= 0:
        return 0.0
    max_idx = np.nonzero(is_max & (mid > floor * peak))[0]
    if max_idx.size < 2:
        return 0.0
    min_idx = np.nonzero(is_min)[0]
    min_idx = min_idx[(min_idx > max_idx[0]) & (min_idx < max_idx[-1])]
    if min_idx.size == 0:
        return 0.0
    i_max, i_min = mid[max_idx].mean(), mid[min_idx].mean()
    return float((i_max - i_min) / (i_max + i_min))
