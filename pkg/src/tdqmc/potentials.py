"""Soft-core interactions and the kernel-weighted effective e-e potential."""
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigurationError, StateError

DEFAULT_SIGMA_FLOOR = 1e-3


class Mode(str, Enum):
    """How a guide wave sees the walkers of the other electrons."""

    OPTIMIZED = "optimized"
    ULTRA_CORRELATED = "ultra-correlated"
    MEAN_FIELD = "mean-field"


@dataclass(frozen=True)
class NuclearFrame:
    """Fixed nuclei as ``(position, strength)`` pairs.

    ``active=False`` means the nuclear attraction has been switched off.
    """

    nuclei: tuple = ((0.0, 2.0),)
    active: bool = True

    def __post_init__(self):
        nuclei = tuple((float(p), float(s)) for p, s in self.nuclei)
        if any(s < 0 for _, s in nuclei):
            raise ConfigurationError("nuclear strengths must be nonnegative")
        object.__setattr__(self, "nuclei", nuclei)

    @classmethod
    def atom(cls, strength=2.0):
        return cls(((0.0, strength),))

    @classmethod
    def molecule(cls, separation=8.0, strength=1.0):
        half = separation / 2
        return cls(((-half, strength), (half, strength)))

    def released(self):
        if not self.active:
            raise StateError("nuclear frame is already released")
        return replace(self, active=False)

    @property
    def total_strength(self):
        return sum(s for _, s in self.nuclei)


@dataclass(frozen=True)
class CouplingParams:
    b: float = 1.0
    alpha: tuple = (0.6, 0.6)
    mode: Mode = Mode.OPTIMIZED
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    cutoff: float = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha)))
        if self.b < 0:
            raise ConfigurationError("b must be nonnegative")
        if self.sigma_floor <= 0:
            raise ConfigurationError("sigma_floor must be positive")
        if self.mode is Mode.OPTIMIZED and any(a <= 0 for a in self.alpha):
            raise ConfigurationError("alpha must be positive in optimized mode")


def v_en(x, frame):
    """Soft-core electron-nuclear attraction ``-sum_w a_w / sqrt(1 + (x - X_w)^2)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if not frame.active:
        return out
    for pos, strength in frame.nuclei:
        out -= strength / np.sqrt(1.0 + (x - pos) ** 2)
    return out


def v_ee(separation, b):
    """Soft-core electron-electron repulsion ``b / sqrt(1 + d^2)``."""
    separation = np.asarray(separation, dtype=float)
    return b / np.sqrt(1.0 + separation**2)


def kernel_weight(distance, sigma):
    """Gaussian nonlocal kernel ``exp(-d^2 / (2 sigma^2))``."""
    if not np.all(np.asarray(sigma) > 0):
        raise ConfigurationError("kernel width sigma must be positive")
    distance = np.asarray(distance, dtype=float)
    return np.exp(-(distance**2) / (2.0 * np.asarray(sigma) ** 2))


def sigma_update(walkers, alpha, sigma_floor=DEFAULT_SIGMA_FLOOR):
    """Kernel width: alpha times the population std of the walkers, floored."""
    walkers = np.asarray(walkers, dtype=float)
    if walkers.size == 0:
        raise StateError("empty walker set")
    return max(alpha * float(np.std(walkers)), sigma_floor)


def kernel_matrix(walkers, sigma, cutoff=None):
    """Row-normalized weights W[k, l] = K_kl / sum_l K_kl.

    With ``cutoff`` (in units of sigma) weights beyond ``cutoff*sigma`` are dropped.
    """
    d = walkers[:, None] - walkers[None, :]
    weights = kernel_weight(d, sigma)
    if cutoff is not None:
        weights[np.abs(d) > cutoff * sigma] = 0.0
    return weights / weights.sum(axis=1, keepdims=True)


def coulomb_matrix(x, walkers, b):
    """C[l, i] = v_ee(x_i - walker_l)."""
    return v_ee(np.asarray(x)[None, :] - np.asarray(walkers)[:, None], b)


def effective_potentials(x, walkers, sigma, b, mode, cutoff=None):
    """Effective e-e potential seen by every guide wave paired with ``walkers``.

    ``walkers`` are the positions of the *other* electron; row k of the result
    is the potential for the wave whose partner is ``walkers[k]``.  Returns an
    array of shape ``(len(walkers), len(x))``; in mean-field mode every row is
    the same array broadcast (read-only view).
    """
    walkers = np.asarray(walkers, dtype=float)
    if walkers.size == 0:
        raise StateError("effective potential needs at least one walker")
    mode = Mode(mode)
    x = np.asarray(x, dtype=float)
    m = walkers.size
    if b == 0:
        return np.broadcast_to(np.zeros(x.size), (m, x.size))
    if mode is Mode.ULTRA_CORRELATED:
        return coulomb_matrix(x, walkers, b)
    coul = coulomb_matrix(x, walkers, b)
    if mode is Mode.MEAN_FIELD:
        return np.broadcast_to(coul.mean(axis=0), (m, x.size))
    return kernel_matrix(walkers, sigma, cutoff) @ coul


def effective_potential(grid, other_walkers, k_index, sigma, b, mode, cutoff=None):
    """Effective potential on ``grid`` for the single wave with partner index ``k_index``."""
    other_walkers = np.asarray(other_walkers, dtype=float)
    if other_walkers.size == 0:
        raise StateError("effective potential needs at least one walker")
    if not 0 <= k_index < other_walkers.size:
        raise IndexError(f"k_index {k_index} out of range for {other_walkers.size} walkers")
    mode = Mode(mode)
    coul = coulomb_matrix(grid.x, other_walkers, b)
    if mode is Mode.ULTRA_CORRELATED:
        return coul[k_index].copy()
    if mode is Mode.MEAN_FIELD:
        return coul.mean(axis=0)
    d = other_walkers - other_walkers[k_index]
    w = kernel_weight(d, sigma)
    if cutoff is not None:
        w[np.abs(d) > cutoff * sigma] = 0.0
    return w @ coul / w.sum()
