"""Exception and warning types raised across the package."""


class TDQMCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TDQMCError, ValueError):
    """Invalid grid, parameter or experiment configuration."""


class DegenerateError(TDQMCError, ValueError):
    """A wave, density or sample is degenerate (zero norm, all zeros, too few points)."""


class ShapeMismatchError(TDQMCError, ValueError):
    """Arrays that must share a grid do not."""


class StateError(TDQMCError, RuntimeError):
    """Operation not allowed in the current ensemble state."""


class ConvergenceError(TDQMCError, RuntimeError):
    """Iterative relaxation did not converge.

    The last energy reached is kept in ``last_energy``.
    """

    def __init__(self, message, last_energy=None):
        super().__init__(message)
        self.last_energy = last_energy


class NumericalBlowupError(TDQMCError, FloatingPointError):
    """NaN or infinity appeared during propagation."""


class GridTooSmallWarning(UserWarning):
    """Probability reached the periodic boundary of the grid."""


class NodeClampWarning(UserWarning):
    """Too many walker velocity evaluations hit a node of the guide wave."""


class OutputExistsError(TDQMCError, FileExistsError):
    """The output directory already holds files and overwriting was not requested."""
