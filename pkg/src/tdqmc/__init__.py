"""Time-dependent quantum Monte Carlo for two soft-core electrons in 1D.

Each electron is an ensemble of walkers, every walker steered by its own guide
wave; the guide waves feel the other electron through a kernel-weighted average
of soft-core Coulomb terms.  An exact two-body solver on the tensor grid serves
as the reference.
"""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    DensityMatrix,
    build_density_matrix,
    coherence_antidiagonal,
    expectation,
    fringe_visibility,
    kde_density,
    l1_deviation,
    silverman_bandwidth,
)
from .config import PRESETS, ExperimentConfig, load_config, preset_config  # noqa: E402
from .engine import (  # noqa: E402
    EnsembleState,
    estimate_energy,
    evolve_real_time,
    init_ensemble,
    relax_ground_state,
    release,
    scan_alpha,
)
from .exact import (  # noqa: E402
    exact_evolve,
    exact_ground_state,
    exact_trajectories,
    marginal_density,
    reduced_density_matrix,
)
from .grid import Grid1D, bohm_velocity, make_grid, normalize, split_step  # noqa: E402
from .potentials import CouplingParams, Mode, NuclearFrame, effective_potential  # noqa: E402

__all__ = [
    "CouplingParams", "DensityMatrix", "EnsembleState", "ExperimentConfig", "Grid1D", "Mode",
    "NuclearFrame", "PRESETS", "bohm_velocity", "build_density_matrix", "coherence_antidiagonal",
    "effective_potential", "estimate_energy", "evolve_real_time", "exact_evolve",
    "exact_ground_state", "exact_trajectories", "expectation", "fringe_visibility",
    "init_ensemble", "kde_density", "l1_deviation", "load_config", "make_grid",
    "marginal_density", "normalize", "preset_config", "reduced_density_matrix",
    "relax_ground_state", "release", "scan_alpha", "silverman_bandwidth", "split_step",
]
