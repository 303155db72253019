"""Experiment configuration and the preset table."""
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigurationError
from .grid import make_grid
from .potentials import DEFAULT_SIGMA_FLOOR, CouplingParams, Mode, NuclearFrame

GEOMETRIES = ("atom", "molecule")

_ATOM_B1 = dict(geometry="atom", a=2.0, b=1.0, alpha=0.6, mode="optimized")
_MOLECULE = dict(geometry="molecule", separation=8.0, a=1.0, alpha=0.6, mode="optimized",
                 t_final=16.0)

PRESETS = {
    "fig1-atom": dict(_ATOM_B1, run_exact=False),
    "fig1-molecule": dict(_MOLECULE, b=1.0, run_exact=False),
    "fig2-atom-single-slit": dict(_ATOM_B1),
    "fig2c-ultra": dict(_ATOM_B1, mode="ultra-correlated"),
    "fig3-molecule": dict(_MOLECULE, b=0.02),
    "fig4-dm": dict(_ATOM_B1, run_exact=False),
    "fig5-coherence": dict(_ATOM_B1, compare_modes=["ultra-correlated", "mean-field"]),
    "alpha-scan": dict(_ATOM_B1, run_exact=False, alphas=[0.2, 0.4, 0.6, 0.8, 1.0, 1.4]),
}

# keys a config without a preset must set explicitly
REQUIRED_WITHOUT_PRESET = ("geometry", "b", "alpha", "mode")


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "custom"
    geometry: str = "atom"
    separation: float = 8.0
    a: float = 2.0
    b: float = 1.0
    alpha: float = 0.6
    mode: str = "optimized"
    m_walkers: int = 1000
    grid: tuple = (-60.0, 60.0, 1024)
    exact_points: int = 512
    dt_real: float = 0.01
    d_tau: float = 0.02
    t_final: float = 10.0
    relax_steps: int = 600
    snapshot_stride: float = 0.1
    seed: int = 0
    run_exact: bool = True
    exact_tol: float = 1e-8
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    walker_move: str = "langevin"
    compare_modes: tuple = ()
    alphas: tuple = ()
    n_sample_waves: int = 4
    visibility_window: float = 0.5
    out_dir: str = None

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "compare_modes", tuple(self.compare_modes))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        self.validate()

    def validate(self):
        if self.preset != "custom" and self.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.geometry not in GEOMETRIES:
            raise ConfigurationError(f"geometry must be one of {GEOMETRIES}")
        for mode in (self.mode, *self.compare_modes):
            try:
                Mode(mode)
            except ValueError:
                raise ConfigurationError(f"unknown mode {mode!r}") from None
        if len(self.grid) != 3:
            raise ConfigurationError("grid must be (x_min, x_max, n_points)")
        self.make_grid()
        make_grid(self.grid[0], self.grid[1], self.exact_points)
        positive = ("separation", "dt_real", "d_tau", "t_final", "snapshot_stride",
                    "exact_tol", "sigma_floor", "visibility_window")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("a", "b"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if self.alpha <= 0 or any(a <= 0 for a in self.alphas):
            raise ConfigurationError("alpha values must be positive")
        if self.m_walkers < 2:
            raise ConfigurationError("m_walkers must be at least 2")
        if self.relax_steps < 1:
            raise ConfigurationError("relax_steps must be at least 1")
        if self.walker_move not in ("langevin", "resample"):
            raise ConfigurationError("walker_move must be 'langevin' or 'resample'")

    @property
    def initial_width(self):
        return 1.0 if self.geometry == "atom" else 3.0

    def make_grid(self):
        return make_grid(*self.grid)

    def make_exact_grid(self):
        return make_grid(self.grid[0], self.grid[1], self.exact_points)

    def make_frame(self):
        if self.geometry == "atom":
            return NuclearFrame.atom(self.a)
        return NuclearFrame.molecule(self.separation, self.a)

    def make_coupling(self, mode=None):
        return CouplingParams(b=self.b, alpha=(self.alpha, self.alpha),
                              mode=Mode(mode or self.mode), sigma_floor=self.sigma_floor)

    def with_overrides(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["grid"] = list(self.grid)
        d["compare_modes"] = list(self.compare_modes)
        d["alphas"] = list(self.alphas)
        return d


_FIELDS = {f.name for f in fields(ExperimentConfig)}


def resolve_config(data):
    """Merge preset defaults with explicit keys (explicit keys win)."""
    data = dict(data)
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigurationError(f"unknown config key {unknown[0]!r}")
    preset = data.get("preset", "custom")
    if preset == "custom":
        missing = [k for k in REQUIRED_WITHOUT_PRESET if k not in data]
        if missing:
            raise ConfigurationError(f"missing required key {missing[0]!r} (no preset given)")
        merged = data
    elif preset in PRESETS:
        merged = {**PRESETS[preset], **data}
    else:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(**merged)


def load_config(path):
    """Read a JSON config file and resolve it against the preset table."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a JSON object")
    return resolve_config(data)


def preset_config(name, **overrides):
    return resolve_config({"preset": name, **overrides})
