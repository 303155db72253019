"""End-to-end experiment runs: relax, release, evolve, exact reference, analysis, files."""
import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DensityMatrix,
    build_density_matrix,
    coherence_from_antidiagonal,
    fringe_visibility,
    kde_density,
    l1_deviation,
)
from .engine import evolve_real_time, init_ensemble, relax_ground_state, release, scan_alpha
from .errors import TDQMCError
from .exact import (
    exact_evolve,
    exact_ground_state,
    marginal_density,
    reduced_antidiagonal,
    reduced_density_matrix,
)
from .grid import resample_periodic
from .io import prepare_out_dir, write_columns_csv, write_density_csv, write_density_matrix, \
    write_manifest

log = logging.getLogger(__name__)

MODE_LABELS = {"optimized": "tdqmc", "ultra-correlated": "ultra", "mean-field": "hartree"}
ALL_STAGES = ("ground", "evolve", "exact", "scan")


class PipelineError(TDQMCError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage, error):
        super().__init__(f"stage '{stage}' failed: {type(error).__name__}: {error}")
        self.stage = stage


@dataclass
class TDQMCRun:
    label: str
    mode: str
    relax: object
    final_state: object = None
    snapshots: list = field(default_factory=list)

    @property
    def ground_state(self):
        return self.relax.state

    @property
    def times(self):
        return np.array([s.time for s in self.snapshots])

    def densities(self, electron=0):
        """Density-matrix diagonal of one electron at every snapshot."""
        return np.array([s.densities[electron] for s in self.snapshots])

    def coherence(self, electron=0):
        return np.array([coherence_from_antidiagonal(s.antidiagonals[electron])
                         for s in self.snapshots])


@dataclass
class ExactRun:
    ground_energy: float
    ground_purity: float
    times: np.ndarray
    marginals: np.ndarray  # on the TDQMC grid
    coherence: np.ndarray
    energies: np.ndarray
    norms: np.ndarray
    exchange_errors: np.ndarray
    purities: np.ndarray
    dm_ground: DensityMatrix
    dm_final: DensityMatrix


def run_tdqmc(config, mode=None):
    """Relax, release and evolve one ensemble; ``mode`` overrides the coupling mode."""
    mode = mode or config.mode
    cfg = config.with_overrides(mode=mode)
    label = MODE_LABELS[mode]
    log.info("[%s] relaxing %d steps (M=%d, mode=%s)", label, cfg.relax_steps, cfg.m_walkers, mode)
    relax = relax_ground_state(init_ensemble(cfg), cfg.relax_steps, cfg.d_tau, cfg.walker_move)
    return TDQMCRun(label, mode, relax)


def evolve_run(run, config):
    log.info("[%s] evolving to t=%g", run.label, config.t_final)
    run.final_state, run.snapshots = evolve_real_time(
        release(run.ground_state), config.t_final, config.dt_real, config.snapshot_stride)
    return run


def run_exact(config):
    """Exact two-body reference on the coarser tensor grid, resampled onto the 1D grid."""
    grid1 = config.make_grid()
    grid2 = config.make_exact_grid()
    frame = config.make_frame()
    log.info("[exact] relaxing on %d^2 grid", grid2.n_points)
    gs = exact_ground_state(frame, config.b, grid2, config.d_tau, config.exact_tol)
    dm_ground = reduced_density_matrix(gs)
    rows = []
    last = gs
    log.info("[exact] evolving to t=%g", config.t_final)
    for s in exact_evolve(gs, config.t_final, config.dt_real, frame.released(), config.b,
                          stride=config.snapshot_stride):
        marg = resample_periodic(marginal_density(s), grid1.n_points)
        rows.append((s.time, np.clip(marg, 0, None), np.mean(np.abs(reduced_antidiagonal(s))),
                     s.energy, s.norm2, s.exchange_error(),
                     reduced_density_matrix(s).purity))
        last = s
    times, margs, coh, energies, norms, exch, pur = (np.array(c) for c in zip(*rows))
    return ExactRun(gs.energy, dm_ground.purity, times, margs, coh, energies, norms, exch, pur,
                    dm_ground, reduced_density_matrix(last))


def _energy_rows(relax):
    tr = relax.trace
    return [relax.trace_steps, [e.total for e in tr], [e.kinetic_plus_en for e in tr],
            [e.ee for e in tr], [e.std_error for e in tr]]


def _sample_indices(m, n):
    return np.unique(np.linspace(0, m - 1, min(n, m)).round().astype(int))


class _Writer:
    """Tracks every file written so the manifest can checksum them."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.files = []

    def path(self, name):
        p = self.out / name
        self.files.append(p)
        return p

    def columns(self, name, header, cols):
        write_columns_csv(self.path(name), header, cols)

    def densities(self, name, times, grid, dens):
        write_density_csv(self.path(name), times, grid, dens)

    def matrix(self, base, dm):
        b, j = write_density_matrix(self.out / base, dm)
        self.files += [b, j]

    def json(self, name, data):
        self.path(name).write_text(json.dumps(data, indent=2) + "\n")


def _write_ground(w, run, config):
    grid = config.make_grid()
    w.columns(f"energy_trace_{run.label}.csv",
              ["step", "total", "kinetic_plus_en", "ee", "std_error"], _energy_rows(run.relax))
    idx = _sample_indices(run.ground_state.m_walkers, config.n_sample_waves)
    waves = run.ground_state.waves[0, idx]
    w.columns(f"guide_waves_{run.label}.csv", ["x"] + [f"k={k}" for k in idx],
              [grid.x, *np.abs(waves) ** 2])
    w.matrix(f"dm_{run.label}_ground", build_density_matrix(run.ground_state.waves[0], grid, 0.0))


def _write_evolution(w, run, config):
    grid = config.make_grid()
    times = run.times
    w.densities(f"density_{run.label}.csv", times, grid, run.densities())
    w.densities(f"density_kde_{run.label}.csv", times, grid,
                [kde_density(s.walkers[0], grid) for s in run.snapshots])
    coh = run.coherence()
    w.columns(f"coherence_{run.label}.csv", ["t", "raw", "normalized"], [times, coh, coh / coh[0]])
    w.matrix(f"dm_{run.label}_final",
             build_density_matrix(run.final_state.waves[0], grid, run.final_state.time))


def _write_exact(w, ex, config):
    grid = config.make_grid()
    w.densities("density_exact.csv", ex.times, grid, ex.marginals)
    w.columns("coherence_exact.csv", ["t", "raw", "normalized"],
              [ex.times, ex.coherence, ex.coherence / ex.coherence[0]])
    w.columns("exact_diagnostics.csv", ["t", "energy", "norm", "exchange_error", "purity"],
              [ex.times, ex.energies, ex.norms, ex.exchange_errors, ex.purities])
    w.matrix("dm_exact_ground", ex.dm_ground)
    w.matrix("dm_exact_final", ex.dm_final)


def compare_to_exact(runs, ex, config):
    """Deviation and visibility traces of every TDQMC run against the exact reference."""
    grid = config.make_grid()
    out = {"times": ex.times, "deviation": {}, "visibility": {"exact": []}}
    out["visibility"]["exact"] = np.array(
        [fringe_visibility(m, grid, config.visibility_window) for m in ex.marginals])
    for run in runs:
        if not run.snapshots:
            continue
        dens = run.densities()
        n = min(len(dens), len(ex.marginals))
        if not np.allclose(run.times[:n], ex.times[:n]):
            raise TDQMCError("TDQMC and exact snapshot times differ")
        out["deviation"][run.label] = l1_deviation(dens[:n], ex.marginals[:n], grid)
        out["visibility"][run.label] = np.array(
            [fringe_visibility(d, grid, config.visibility_window) for d in dens[:n]])
    return out


def visibility_only(runs, config):
    grid = config.make_grid()
    return {run.label: np.array([fringe_visibility(d, grid, config.visibility_window)
                                 for d in run.densities()])
            for run in runs if run.snapshots}


def _summary(config, runs, ex, cmp, scan):
    s = {"preset": config.preset, "runs": {}}
    for run in runs:
        tail = run.relax.tail_energy()
        entry = {"mode": run.mode, "energy": tail.total, "energy_std_error": tail.std_error,
                 "kinetic_plus_en": tail.kinetic_plus_en, "ee": tail.ee}
        if run.snapshots:
            coh = run.coherence()
            below = np.nonzero(coh / coh[0] < 0.5)[0]
            entry.update(
                final_time=float(run.times[-1]),
                coherence_min_normalized=float(np.min(coh / coh[0])),
                coherence_half_time=float(run.times[below[0]]) if below.size else None,
                node_events=int(run.final_state.node_events),
                max_norm_error=run.final_state.wave_norm_error(),
            )
        s["runs"][run.label] = entry
    if ex is not None:
        s["exact"] = {"ground_energy": ex.ground_energy, "ground_purity": ex.ground_purity,
                      "final_visibility": float(cmp["visibility"]["exact"][-1]),
                      "max_energy_drift": float(np.max(np.abs(ex.energies / ex.energies[0] - 1))),
                      "max_exchange_error": float(np.max(ex.exchange_errors))}
        for label, dev in cmp["deviation"].items():
            s["runs"][label].update(mean_deviation=float(np.mean(dev)),
                                    final_deviation=float(dev[-1]),
                                    final_visibility=float(cmp["visibility"][label][-1]))
    if scan:
        s["alpha_scan"] = [{"alpha": a, "energy": e.total, "std_error": e.std_error}
                           for a, e in scan]
    return s


def run_experiment(config, out_dir=None, force=False, stages=ALL_STAGES, threads=None):
    """Run the requested stages and write every artifact plus ``manifest.json``.

    ``stages`` is a subset of ``ground``, ``evolve``, ``exact`` and ``scan``.
    ``exact`` runs only when ``config.run_exact`` is true and ``scan`` only when
    ``config.alphas`` is non-empty.  A failing stage leaves the files written so
    far in place, marks the manifest ``failed`` and raises :class:`PipelineError`.
    Returns the manifest dictionary.
    """
    out_dir = out_dir or config.out_dir
    if out_dir is None:
        raise TDQMCError("no output directory given")
    stages = set(stages)
    if "evolve" in stages:
        stages.add("ground")
    out = prepare_out_dir(out_dir, force)
    w = _Writer(out)
    start = time.perf_counter()
    stage = "setup"
    runs, ex, cmp, scan = [], None, None, None
    extra = {"threads": threads, "stages": sorted(stages)}
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if "ground" in stages:
                for mode in (config.mode, *config.compare_modes):
                    stage = f"ground:{MODE_LABELS[mode]}"
                    run = run_tdqmc(config, mode)
                    _write_ground(w, run, config)
                    if "evolve" in stages:
                        stage = f"evolve:{run.label}"
                        evolve_run(run, config)
                        _write_evolution(w, run, config)
                    runs.append(run)
            if "exact" in stages and config.run_exact:
                stage = "exact"
                ex = run_exact(config)
                _write_exact(w, ex, config)
            stage = "analysis"
            grid_times = None
            if ex is not None:
                cmp = compare_to_exact(runs, ex, config)
                grid_times = ex.times
                labels = list(cmp["deviation"])
                if labels:
                    n = len(cmp["deviation"][labels[0]])
                    w.columns("deviation.csv", ["t", *labels],
                              [grid_times[:n], *(cmp["deviation"][k] for k in labels)])
                vis = cmp["visibility"]
            else:
                vis = visibility_only(runs, config)
            if vis:
                n = min(len(v) for v in vis.values())
                times = grid_times if grid_times is not None else runs[0].times
                w.columns("visibility.csv", ["t", *vis], [times[:n], *(v[:n] for v in vis.values())])
            if "scan" in stages and config.alphas:
                stage = "scan"
                scan = scan_alpha(config, config.alphas, config.walker_move)
                w.columns("alpha_scan.csv", ["alpha", "total", "kinetic_plus_en", "ee", "std_error"],
                          [[a for a, _ in scan], *([getattr(e, f) for _, e in scan] for f in
                                                   ("total", "kinetic_plus_en", "ee", "std_error"))])
            stage = "write"
            w.json("summary.json", _summary(config, runs, ex, cmp, scan))
        extra["warnings"] = sorted({f"{c.category.__name__}: {c.message}" for c in caught})
        for c in caught:
            log.warning("%s: %s", c.category.__name__, c.message)
    except Exception as exc:
        extra.update(failed_stage=stage, error=f"{type(exc).__name__}: {exc}")
        write_manifest(out, config.to_dict(), w.files, "failed", time.perf_counter() - start,
                       __version__, extra)
        raise PipelineError(stage, exc) from exc
    return write_manifest(out, config.to_dict(), w.files, "ok", time.perf_counter() - start,
                          __version__, extra)
