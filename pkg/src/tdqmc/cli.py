"""Command-line entry point: ``tdqmc <subcommand> --config cfg.json --out DIR``."""
import argparse
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .analysis import fringe_visibility, l1_deviation
from .config import PRESETS, load_config, preset_config
from .errors import TDQMCError
from .grid import make_grid
from .io import prepare_out_dir, read_density_csv, write_columns_csv
from .pipeline import PipelineError, run_experiment

STAGES = {
    "ground": ("ground",),
    "evolve": ("ground", "evolve"),
    "exact": ("exact",),
    "scan-alpha": ("scan",),
    "run": ("ground", "evolve", "exact", "scan"),
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="tdqmc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="progress logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("ground", "imaginary-time ground-state preparation"),
                        ("evolve", "ground state, sudden release and real-time evolution"),
                        ("exact", "exact two-body reference only"),
                        ("scan-alpha", "variational scan over the kernel width factor"),
                        ("run", "full pipeline")]:
        p = sub.add_parser(name, help=help_)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="JSON experiment config")
        src.add_argument("--preset", choices=sorted(PRESETS), help="named preset")
        p.add_argument("--out", type=Path, help="output directory (overrides config out_dir)")
        p.add_argument("--seed", type=int, help="override the RNG seed")
        p.add_argument("--force", action="store_true", help="allow a non-empty output directory")
        p.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")
    p = sub.add_parser("analyze", help="recompute deviation/visibility from density CSVs")
    p.add_argument("--out", type=Path, required=True, help="directory of a previous run")
    p.add_argument("--window", type=float, default=0.5, help="central fraction for visibility")
    p.add_argument("--force", action="store_true", help="overwrite existing analysis files")
    return parser


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _resolve(args):
    config = load_config(args.config) if args.config else preset_config(args.preset)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    return config.with_overrides(**overrides) if overrides else config


def analyze_directory(out_dir, window=0.5, force=False):
    """Deviation and visibility from the density CSVs of an earlier run."""
    out_dir = Path(out_dir)
    exact_path = out_dir / "density_exact.csv"
    tdqmc_paths = sorted(p for p in out_dir.glob("density_*.csv")
                         if p.name not in ("density_exact.csv",) and "kde" not in p.name)
    if not tdqmc_paths and not exact_path.exists():
        raise TDQMCError(f"no density CSVs in {out_dir}")
    targets = [out_dir / "analysis_visibility.csv"]
    if exact_path.exists():
        targets.append(out_dir / "analysis_deviation.csv")
    if not force and any(t.exists() for t in targets):
        raise TDQMCError("analysis files exist; pass --force to overwrite")
    curves = {}
    for p in ([exact_path] if exact_path.exists() else []) + tdqmc_paths:
        times, x, dens = read_density_csv(p)
        curves[p.stem.removeprefix("density_")] = (times, dens)
    x = read_density_csv((tdqmc_paths or [exact_path])[0])[1]
    dx = x[1] - x[0]
    grid = make_grid(x[0], x[-1] + dx, x.size)
    n = min(len(t) for t, _ in curves.values())
    times = next(iter(curves.values()))[0][:n]
    vis = {k: [fringe_visibility(d, grid, window) for d in dens[:n]] for k, (_, dens) in curves.items()}
    write_columns_csv(targets[0], ["t", *vis], [times, *vis.values()])
    result = {"visibility_final": {k: v[-1] for k, v in vis.items()}}
    if "exact" in curves:
        ref = curves["exact"][1][:n]
        dev = {k: l1_deviation(d[:n], ref, grid) for k, (_, d) in curves.items() if k != "exact"}
        write_columns_csv(targets[1], ["t", *dev], [times, *dev.values()])
        result["mean_deviation"] = {k: float(np.mean(v)) for k, v in dev.items()}
    return result


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    stage = "config"
    try:
        if args.command == "analyze":
            stage = "analyze"
            print(json.dumps(analyze_directory(args.out, args.window, args.force), indent=2))
            return 0
        config = _resolve(args)
        if config.out_dir is None:
            raise TDQMCError("no output directory: pass --out or set out_dir in the config")
        stage = "output"
        prepare_out_dir(config.out_dir, args.force)
        with _thread_limit(args.threads):
            manifest = run_experiment(config, config.out_dir, force=True,
                                      stages=STAGES[args.command], threads=args.threads)
        print(f"wrote {len(manifest['files'])} files to {config.out_dir}")
        return 0
    except PipelineError as exc:
        print(f"tdqmc: error in stage '{exc.stage}': {exc.__cause__}", file=sys.stderr)
        return 1
    except (TDQMCError, OSError, ValueError) as exc:
        print(f"tdqmc: error in stage '{stage}': {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
