"""Persistence: density CSVs, density-matrix binaries with JSON sidecars, run manifests."""
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .analysis import DensityMatrix
from .errors import OutputExistsError, ShapeMismatchError
from .grid import make_grid

FLOAT_FMT = "%.17g"


def prepare_out_dir(path, force=False):
    """Create ``path``; refuse a non-empty directory unless ``force``."""
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise OutputExistsError(f"{path} exists and is not a directory")
    if path.is_dir() and any(path.iterdir()) and not force:
        raise OutputExistsError(f"{path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _time_label(t):
    # shortest repr that round-trips, so t=0.1 is written as 0.1
    return f"t={float(t)!r}"


def write_columns_csv(path, header, columns):
    """Write equal-length columns with a comma header at full double precision."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    if len(header) != data.shape[1]:
        raise ShapeMismatchError("header and column count differ")
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")


def read_columns_csv(path):
    """Return ``(header, data)``; ``data`` has one column per header field."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_density_csv(path, times, grid, densities):
    """One row per grid point: ``x`` then one column per time (increasing).

    ``grid`` is a :class:`Grid1D` or simply the array of positions.
    """
    x = np.asarray(getattr(grid, "x", grid), dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    densities = np.atleast_2d(np.asarray(densities, dtype=float))
    if densities.shape != (times.size, x.size):
        raise ShapeMismatchError(f"densities shape {densities.shape} != ({times.size}, {x.size})")
    order = np.argsort(times, kind="stable")
    header = ["x"] + [_time_label(t) for t in times[order]]
    write_columns_csv(path, header, [x, *densities[order]])


def read_density_csv(path):
    """Return ``(times, x, densities)`` with densities shaped ``(n_times, n_points)``."""
    header, data = read_columns_csv(path)
    times = np.array([float(h.split("=", 1)[1]) for h in header[1:]])
    return times, data[:, 0], data[:, 1:].T


def write_density_matrix(path_base, dm):
    """``<base>.bin`` (little-endian float64, row-major, interleaved Re/Im) plus ``<base>.json``."""
    path_base = Path(path_base)
    rho = np.ascontiguousarray(dm.rho, dtype="<c16")
    bin_path = path_base.with_suffix(".bin")
    rho.view("<f8").tofile(bin_path)
    meta = {
        "n": int(dm.grid.n_points),
        "x_min": float(dm.grid.x_min),
        "x_max": float(dm.grid.x_max),
        "time": float(dm.time),
        "trace": dm.trace,
        "purity": dm.purity,
    }
    json_path = path_base.with_suffix(".json")
    json_path.write_text(json.dumps(meta, indent=2) + "\n")
    return bin_path, json_path


def read_density_matrix(path_base):
    path_base = Path(path_base)
    meta = json.loads(path_base.with_suffix(".json").read_text())
    n = meta["n"]
    flat = np.fromfile(path_base.with_suffix(".bin"), dtype="<f8")
    if flat.size != 2 * n * n:
        raise ShapeMismatchError(f"expected {2 * n * n} floats, found {flat.size}")
    rho = flat.view("<c16").reshape(n, n)
    grid = make_grid(meta["x_min"], meta["x_max"], n)
    return DensityMatrix(grid, rho, meta["time"]), meta


def sha256_file(path, chunk=1 << 20):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, config, files, status, wall_clock, version, extra=None):
    """Write ``manifest.json`` last, with a checksum for every listed file."""
    out_dir = Path(out_dir)
    inventory = {}
    for f in sorted(set(files)):
        p = Path(f)
        rel = os.path.relpath(p, out_dir)
        inventory[rel] = {"sha256": sha256_file(p), "bytes": p.stat().st_size}
    manifest = {
        "status": status,
        "code_version": version,
        "wall_clock_seconds": round(float(wall_clock), 3),
        "config": config,
        "files": inventory,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=False) + "\n")
    return manifest


def verify_manifest(out_dir):
    """Names of inventory files whose checksum no longer matches (empty when intact)."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    return [name for name, info in manifest["files"].items()
            if sha256_file(out_dir / name) != info["sha256"]]
