"""Text formats: label/observation rasters, headered tables, PGM input, run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from .lattice import Lattice


class InputError(ValueError):
    pass


def _read_grid(path, parse):
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InputError(f"{path}: rows have unequal lengths")
    try:
        grid = np.array([[parse(c.strip()) for c in r] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return grid


def read_labels(path) -> tuple[np.ndarray, Lattice]:
    """Label raster with 1-based integer labels; returns 0-based flat labels and the lattice."""
    grid = _read_grid(path, int)
    if grid.min() < 1:
        raise InputError(f"{path}: labels must be >= 1")
    return (grid.reshape(-1) - 1).astype(np.int64), Lattice(*grid.shape)


def write_labels(path, z, lattice: Lattice):
    grid = np.asarray(z, dtype=np.int64).reshape(lattice.shape) + 1
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(grid.tolist())


def _float_or_nan(s: str) -> float:
    return float("nan") if s == "" or s.lower() == "nan" else float(s)


def read_reals(path, allow_missing: bool = False) -> tuple[np.ndarray, Lattice]:
    grid = _read_grid(path, _float_or_nan if allow_missing else float)
    if not allow_missing and not np.all(np.isfinite(grid)):
        raise InputError(f"{path}: non-finite values")
    return grid.reshape(-1).astype(float), Lattice(*grid.shape)


def write_reals(path, values, lattice: Lattice):
    grid = np.asarray(values, dtype=float).reshape(lattice.shape)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in grid])


def read_pgm(path) -> tuple[np.ndarray, Lattice]:
    """Plain (P2) portable graymap, rescaled to [0, 255]."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    tokens = []
    for line in text.splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise InputError(f"{path}: not a plain P2 graymap")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
        vals = np.array([int(t) for t in tokens[4:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if maxval <= 0 or vals.size != width * height:
        raise InputError(f"{path}: expected {width * height} pixels with positive maxval")
    return vals * (255.0 / maxval), Lattice(height, width)


def read_observations(path) -> tuple[np.ndarray, Lattice]:
    if str(path).lower().endswith(".pgm"):
        return read_pgm(path)
    return read_reals(path)


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def config_hash(config_text: str) -> str:
    return hashlib.sha256(config_text.encode()).hexdigest()


def write_manifest(path, seed, config_text: str, extra: dict | None = None):
    import numba
    import scipy

    from . import __version__

    data = {
        "seed": seed,
        "config_sha256": config_hash(config_text),
        "config": config_text,
        "versions": {
            "ocapotts": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
    }
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
