"""Result emission: JSON documents and CSV tables with a metadata header."""
from __future__ import annotations

import csv
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def metadata(cfg, command, threads=1):
    return {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "threads": threads,
        "versions": {
            "laydown": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "config": cfg.to_dict(),
    }


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, payload, meta):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"meta": _clean(meta), "result": _clean(payload)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header, rows, meta):
    """CSV preceded by '# key: value' comment lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# config_hash: {meta['config_hash']}\n")
        fh.write(f"# seed: {meta['seed']}\n")
        fh.write(f"# command: {meta['command']}\n")
        fh.write("# versions: " + json.dumps(meta["versions"], sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def read_csv(path):
    """Header and rows of a CSV written by :func:`write_csv` (comments skipped)."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]


def field_rows(grid, f):
    """Rows i,j,k,x,y,alpha,f of a phase field in C order."""
    nx, ny, na = f.shape
    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(na), indexing="ij")
    X = grid.x[I]
    Y = grid.y[J]
    A = grid.alpha[K]
    cols = [I.ravel(), J.ravel(), K.ravel(), X.ravel(), Y.ravel(), A.ravel(), f.ravel()]
    for row in zip(*cols):
        yield (int(row[0]), int(row[1]), int(row[2]), *map(float, row[3:]))


FIELD_HEADER = ["i", "j", "k", "x", "y", "alpha", "f"]
SERIES_HEADER = ["t", "E", "G", "dGdt", "rhs_gronwall"]


def write_field(path, grid, f, meta, fmt="npz"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        return write_csv(path.with_suffix(".csv"), FIELD_HEADER, field_rows(grid, f), meta)
    target = path.with_suffix(".npz")
    np.savez_compressed(target, f=f, x=grid.x, y=grid.y, alpha=grid.alpha, L=grid.L,
                        meta=json.dumps(_clean(meta), sort_keys=True))
    return target
