"""Small writers for the on-disk formats (CSV tables, PGM fields, manifests)."""
from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from .lattice import read_pbm, write_pbm  # noqa: F401  re-exported


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def write_csv(path, header, rows):
    """Comma-separated table with a header line; floats at full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_pgm(path, values, overlay=None):
    """Binary 8-bit graymap (P5) of values in [0, 1]; 0 is black.

    Row r of the image is axis-0 index r. ``overlay`` is an optional boolean
    mask drawn at mid-grey (value 128) on top of the field.
    """
    v = np.clip(np.asarray(values, float), 0.0, 1.0)
    img = np.round(v * 255).astype(np.uint8)
    if overlay is not None:
        img[np.asarray(overlay, bool)] = 128
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of ``write_pgm``: values scaled back to [0, 1]."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pix = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
    return pix / maxval


def versions() -> dict:
    import numba
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "savanna": __version__}


def write_manifest(path, subcommand: str, config: dict, seed: int, wall_time: float, outputs,
                   replicas: int = 1):
    doc = {"subcommand": subcommand, "seed": seed, "replicas": replicas, "config": config,
           "versions": versions(), "wall_time": round(wall_time, 3), "outputs": sorted(outputs)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
