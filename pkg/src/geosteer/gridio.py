"""Deterministic file I/O for grids, ensembles, logs, and images.

Floats are written with ``repr``, which is the shortest exact decimal for
the value: files round-trip losslessly and rerunning a pipeline with the
same inputs reproduces every artifact byte for byte.  Nothing here writes
timestamps or absolute paths for the same reason.
"""

import json
import pathlib

import numpy as np


def write_matrix_csv(path, array, header=None):
    """Write a 2-D array as CSV with exact (repr) float formatting."""
    array = np.atleast_2d(np.asarray(array, dtype=float))
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in array:
        lines.append(",".join(repr(float(v)) for v in row))
    pathlib.Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path, skip_header=False):
    text = pathlib.Path(path).read_text().strip().splitlines()
    if skip_header:
        text = text[1:]
    return np.array([[float(v) for v in line.split(",")] for line in text])


def write_measurements_csv(path, values):
    """Measurement table: one row per position, columns ch01..chNN."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    header = [f"ch{i + 1:02d}" for i in range(values.shape[1])]
    write_matrix_csv(path, values, header=header)


def read_measurements_csv(path):
    return read_matrix_csv(path, skip_header=True)


def write_json(path, obj):
    pathlib.Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def read_json(path):
    return json.loads(pathlib.Path(path).read_text())


def write_jsonl(path, records):
    """Line-oriented JSON, one record per line (iteration logs, diagnostics)."""
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    pathlib.Path(path).write_text("\n".join(lines) + "\n")


def read_jsonl(path):
    return [json.loads(line) for line in pathlib.Path(path).read_text().splitlines() if line]


FACIES_NAMES = ("background", "channel", "crevasse")


def grid_header(config):
    """JSON-able description of the grid geometry."""
    return {
        "nx": config.nx,
        "nz": config.nz,
        "dx": config.dx,
        "dz": config.dz,
        "facies": list(FACIES_NAMES),
    }


def write_facies_grids(base_path, grid):
    """Write one CSV per facies channel: <base>_background.csv etc."""
    base = pathlib.Path(base_path)
    for i, name in enumerate(FACIES_NAMES):
        write_matrix_csv(base.with_name(f"{base.name}_{name}.csv"), grid[:, :, i])


def read_facies_grids(base_path):
    base = pathlib.Path(base_path)
    channels = [
        read_matrix_csv(base.with_name(f"{base.name}_{name}.csv")) for name in FACIES_NAMES
    ]
    return np.stack(channels, axis=-1)


def to_gray(values, vmin, vmax, log=False):
    """Map values to uint8 0..255 over [vmin, vmax] (optionally log-scaled)."""
    v = np.asarray(values, dtype=float)
    if log:
        v, vmin, vmax = np.log10(v), np.log10(vmin), np.log10(vmax)
    t = np.clip((v - vmin) / (vmax - vmin), 0.0, 1.0)
    return np.round(t * 255).astype(np.uint8)


def write_pgm(path, image):
    """Binary 8-bit portable graymap (P5)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {image.shape}")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    pathlib.Path(path).write_bytes(header + image.tobytes())


def mark_cells(image, cells):
    """Return a copy with the given (row, col) cells flipped for contrast."""
    out = image.copy()
    for row, col in cells:
        out[row, col] = 255 if out[row, col] < 128 else 0
    return out
