"""Run-directory outputs: field and trajectory CSVs, tables, JSON, manifest.

Floats are written with 17 significant digits so every value read back is
bit-identical to the one written.
"""
import csv
import hashlib
import json
import math
import os
import tempfile

import numpy as np

from .discretization import Grid2D, Trajectory

FLOAT_FMT = "%.17g"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_field_csv(path, grid, w):
    """One row per node: x, y, value (boundary nodes included)."""
    X, Y = grid.mesh()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "y", "value"])
        for x, y, v in zip(X.ravel(), Y.ravel(), np.asarray(w).ravel()):
            out.writerow([FLOAT_FMT % x, FLOAT_FMT % y, FLOAT_FMT % v])


def read_field_csv(path):
    """Inverse of :func:`write_field_csv`; returns (grid, values)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    grid = Grid2D(len(xs) - 2, len(ys) - 2, float(xs[-1]), float(ys[-1]))
    return grid, data[:, 2].reshape(grid.shape)


def write_trajectory(directory, traj, name, every=1, first=0):
    """Snapshots ``name_NNNNN.csv`` plus ``index.csv`` (n, t, file).

    Every ``every``-th step is written; the final step always is.
    """
    os.makedirs(directory, exist_ok=True)
    steps = list(range(first, traj.nt + 1, every))
    if steps[-1] != traj.nt:
        steps.append(traj.nt)
    files = []
    with open(os.path.join(directory, "index.csv"), "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["n", "t", "file"])
        for n in steps:
            fname = f"{name}_{n:05d}.csv"
            write_field_csv(os.path.join(directory, fname), traj.grid, traj.values[n])
            out.writerow([n, FLOAT_FMT % (n * traj.dt), fname])
            files.append(os.path.join(directory, fname))
    return [os.path.join(directory, "index.csv")] + files


def read_trajectory(directory):
    """Read back a trajectory written with ``every=1``."""
    with open(os.path.join(directory, "index.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    fields = []
    for row in rows:
        grid, w = read_field_csv(os.path.join(directory, row["file"]))
        fields.append(w)
    ns = [int(r["n"]) for r in rows]
    dt = float(rows[-1]["t"]) / ns[-1]
    return Trajectory(grid, dt, np.stack(fields)), ns


def write_control(directory, f):
    """Control slots as a trajectory indexed by n = 1..nt (slot k acts at t_{k+1})."""
    padded = Trajectory(f.grid, f.dt, np.concatenate([[f.grid.zeros()], f.values]))
    return write_trajectory(directory, padded, "f", first=1)


def write_table(path, rows, columns=None):
    """List of dicts as CSV; columns default to the keys of the first row."""
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(columns)
        for row in rows:
            out.writerow([_fmt(row.get(c, "")) for c in columns])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def input_hash(config_text, subcommand, options):
    """Content hash of everything that determines a run's outputs."""
    h = hashlib.sha256()
    h.update(b"blob\0" + (config_text or "").encode())
    h.update(b"\0" + subcommand.encode())
    h.update(b"\0" + json.dumps(_jsonable(options), sort_keys=True).encode())
    return h.hexdigest()


def output_hashes(out_dir, exclude=("manifest.json",)):
    """sha256 of every file under ``out_dir`` keyed by relative path, sorted."""
    found = {}
    for root, _, files in os.walk(out_dir):
        for name in files:
            full = os.path.join(root, name)
            rel = os.path.relpath(full, out_dir).replace(os.sep, "/")
            if rel not in exclude:
                found[rel] = sha256_file(full)
    return dict(sorted(found.items()))


def write_manifest_atomic(path, manifest):
    """Write JSON next to ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".manifest-", suffix=".json", dir=directory)
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
