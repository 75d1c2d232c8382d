"""Canonical JSON and CSV field files."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .errors import ScenarioError
from .spectral_core import Grid, SpaceTimeField, SpectralField

__all__ = ["to_plain", "canonical_json", "field_csv", "space_time_csv", "read_field_csv"]


def to_plain(obj):
    """Convert numpy scalars, arrays, complex numbers and non-finite floats to JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_plain(obj.real), to_plain(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if math.isfinite(val):
            return val
        return "nan" if math.isnan(val) else ("inf" if val > 0 else "-inf")
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, compact separators, shortest round-trip floats."""
    return json.dumps(to_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _row(x, z):
    return [repr(float(x)), repr(float(z.real)), repr(float(z.imag))]


def field_csv(u: SpectralField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "re", "im"])
    for x, z in zip(u.grid.x, u.values):
        w.writerow(_row(x, z))
    return buf.getvalue()


def space_time_csv(u: SpaceTimeField, every: int = 1) -> str:
    """Rows ``t, x, re, im`` for every ``every``-th time sample (the last is always kept)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "re", "im"])
    idx = list(range(0, u.n_times, max(1, every)))
    if idx[-1] != u.n_times - 1:
        idx.append(u.n_times - 1)
    vals = u.values
    for m in idx:
        t = repr(float(u.times[m]))
        for x, z in zip(u.grid.x, vals[m]):
            w.writerow([t] + _row(x, z))
    return buf.getvalue()


def read_field_csv(path) -> SpectralField:
    """Read a field from CSV with header ``x,re,im`` on a uniform power-of-two grid."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise ScenarioError(f"{path}: not a text file", path=str(path)) from exc
    if not rows or [h.strip() for h in rows[0]] != ["x", "re", "im"]:
        raise ScenarioError(f"{path}: expected header x,re,im", path=str(path))
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ScenarioError(f"{path}: non-numeric entry", path=str(path)) from exc
    if data.ndim != 2 or data.shape[1] != 3 or data.shape[0] < 2:
        raise ScenarioError(f"{path}: expected at least two rows of three columns", path=str(path))
    x = data[:, 0]
    dx = x[1] - x[0]
    n = x.size
    try:
        grid = Grid(n, float(n * dx))
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}", path=str(path)) from exc
    if not np.allclose(x, grid.x, rtol=0, atol=1e-9 * grid.length):
        raise ScenarioError(f"{path}: x must be uniform on [-L/2, L/2)", path=str(path))
    return SpectralField.from_values(grid, data[:, 1] + 1j * data[:, 2])
