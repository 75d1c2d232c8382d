"""Cube partitions and the local-energy norm family.

All partition sums are evaluated as sparse matrix products against the
per-cube windows, so a norm costs a handful of passes over the data
regardless of the number of cubes.  Time integrals use the trapezoid rule,
``L^inf_t`` is a max over samples.

The atomic norm Y is never computed exactly; ``y_surrogate`` is the
windowed-cube upper bound and is meant for monitoring only.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .spectral_core import Grid, SpaceTimeField, SpectralField, band

logger = logging.getLogger(__name__)

__all__ = [
    "CubePartition",
    "NormReport",
    "partition",
    "l2_partition_norm",
    "x_norm",
    "xj_norm",
    "l2xs_norm",
    "l2xs_bands",
    "l2hs_norm",
    "l2hs_bands",
    "y_surrogate",
    "yj_surrogate",
    "l2ys_surrogate",
    "l2ys_bands",
    "norm_report",
]


def _transition(s):
    """Smooth step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    up = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    down = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return up / (up + down)


@dataclass(frozen=True)
class CubePartition:
    """Equal cubes of length ~2^level tiling the periodic box.

    ``degenerate`` is set when 2^level exceeds the box; the partition then
    has a single cube covering everything.
    """

    grid: Grid
    level: int

    @property
    def n_cubes(self) -> int:
        return max(1, int(math.floor(self.grid.length / 2.0 ** self.level)))

    @property
    def degenerate(self) -> bool:
        return self.grid.length < 2.0 ** self.level

    @property
    def cube_length(self) -> float:
        return self.grid.length / self.n_cubes

    @cached_property
    def centers(self) -> np.ndarray:
        return -0.5 * self.grid.length + self.cube_length * (np.arange(self.n_cubes) + 0.5)

    @cached_property
    def membership(self) -> np.ndarray:
        """Index of the (sharp) cube holding each grid point."""
        g = self.grid
        idx = np.floor((g.x + 0.5 * g.length) / self.cube_length).astype(int)
        return np.clip(idx, 0, self.n_cubes - 1)

    @cached_property
    def indicator(self) -> sp.csr_matrix:
        n = self.grid.n_points
        return sp.csr_matrix((np.ones(n), (self.membership, np.arange(n))), shape=(self.n_cubes, n))

    @cached_property
    def windows(self) -> sp.csr_matrix:
        """chi_Q sampled on the grid, one row per cube; sum of squares is 1.

        Built from the grid points within ``cube_length / 2 + 1/2`` of each
        center only, so memory stays proportional to the support.
        """
        g = self.grid
        if self.n_cubes == 1:
            return sp.csr_matrix(np.ones((1, g.n_points)))
        half = 0.5 * self.cube_length
        reach = min(int(math.ceil((half + 0.5) / g.dx)) + 1, g.n_points // 2)
        first = np.rint((self.centers + 0.5 * g.length) / g.dx).astype(int)
        offsets = np.arange(-reach, reach + 1)
        cols = (first[:, None] + offsets[None, :]) % g.n_points
        if 2 * reach + 1 >= g.n_points:
            cols = np.tile(np.arange(g.n_points), (self.n_cubes, 1))
        d = np.abs(g.x[cols] - self.centers[:, None])
        d = np.minimum(d, g.length - d)
        bump = _transition(half + 0.5 - d)
        rows = np.repeat(np.arange(self.n_cubes), cols.shape[1])
        m = sp.csr_matrix((bump.ravel(), (rows, cols.ravel())), shape=(self.n_cubes, g.n_points))
        m.sum_duplicates()
        norm = np.sqrt(np.asarray(m.multiply(m).sum(axis=0)).ravel())
        m = m @ sp.diags(1.0 / norm)
        m.data[np.abs(m.data) < 1e-300] = 0.0
        m.eliminate_zeros()
        return m.tocsr()

    @cached_property
    def windows_sq(self) -> sp.csr_matrix:
        return self.windows.multiply(self.windows).tocsr()


@functools.lru_cache(maxsize=256)
def partition(grid: Grid, level: int) -> CubePartition:
    return CubePartition(grid, max(0, int(level)))


def level_max(grid: Grid) -> int:
    """Smallest level whose single cube covers the box."""
    return max(0, int(math.ceil(math.log2(grid.length))))


def _as_space_time(u):
    """Physical samples as a (T, N) array plus time nodes (None for a slice)."""
    if isinstance(u, SpaceTimeField):
        return u.values, u.times
    return u.values[None, :], None


def _time_integral(vals, times):
    if times is None:
        return vals[0]
    return np.trapezoid(vals, times, axis=0)


def _x_sup_from_mass(mass: sp.spmatrix | np.ndarray, grid: Grid) -> np.ndarray:
    """X norm of each row of a time-integrated mass density (rows x N).

    Returns sup over levels and sharp cubes of |Q|^{-1/2} (mass in Q)^{1/2}.
    """
    mass = sp.csr_matrix(mass)
    best = np.zeros(mass.shape[0])
    for level in range(level_max(grid) + 1):
        p = partition(grid, level)
        cube_mass = (mass @ p.indicator.T).toarray() * grid.dx
        val = np.sqrt(np.max(np.maximum(cube_mass, 0.0), axis=1) / p.cube_length)
        best = np.maximum(best, val)
    return best


def _piece_norms(u, level: int, inner: str, j: int = 0) -> np.ndarray:
    """Inner norm of u * chi_Q for every cube of ``partition(level)``."""
    grid = u.grid
    vals, times = _as_space_time(u)
    dens = np.abs(vals) ** 2
    p = partition(grid, level)
    w2 = p.windows_sq
    if inner in ("L2", "L2Q"):
        if inner == "L2Q":
            # restrict to the cube itself
            w2 = w2.multiply(p.indicator).tocsr()
        rho = _time_integral(dens, times)
        return np.sqrt(np.maximum(w2 @ rho, 0.0) * grid.dx)
    if inner == "LinfL2":
        per_t = (w2 @ dens.T).T * grid.dx
        return np.sqrt(np.maximum(np.max(per_t, axis=0), 0.0))
    if inner == "Linf":
        w = p.windows
        out = np.empty(p.n_cubes)
        absv = np.abs(vals)
        for q in range(p.n_cubes):
            row = w.getrow(q)
            out[q] = np.max(absv[:, row.indices] * row.data[None, :]) if row.nnz else 0.0
        return out
    if inner in ("X", "Xj"):
        rho = _time_integral(dens, times)
        mass = w2.multiply(rho[None, :])
        x = _x_sup_from_mass(mass, grid)
        if inner == "X":
            return x
        return 2.0 ** j * x + _piece_norms(u, level, "LinfL2")
    raise ValueError(f"unknown inner norm tag {inner!r}")


def l2_partition_norm(u, level: int, inner: str = "L2", j: int = 0, return_flag: bool = False):
    """(sum_Q ||u chi_Q||_inner^2)^{1/2} over cubes of size ~2^level.

    ``inner`` is one of ``L2`` (L^2_{t,x}), ``LinfL2``, ``L2Q`` (L^2 on
    [0,1] x Q), ``X``, ``Xj`` (uses ``j``) or ``Linf``.  With
    ``return_flag`` the result is ``(value, degenerate)``.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    p = partition(u.grid, level)
    if p.degenerate:
        logger.debug("level %d exceeds box length %g; using whole-domain norm", level, u.grid.length)
    val = float(np.sqrt(np.sum(_piece_norms(u, level, inner, j) ** 2)))
    if return_flag:
        return val, p.degenerate
    return val


def linf_partition_norm(u, level: int, inner: str = "L2", j: int = 0) -> float:
    """sup_Q ||u chi_Q||_inner."""
    return float(np.max(_piece_norms(u, level, inner, j)))


def x_norm(u: SpaceTimeField) -> float:
    """Local energy norm: sup over levels and cubes of 2^{-l/2} ||u||_{L^2([0,1] x Q)}."""
    vals, times = _as_space_time(u)
    rho = _time_integral(np.abs(vals) ** 2, times)
    return float(_x_sup_from_mass(rho[None, :], u.grid)[0])


def xj_norm(u: SpaceTimeField, j: int) -> float:
    return 2.0 ** j * x_norm(u) + float(np.max(_as_l2_slices(u)))


def _as_l2_slices(u):
    if isinstance(u, SpaceTimeField):
        return u.l2_slices()
    return np.array([u.norm()])


def l2xs_bands(u: SpaceTimeField, s: float) -> np.ndarray:
    """Per-band terms 2^{js} ||S_j u||_{l^2_{2j} X_j}."""
    return np.array([
        2.0 ** (j * s) * l2_partition_norm(band(u, j), 2 * j, "Xj", j=j)
        for j in range(u.grid.j_top + 1)
    ])


def l2xs_norm(u: SpaceTimeField, s: float) -> float:
    return float(np.sqrt(np.sum(l2xs_bands(u, s) ** 2)))


def l2hs_bands(u: SpectralField, s: float) -> np.ndarray:
    return np.array([
        2.0 ** (j * s) * l2_partition_norm(band(u, j), 2 * j, "L2")
        for j in range(u.grid.j_top + 1)
    ])


def l2hs_norm(u: SpectralField, s: float) -> float:
    return float(np.sqrt(np.sum(l2hs_bands(u, s) ** 2)))


def _y_hat_rows(rho_rows: sp.csr_matrix, grid: Grid) -> np.ndarray:
    """Windowed-cube atomic bound for each row of time-integrated densities."""
    best = None
    for level in range(level_max(grid) + 1):
        p = partition(grid, level)
        piece_sq = (rho_rows @ p.windows_sq.T).toarray() * grid.dx
        val = np.sqrt(np.maximum(piece_sq, 0.0)) @ np.full(p.n_cubes, math.sqrt(p.cube_length))
        best = val if best is None else np.minimum(best, val)
    return best


def y_surrogate(f) -> float:
    """Upper bound for ||f||_Y from one-atom-per-window decompositions."""
    vals, times = _as_space_time(f)
    rho = _time_integral(np.abs(vals) ** 2, times)
    return float(_y_hat_rows(sp.csr_matrix(rho[None, :]), f.grid)[0])


def yj_surrogate(f, j: int) -> float:
    """min(2^{-j} Y-bound, ||f||_{L^1_t L^2_x}); each is an admissible split."""
    l1l2 = f.l1_l2() if isinstance(f, SpaceTimeField) else f.norm()
    return float(min(2.0 ** -j * y_surrogate(f), l1l2))


def _l2yj_pieces(f, j: int) -> np.ndarray:
    """Y_j surrogate of f chi_Q for each cube Q of level 2j."""
    grid = f.grid
    vals, times = _as_space_time(f)
    dens = np.abs(vals) ** 2
    p = partition(grid, 2 * j)
    rho = _time_integral(dens, times)
    rows = p.windows_sq.multiply(rho[None, :]).tocsr()
    y = _y_hat_rows(rows, grid)
    per_t = (p.windows_sq @ dens.T).T * grid.dx
    l2_t = np.sqrt(np.maximum(per_t, 0.0))
    l1l2 = _time_integral(l2_t, times)
    return np.minimum(2.0 ** -j * y, l1l2)


def l2ys_bands(f: SpaceTimeField, s: float) -> np.ndarray:
    return np.array([
        2.0 ** (j * s) * float(np.sqrt(np.sum(_l2yj_pieces(band(f, j), j) ** 2)))
        for j in range(f.grid.j_top + 1)
    ])


def l2ys_surrogate(f: SpaceTimeField, s: float) -> float:
    return float(np.sqrt(np.sum(l2ys_bands(f, s) ** 2)))


@dataclass
class NormReport:
    """Evaluated norms of one field, flattenable to a key -> value record."""

    s: float
    l2hs: float | None = None
    l2xs: float | None = None
    x: float | None = None
    y_surrogate: float | None = None
    l2ys_surrogate: float | None = None
    l2xs_bands: list = field(default_factory=list)
    l2ys_bands: list = field(default_factory=list)
    l2hs_bands: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"s": self.s}
        for key in ("l2hs", "l2xs", "x", "y_surrogate", "l2ys_surrogate"):
            val = getattr(self, key)
            if val is not None:
                out[key] = float(val)
        for key in ("l2xs_bands", "l2ys_bands", "l2hs_bands"):
            for j, val in enumerate(getattr(self, key)):
                out[f"{key[:-6]}_band_{j}"] = float(val)
        return out


def norm_report(u, s: float, with_y: bool = True) -> NormReport:
    """Norms of a space-time field (or of a single slice: l2hs only)."""
    if isinstance(u, SpectralField):
        hb = l2hs_bands(u, s)
        return NormReport(s=s, l2hs=float(np.sqrt(np.sum(hb ** 2))), l2hs_bands=hb.tolist())
    xb = l2xs_bands(u, s)
    hb = l2hs_bands(u.initial, s)
    rep = NormReport(
        s=s,
        l2hs=float(np.sqrt(np.sum(hb ** 2))),
        l2xs=float(np.sqrt(np.sum(xb ** 2))),
        x=x_norm(u),
        l2xs_bands=xb.tolist(),
        l2hs_bands=hb.tolist(),
    )
    if with_y:
        yb = l2ys_bands(u, s)
        rep.y_surrogate = y_surrogate(u)
        rep.l2ys_surrogate = float(np.sqrt(np.sum(yb ** 2)))
        rep.l2ys_bands = yb.tolist()
    return rep
