"""Rescaling of initial data, low/high splitting and the inverse map.

The dilation ``u0 -> 2^{lam k} u0(2^{-k} x)`` is done on Fourier
coefficients: a mode with integer wavenumber ``m`` on a box of length ``L``
keeps its index on the box of length ``2^k L``.  The rescaled grid keeps
``dx`` (``N`` grows by ``2^k``) until ``n_cap`` is reached; past the cap the
spacing coarsens, which loses nothing because the dilated data only
occupies the first ``N`` mode indices anyway.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .spectral_core import Grid, SpaceTimeField, SpectralField, band

logger = logging.getLogger(__name__)

__all__ = [
    "RescaleContext",
    "rescaled_grid",
    "rescale_data",
    "split_low_high",
    "high_norm",
    "choose_k",
    "unrescale_data",
    "unrescale_solution",
]


@dataclass(frozen=True)
class RescaleContext:
    k: int
    lam: float
    original_grid: Grid
    rescaled_grid: Grid
    theta: float = 0.0

    @property
    def time_span(self) -> float:
        """Original-time length of the rescaled unit interval."""
        return 2.0 ** (-3 * self.k)


def rescaled_grid(grid: Grid, k: int, n_cap: int | None = None) -> Grid:
    n = grid.n_points * 2 ** k
    if n_cap is not None and n > max(n_cap, grid.n_points):
        n = max(n_cap, grid.n_points)
        logger.warning("rescaled grid capped at %d points; dx coarsens by %g", n,
                       grid.n_points * 2 ** k / n)
    return Grid(n, grid.length * 2 ** k)


def _move_modes(hat: np.ndarray, n_new: int) -> np.ndarray:
    """Copy FFT-ordered coefficients to a grid with ``n_new`` points, same indices."""
    n = hat.shape[-1]
    out = np.zeros(hat.shape[:-1] + (n_new,), dtype=complex)
    scale = n_new / n
    if n_new >= n:
        h = n // 2
        out[..., :h] = hat[..., :h]
        out[..., n_new - h:] = hat[..., h:]
        if n_new > n:
            # split the Nyquist coefficient so real data stays real
            out[..., n_new - h] *= 0.5
            out[..., h] = out[..., n_new - h]
    else:
        h = n_new // 2
        out[..., :h] = hat[..., :h]
        out[..., h:] = hat[..., n - h:]
        out[..., h] = hat[..., h] + hat[..., n - h]
    return out * scale


def rescale_data(u0: SpectralField, k: int, lam, n_cap: int | None = None,
                 grid: Grid | None = None) -> SpectralField:
    """``2^{lam k} u0(2^{-k} x)`` on the dilated box."""
    if k < 0:
        raise ValueError("k must be >= 0")
    g = grid if grid is not None else rescaled_grid(u0.grid, k, n_cap)
    hat = _move_modes(u0.hat, g.n_points) * 2.0 ** (float(lam) * k)
    return SpectralField(g, hat)


def split_low_high(u0k: SpectralField):
    low = band(u0k, 0)
    return low, u0k - low


def high_norm(u0k: SpectralField, s: float) -> float:
    from .norms import l2hs_norm

    return l2hs_norm(split_low_high(u0k)[1], s)


def choose_k(u0: SpectralField, s: float, lam, theta: float, k_max: int = 8,
             n_cap: int | None = None, admit=None) -> int:
    """Smallest k with a small enough high-frequency part.

    ``admit(k)`` is an optional extra predicate evaluated at each candidate.
    """
    achieved = []
    for k in range(k_max + 1):
        hn = high_norm(rescale_data(u0, k, lam, n_cap), s)
        achieved.append(hn)
        if hn <= theta and (admit is None or admit(k)):
            return k
    raise ConvergenceError(f"no k <= {k_max} meets theta={theta}", code="K_SEARCH_EXHAUSTED",
                           achieved=achieved)


def unrescale_data(u0k: SpectralField, k: int, lam, grid: Grid) -> SpectralField:
    hat = _move_modes(u0k.hat, grid.n_points) * 2.0 ** (-float(lam) * k)
    return SpectralField(grid, hat)


def unrescale_solution(v: SpaceTimeField, u0_low: SpectralField, k: int, lam, grid: Grid) -> SpaceTimeField:
    """Map ``v + u_low`` on [0, 1] back to ``u`` on [0, 2^{-3k}] over ``grid``."""
    u = v + u0_low
    hat = _move_modes(u.hat, grid.n_points) * 2.0 ** (-float(lam) * k)
    return SpaceTimeField(grid, v.times * 2.0 ** (-3 * k), hat)
