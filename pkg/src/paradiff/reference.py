"""Independent reference integrators used as oracles.

``split_step`` is a Strang splitting of (d_t + d_x^3) u = F_k(u): exact Airy
half-steps around a classical RK4 step of u_t = F_k(u).  It shares only the
grid and the pointwise evaluation of ``F`` with the paradifferential
pipeline, so agreement between the two is a meaningful check.
"""

from __future__ import annotations

import numpy as np

from . import nonlinearity as nl
from .spectral_core import SpaceTimeField, SpectralField, deriv

__all__ = ["split_step", "picard_step"]


def _nonlinear_hat(F, hat, grid, k):
    return nl.evaluate_F(F, SpectralField(grid, hat), k).hat


def split_step(u0: SpectralField, F, times, k: int = 0, substeps: int = 16) -> SpaceTimeField:
    """Strang split-step solution sampled at ``times``.

    ``substeps`` steps are taken between consecutive output times.
    """
    if not isinstance(F, nl.PolynomialNonlinearity):
        F = nl.validate(F)
    grid = u0.grid
    times = np.asarray(times, dtype=float)
    xi = grid.xi
    # 2/3 dealiasing keeps the explicit nonlinear step stable
    keep = np.abs(np.fft.fftfreq(grid.n_points) * grid.n_points) < grid.n_points / 3
    out = np.empty((times.size, grid.n_points), dtype=complex)
    hat = u0.hat.copy()
    out[0] = hat
    for m in range(1, times.size):
        h = (times[m] - times[m - 1]) / substeps
        half = np.exp(1j * xi ** 3 * h / 2)
        for _ in range(substeps):
            hat = hat * half
            k1 = _nonlinear_hat(F, hat, grid, k) * keep
            k2 = _nonlinear_hat(F, hat + 0.5 * h * k1, grid, k) * keep
            k3 = _nonlinear_hat(F, hat + 0.5 * h * k2, grid, k) * keep
            k4 = _nonlinear_hat(F, hat + h * k3, grid, k) * keep
            hat = hat + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            hat = hat * half
        out[m] = hat
    return SpaceTimeField(grid, times, out)


def _lagrange_weights(nodes: np.ndarray, t: float) -> np.ndarray:
    w = np.ones(nodes.size)
    for a in range(nodes.size):
        for b in range(nodes.size):
            if a != b:
                w[a] *= (t - nodes[b]) / (nodes[a] - nodes[b])
    return w


def picard_step(u0: SpectralField, v: SpaceTimeField, F, k: int = 0, substeps: int = 8,
                u_low: SpectralField | None = None) -> SpaceTimeField:
    """w with (d_t + d_x^3) w = F_k(u_low + v) - d_x^3 u_low, w(0) = u0.

    The forcing is interpolated in time by cubics through the four nearest
    samples and integrated in the interaction picture with Simpson's rule
    on ``substeps`` subintervals per time step, so the result is fourth
    order in the time step and independent of the Duhamel quadrature.
    """
    if not isinstance(F, nl.PolynomialNonlinearity):
        F = nl.validate(F)
    grid = u0.grid
    times = v.times
    if u_low is None:
        fv = nl.evaluate_F(F, v, k).hat
    else:
        fv = (nl.evaluate_F(F, v + u_low, k) - deriv(u_low, 3)).hat
    xi3 = grid.xi ** 3
    out = np.empty_like(fv)
    out[0] = u0.hat
    g = u0.hat.copy()  # interaction variable exp(-i xi^3 t) w_hat
    n = times.size

    def forcing(t):
        m = int(np.clip(np.searchsorted(times, t, side="right") - 2, 0, max(n - 4, 0)))
        idx = np.arange(m, min(m + 4, n))
        f = _lagrange_weights(times[idx], t) @ fv[idx]
        return np.exp(-1j * xi3 * t) * f

    for m in range(1, n):
        h = (times[m] - times[m - 1]) / substeps
        t = times[m - 1]
        for _ in range(substeps):
            g = g + h / 6 * (forcing(t) + 4 * forcing(t + h / 2) + forcing(t + h))
            t += h
        out[m] = np.exp(1j * xi3 * times[m]) * g
    return SpaceTimeField(grid, times, out)
