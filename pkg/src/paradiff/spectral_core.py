"""Periodic grids, Fourier-side fields and Littlewood-Paley calculus.

Frequency coefficients are stored in numpy FFT order and are canonical;
physical samples are produced on demand.  All multipliers used by the
projectors are built from one cutoff profile ``phi0`` so that the
identities between them (telescoping, widening) hold bit-for-bit on the
grid.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatchError, ResolutionError

__all__ = [
    "Grid",
    "SpectralField",
    "SpaceTimeField",
    "LPSymbolTable",
    "phi0",
    "lp_symbol",
    "symbol_table",
    "project_band",
    "project_below",
    "project_at_least",
    "project_wide",
    "paraproduct",
    "derivative",
    "deriv",
    "band",
    "below",
    "wide",
]


def _h(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def phi0(xi):
    """Smooth cutoff: 1 on [-1, 1], 0 for |xi| >= 2, C-infinity in between."""
    a = np.abs(np.asarray(xi, dtype=float))
    out = np.where(a <= 1.0, 1.0, 0.0)
    mid = (a > 1.0) & (a < 2.0)
    if np.any(mid):
        up = _h(2.0 - a[mid])
        down = _h(a[mid] - 1.0)
        out[mid] = up / (up + down)
    if np.ndim(xi) == 0:
        return float(out)
    return out


def lp_symbol(j: int, xi):
    """Littlewood-Paley weight of band ``j`` at frequency ``xi``."""
    if j < 0:
        raise ValueError(f"band index must be >= 0, got {j}")
    if j == 0:
        return phi0(xi)
    return phi0(np.ldexp(xi, -j)) - phi0(np.ldexp(xi, -j + 1))


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L/2, L/2) with ``n_points`` samples."""

    n_points: int
    length: float

    def __post_init__(self):
        n = self.n_points
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two, got {n}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.n_points)

    @cached_property
    def xi(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def xi_max(self) -> float:
        return np.pi * self.n_points / self.length

    @property
    def j_max(self) -> int:
        """Largest band whose annulus lies well inside the resolved range."""
        return int(math.floor(math.log2(self.xi_max))) - 1

    @property
    def j_top(self) -> int:
        """Last band with a nonzero symbol somewhere on the grid.

        Bands ``0..j_top`` sum to exactly one on every grid frequency;
        bands above ``j_max`` are only partially resolved.
        """
        if self.xi_max <= 1.0:
            return 0
        return int(math.ceil(math.log2(self.xi_max)))

    def check_same(self, other: "Grid"):
        if self != other:
            raise GridMismatchError(f"{self} vs {other}")


class _FieldOps:
    """Arithmetic shared by single-slice and space-time fields."""

    def with_hat(self, hat):
        raise NotImplementedError

    def _other_hat(self, other):
        if isinstance(other, _FieldOps):
            self.grid.check_same(other.grid)
            return other.hat
        return None

    def __add__(self, other):
        h = self._other_hat(other)
        if h is None:
            return self + self.constant_like(other)
        return self.with_hat(self.hat + h)

    __radd__ = __add__

    def __sub__(self, other):
        h = self._other_hat(other)
        if h is None:
            return self - self.constant_like(other)
        return self.with_hat(self.hat - h)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self.with_hat(-self.hat)

    def __mul__(self, other):
        if isinstance(other, _FieldOps):
            self.grid.check_same(other.grid)
            return self.from_values_like(self.values * other.values)
        return self.with_hat(self.hat * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_hat(self.hat / scalar)

    def constant_like(self, c):
        hat = np.zeros_like(self.hat, dtype=complex)
        hat[..., 0] = c * self.grid.n_points
        return self.with_hat(hat)

    def exp(self):
        return self.from_values_like(np.exp(self.values))


@dataclass(frozen=True, eq=False)
class SpectralField(_FieldOps):
    """One time slice: complex samples on ``grid`` held by their FFT."""

    grid: Grid
    hat: np.ndarray

    @classmethod
    def from_values(cls, grid: Grid, values) -> "SpectralField":
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} samples, got {values.shape}")
        return cls(grid, np.fft.fft(values))

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.n_points, dtype=complex))

    @classmethod
    def mode(cls, grid: Grid, m: int, amplitude=1.0) -> "SpectralField":
        """``amplitude * exp(i xi_m x)`` for the integer wavenumber ``m``."""
        return cls.from_values(grid, amplitude * np.exp(2j * np.pi * m * (grid.x + 0.5 * grid.length) / grid.length))

    @cached_property
    def values(self) -> np.ndarray:
        return np.fft.ifft(self.hat)

    def with_hat(self, hat):
        return SpectralField(self.grid, hat)

    def from_values_like(self, values):
        return SpectralField.from_values(self.grid, values)

    def norm(self) -> float:
        """L2 norm via Parseval."""
        return math.sqrt(self.grid.length * np.sum(np.abs(self.hat) ** 2)) / self.grid.n_points

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class SpaceTimeField(_FieldOps):
    """A field sampled on a uniform grid of times covering [0, 1].

    ``hat`` has shape ``(len(times), n_points)``.
    """

    grid: Grid
    times: np.ndarray
    hat: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("time samples must be strictly increasing")
        if self.hat.shape != (t.size, self.grid.n_points):
            raise ValueError(f"hat shape {self.hat.shape} does not match grid/times")

    @staticmethod
    def unit_times(n_steps: int) -> np.ndarray:
        return np.linspace(0.0, 1.0, n_steps + 1)

    @classmethod
    def from_values(cls, grid: Grid, times, values) -> "SpaceTimeField":
        values = np.asarray(values, dtype=complex)
        return cls(grid, np.asarray(times, dtype=float), np.fft.fft(values, axis=-1))

    @classmethod
    def zeros(cls, grid: Grid, times) -> "SpaceTimeField":
        times = np.asarray(times, dtype=float)
        return cls(grid, times, np.zeros((times.size, grid.n_points), dtype=complex))

    @classmethod
    def constant_in_time(cls, field: SpectralField, times) -> "SpaceTimeField":
        times = np.asarray(times, dtype=float)
        return cls(field.grid, times, np.tile(field.hat, (times.size, 1)))

    @classmethod
    def from_slices(cls, slices, times) -> "SpaceTimeField":
        slices = list(slices)
        return cls(slices[0].grid, np.asarray(times, dtype=float), np.stack([s.hat for s in slices]))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_times(self) -> int:
        return self.times.size

    @cached_property
    def values(self) -> np.ndarray:
        return np.fft.ifft(self.hat, axis=-1)

    def with_hat(self, hat):
        return SpaceTimeField(self.grid, self.times, hat)

    def from_values_like(self, values):
        return SpaceTimeField.from_values(self.grid, self.times, values)

    def slice(self, m: int) -> SpectralField:
        return SpectralField(self.grid, self.hat[m])

    @property
    def initial(self) -> SpectralField:
        return self.slice(0)

    @property
    def slices(self):
        return [self.slice(m) for m in range(self.n_times)]

    def check_compatible(self, other: "SpaceTimeField"):
        self.grid.check_same(other.grid)
        if self.times.shape != other.times.shape or not np.array_equal(self.times, other.times):
            raise GridMismatchError("time grids differ")

    def __add__(self, other):
        if isinstance(other, SpaceTimeField):
            self.check_compatible(other)
        elif isinstance(other, SpectralField):
            other = SpaceTimeField.constant_in_time(other, self.times)
        return _FieldOps.__add__(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, SpaceTimeField):
            self.check_compatible(other)
        elif isinstance(other, SpectralField):
            other = SpaceTimeField.constant_in_time(other, self.times)
        return _FieldOps.__sub__(self, other)

    def __mul__(self, other):
        if isinstance(other, SpaceTimeField):
            self.check_compatible(other)
        elif isinstance(other, SpectralField):
            other = SpaceTimeField.constant_in_time(other, self.times)
        return _FieldOps.__mul__(self, other)

    __rmul__ = __mul__

    def l2_slices(self) -> np.ndarray:
        """Spatial L2 norm of every time slice."""
        g = self.grid
        return np.sqrt(g.length * np.sum(np.abs(self.hat) ** 2, axis=-1)) / g.n_points

    def sup_l2(self) -> float:
        """L-infinity in time of the spatial L2 norm."""
        return float(np.max(self.l2_slices()))

    def l2(self) -> float:
        """L2 over [0, 1] x box, trapezoid rule in time."""
        return math.sqrt(float(np.trapezoid(self.l2_slices() ** 2, self.times)))

    def l1_l2(self) -> float:
        return float(np.trapezoid(self.l2_slices(), self.times))


@dataclass(frozen=True)
class LPSymbolTable:
    """Per-band symbols sampled on the frequencies of ``grid``."""

    grid: Grid

    @cached_property
    def phi(self) -> np.ndarray:
        xi = self.grid.xi
        return np.stack([lp_symbol(j, xi) for j in range(self.grid.j_top + 1)])

    def band(self, j: int) -> np.ndarray:
        if j < 0:
            return np.zeros(self.grid.n_points)
        if j > self.grid.j_top:
            return np.zeros(self.grid.n_points)
        return self.phi[j]

    def below(self, j: int) -> np.ndarray:
        """Multiplier of S_{<j}: the telescoped cutoff phi0(2^{-(j-1)} xi)."""
        if j <= 0:
            return np.zeros(self.grid.n_points)
        return phi0(np.ldexp(self.grid.xi, -(j - 1)))

    def at_least(self, j: int) -> np.ndarray:
        return 1.0 - self.below(j)

    def wide(self, j: int, extra: int = 0) -> np.ndarray:
        """Widened band multiplier, equal to one on the support of band ``j``.

        ``extra`` adds further dyadic widenings (``extra=1`` gives the doubly
        widened projector).
        """
        w = 1 + extra
        xi = self.grid.xi
        upper = phi0(np.ldexp(xi, -j - w))
        if j == 0:
            return upper
        return upper - phi0(np.ldexp(xi, -j + 1 + w))


@functools.lru_cache(maxsize=64)
def symbol_table(grid: Grid) -> LPSymbolTable:
    return LPSymbolTable(grid)


def _apply(u, mult):
    return u.with_hat(u.hat * mult)


def _check_resolved(grid: Grid, j: int):
    if j < 0 or j > grid.j_max:
        raise ResolutionError(f"band {j} outside resolved range 0..{grid.j_max}")


# Unchecked projectors used internally; they cover the partially resolved
# top bands so that band sums reproduce any grid field exactly.
def band(u, j: int):
    return _apply(u, symbol_table(u.grid).band(j))


def below(u, j: int):
    return _apply(u, symbol_table(u.grid).below(j))


def wide(u, j: int, extra: int = 0):
    return _apply(u, symbol_table(u.grid).wide(j, extra))


def project_band(u, j: int):
    """S_j u; rejects bands beyond ``grid.j_max``."""
    _check_resolved(u.grid, j)
    return band(u, j)


def project_below(u, j: int):
    """S_{<j} u (zero for j <= 0)."""
    return below(u, j)


def project_at_least(u, j: int):
    """S_{>=j} u = u - S_{<j} u."""
    return _apply(u, symbol_table(u.grid).at_least(j))


def project_wide(u, j: int, extra: int = 0):
    """Widened projector with S_j S~_j = S~_j S_j = S_j."""
    _check_resolved(u.grid, j)
    return wide(u, j, extra)


def paraproduct(a: SpaceTimeField, u: SpaceTimeField) -> SpaceTimeField:
    """T_a u = sum_j S_{<j-4} a * S_j u, summed in increasing band order."""
    if isinstance(a, SpaceTimeField) and isinstance(u, SpaceTimeField):
        a.check_compatible(u)
    else:
        a.grid.check_same(u.grid)
    out = u.with_hat(np.zeros_like(u.hat))
    for j in range(5, u.grid.j_top + 1):
        out = out + below(a, j - 4) * band(u, j)
    return out


@functools.lru_cache(maxsize=64)
def _deriv_symbol(grid: Grid, order: int) -> np.ndarray:
    return (1j * grid.xi) ** order


def deriv(u, order: int):
    """Spectral derivative of any nonnegative order (internal use)."""
    if order == 0:
        return u
    return _apply(u, _deriv_symbol(u.grid, order))


def derivative(u, order: int):
    """Spectral derivative of order 1, 2 or 3."""
    if order not in (1, 2, 3):
        raise ValueError(f"unsupported derivative order {order}")
    return deriv(u, order)
