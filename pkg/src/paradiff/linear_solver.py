"""Airy propagation, Duhamel quadrature and the conjugated band solves.

Time stepping works in the interaction picture ``W(t) = e^{-t dx^3} w(t)``:
the dispersive part is applied exactly as a Fourier multiplier and only
``e^{-t dx^3} f`` is integrated numerically, with a fourth-order cumulative
rule on the uniform time grid.  The matching time derivative is a
fourth-order finite difference of ``W``, so

    (d_t + d_x^3) w = e^{t dx^3} d_t W

is evaluated without differentiating the fast Airy phase.

For a frequency-frozen coefficient ``a`` the band equation

    (d_t + d_x^3 - d_x a d_x^2) u_j = f_j

is solved approximately by ``u_j ~ e^{a/3} v_j`` with ``v_j`` an Airy
solution, then corrected by iterating on the residual.
"""

from __future__ import annotations

import functools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .spectral_core import Grid, SpaceTimeField, SpectralField, band, below, deriv, symbol_table, wide

logger = logging.getLogger(__name__)

__all__ = [
    "airy_evolve",
    "airy_flow",
    "duhamel_solve",
    "time_derivative",
    "airy_time_derivative",
    "BandSystem",
    "band_system",
    "CorrectionTrace",
    "conjugated_band_solve",
    "coefficient_time_operator",
    "remainder_R",
    "remainder_r",
    "band_residual",
    "band_airy_operator",
    "band_correction_iterate",
    "assemble_paradiff_solution",
    "paradiff_residual",
    "ParadiffTrace",
    "paradiff_solve",
]


def _cube(grid: Grid) -> np.ndarray:
    return grid.xi ** 3


def _phase(grid: Grid, times) -> np.ndarray:
    """e^{i xi^3 t} for every (t, xi)."""
    return np.exp(1j * np.outer(np.asarray(times, dtype=float), _cube(grid)))


def airy_evolve(u: SpectralField, t: float) -> SpectralField:
    """Solution of (d_t + d_x^3) w = 0, w(0) = u, at time ``t``."""
    return u.with_hat(u.hat * np.exp(1j * _cube(u.grid) * t))


def airy_flow(u0: SpectralField, times) -> SpaceTimeField:
    times = np.asarray(times, dtype=float)
    return SpaceTimeField(u0.grid, times, u0.hat[None, :] * _phase(u0.grid, times))


def _cumulative_quadrature(g: np.ndarray, dt: float) -> np.ndarray:
    """int_0^{t_m} g for every node m, fourth order on a uniform grid.

    Each interval uses the cubic through its four nearest nodes.
    """
    m = g.shape[0] - 1
    out = np.zeros_like(g)
    if m == 0:
        return out
    if m < 3:
        incr = 0.5 * dt * (g[1:] + g[:-1])
        out[1:] = np.cumsum(incr, axis=0)
        return out
    incr = np.empty((m,) + g.shape[1:], dtype=g.dtype)
    incr[0] = dt / 24.0 * (9 * g[0] + 19 * g[1] - 5 * g[2] + g[3])
    incr[1:m - 1] = dt / 24.0 * (-g[0:m - 2] + 13 * g[1:m - 1] + 13 * g[2:m] - g[3:m + 1])
    incr[m - 1] = dt / 24.0 * (g[m - 3] - 5 * g[m - 2] + 19 * g[m - 1] + 9 * g[m])
    out[1:] = np.cumsum(incr, axis=0)
    return out


def duhamel_solve(u0: SpectralField, f: SpaceTimeField) -> SpaceTimeField:
    """w(t) = e^{-t dx^3} u0 + int_0^t e^{-(t-s) dx^3} f(s) ds on the time grid of ``f``."""
    u0.grid.check_same(f.grid)
    ph = _phase(f.grid, f.times)
    integral = _cumulative_quadrature(np.conj(ph) * f.hat, f.dt)
    return f.with_hat(ph * (u0.hat[None, :] + integral))


def _fd_first(y: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order first derivative along axis 0 (five-point stencils)."""
    m = y.shape[0] - 1
    if m < 4:
        return np.gradient(y, dt, axis=0, edge_order=2)
    d = np.empty_like(y)
    d[2:m - 1] = (y[0:m - 3] - 8 * y[1:m - 2] + 8 * y[3:m] - y[4:m + 1]) / (12 * dt)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * dt)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * dt)
    d[m - 1] = (3 * y[m] + 10 * y[m - 1] - 18 * y[m - 2] + 6 * y[m - 3] - y[m - 4]) / (12 * dt)
    d[m] = (25 * y[m] - 48 * y[m - 1] + 36 * y[m - 2] - 16 * y[m - 3] + 3 * y[m - 4]) / (12 * dt)
    return d


def time_derivative(u: SpaceTimeField) -> SpaceTimeField:
    return u.with_hat(_fd_first(u.hat, u.dt))


def airy_time_derivative(w: SpaceTimeField) -> SpaceTimeField:
    """(d_t + d_x^3) w through the interaction picture."""
    ph = _phase(w.grid, w.times)
    return w.with_hat(ph * _fd_first(np.conj(ph) * w.hat, w.dt))


def coefficient_time_operator(g: SpaceTimeField) -> SpaceTimeField:
    """(d_t + d_x^3) g with a plain time difference.

    Meant for the slowly varying coefficient fields, whose time dependence
    is not dominated by the Airy phase.
    """
    return time_derivative(g) + deriv(g, 3)


def remainder_R(g: SpaceTimeField, h: SpaceTimeField) -> SpaceTimeField:
    """Error term of the conjugation by e^{g/3}.

    (d_t + d_x^3 - g_x d_x^2)(e^{g/3} w) = e^{g/3}(d_t + d_x^3) w + R(g, e^{g/3} w).
    """
    gx, gxx = deriv(g, 1), deriv(g, 2)
    dg = coefficient_time_operator(g)
    c0 = dg / 3.0 - gx * gxx / 3.0 + gx * gx * gx / 27.0
    c1 = gxx - gx * gx / 3.0
    return c0 * h + c1 * deriv(h, 1)


def remainder_r(a: SpaceTimeField, v: SpaceTimeField) -> SpaceTimeField:
    """e^{-a/3} R(a, e^{a/3} v), written in terms of v."""
    ax, axx = deriv(a, 1), deriv(a, 2)
    da = coefficient_time_operator(a)
    c0 = da / 3.0 - 2.0 * ax * ax * ax / 27.0
    c1 = axx - ax * ax / 3.0
    return c0 * v + c1 * deriv(v, 1)


@dataclass(frozen=True, eq=False)
class BandSystem:
    """Inputs of one frequency-localized solve at band ``j``."""

    j: int
    u0j: SpectralField
    fj: SpaceTimeField
    a_low: SpaceTimeField
    exp_plus: SpaceTimeField
    exp_minus: SpaceTimeField
    extra_widening: int = 1

    @property
    def trivial(self) -> bool:
        return not np.any(self.a_low.hat)

    def with_inputs(self, u0j, fj) -> "BandSystem":
        return BandSystem(self.j, u0j, fj, self.a_low, self.exp_plus, self.exp_minus, self.extra_widening)

    @functools.cached_property
    def conj_data(self) -> SpectralField:
        """S_{<j-4} e^{-a(0)/3}; the cutoff is kept at least S_0 so constants survive."""
        return below(self.exp_minus.initial, max(self.j - 4, 1))

    @functools.cached_property
    def conj_forcing(self) -> SpaceTimeField:
        return below(self.exp_minus, max(self.j - 4, 1))

    @functools.cached_property
    def a_derivs(self):
        a = self.a_low
        return deriv(a, 1), deriv(a, 2), coefficient_time_operator(a)


def band_system(j: int, u0: SpectralField, f: SpaceTimeField, a_low: SpaceTimeField,
                project: bool = True, extra_widening: int = 1) -> BandSystem:
    """Build the band-``j`` system; ``project`` applies S_j to data and forcing."""
    if project:
        u0, f = band(u0, j), band(f, j)
    if np.any(a_low.hat):
        ep, em = (a_low / 3.0).exp(), (a_low / -3.0).exp()
    else:
        one = a_low.constant_like(1.0)
        ep, em = one, one
    return BandSystem(j, u0, f, a_low, ep, em, extra_widening)


def conjugated_band_solve(sys: BandSystem) -> SpaceTimeField:
    """Approximate band solution wide_j(e^{a/3} v_j) with v_j an Airy solution."""
    if sys.trivial:
        v = duhamel_solve(sys.u0j, sys.fj)
        return wide(v, sys.j, sys.extra_widening)
    data = sys.conj_data * sys.u0j
    forcing = sys.conj_forcing * sys.fj
    v = duhamel_solve(data, forcing)
    return wide(sys.exp_plus * v, sys.j, sys.extra_widening)


def band_airy_operator(u: SpaceTimeField, sys: BandSystem) -> SpaceTimeField:
    """(d_t + d_x^3 - d_x a d_x^2) u with a = ``sys.a_low``.

    Uses the conjugated form e^{a/3} (d_t + d_x^3)(e^{-a/3} u) + R(a, u), which
    only differentiates the slowly varying interaction variable in time.
    """
    if sys.trivial:
        return airy_time_derivative(u)
    ax, axx, da = sys.a_derivs
    inner = airy_time_derivative(sys.exp_minus * u)
    c0 = da / 3.0 - ax * axx / 3.0 + ax * ax * ax / 27.0
    c1 = axx - ax * ax / 3.0
    return sys.exp_plus * inner + c0 * u + c1 * deriv(u, 1)


def band_residual(u_j: SpaceTimeField, sys: BandSystem) -> SpaceTimeField:
    """(d_t + d_x^3 - d_x a_{<j-4} d_x^2) u_j - f_j."""
    return band_airy_operator(u_j, sys) - sys.fj


@dataclass
class CorrectionTrace:
    """Norms of the correction series; ``pair`` is ||u0||_L2 + ||f||_{L1 L2}."""

    j: int
    u_norms: list = field(default_factory=list)
    f_norms: list = field(default_factory=list)
    u0_norms: list = field(default_factory=list)
    pair: list = field(default_factory=list)
    converged: bool = False
    floor: bool = False

    @property
    def ratios(self) -> list:
        p = self.pair
        return [p[i + 1] / p[i] if p[i] > 0 else 0.0 for i in range(len(p) - 1)]

    def to_dict(self) -> dict:
        return {"j": self.j, "u_norms": self.u_norms, "f_norms": self.f_norms,
                "u0_norms": self.u0_norms, "pair": self.pair, "ratios": self.ratios,
                "converged": self.converged, "floor": self.floor}


def _pair(u0: SpectralField, f: SpaceTimeField):
    a, b = u0.norm(), f.l1_l2()
    return a, b, a + b


@functools.lru_cache(maxsize=256)
def _flat_mask_cached(grid: Grid, j: int, extra: int) -> np.ndarray:
    return (symbol_table(grid).wide(j, extra) == 1.0).astype(float)


def _flat_mask(grid: Grid, j: int, extra: int) -> np.ndarray:
    """Indicator of the frequencies where the widened projector equals one."""
    return _flat_mask_cached(grid, j, extra)


def band_correction_iterate(sys: BandSystem, n_max: int = 25, tol: float = 1e-8,
                            scale: float | None = None, floor_ratio: float = 0.7):
    """Sum the correction series for one band.

    Stops once the residual pair drops below ``tol * scale`` (``scale``
    defaults to the initial pair), or when two successive ratios exceed
    ``floor_ratio``, which happens once the residual is dominated by the
    time discretization error (``trace.floor`` is then set).  Raises ``ConvergenceError`` with code
    ``NO_CONTRACTION`` after three successive non-decreasing steps.
    """
    trace = CorrectionTrace(sys.j)
    a, b, p = _pair(sys.u0j, sys.fj)
    trace.u0_norms.append(a)
    trace.f_norms.append(b)
    trace.pair.append(p)
    total = sys.fj.with_hat(np.zeros_like(sys.fj.hat))
    if p == 0:
        trace.converged = True
        return total, trace
    target = tol * (p if scale is None else scale)
    if p <= target:
        # already negligible: one approximate solve is enough
        n_max = 1
    mask = _flat_mask(sys.fj.grid, sys.j, sys.extra_widening)
    cur = sys
    stalls = 0
    for _ in range(n_max):
        ut = conjugated_band_solve(cur)
        total = total + ut
        trace.u_norms.append(ut.sup_l2())
        if not np.isfinite(tol):
            trace.converged = True
            break
        # only the part the band can reproduce exactly is fed back; the rest
        # of the residual is left to the global correction loop
        f_next = -band_residual(ut, cur)
        f_next = f_next.with_hat(f_next.hat * mask)
        u0_next = cur.u0j - ut.initial
        u0_next = u0_next.with_hat(u0_next.hat * mask)
        cur = cur.with_inputs(u0_next, f_next)
        a, b, p = _pair(u0_next, f_next)
        trace.u0_norms.append(a)
        trace.f_norms.append(b)
        trace.pair.append(p)
        if p <= target:
            trace.converged = True
            break
        stalls = stalls + 1 if p >= trace.pair[-2] else 0
        if stalls >= 3:
            raise ConvergenceError(f"band {sys.j} correction series stalled", code="NO_CONTRACTION",
                                   trace=trace.to_dict())
        r = trace.ratios
        if len(r) >= 3 and min(r[-2:]) > floor_ratio:
            # the time discretization floor has been reached
            trace.floor = True
            break
    return total, trace


def assemble_paradiff_solution(bands) -> SpaceTimeField:
    """Sum of band solutions in increasing band order."""
    bands = list(bands)
    hat = np.zeros_like(bands[0].hat)
    for u in bands:
        hat = hat + u.hat
    return bands[0].with_hat(hat)


def paradiff_residual(bands, systems, f: SpaceTimeField) -> SpaceTimeField:
    """(d_t + d_x^3 - sum_j d_x a_{<j-4} S_j d_x^2) sum_k u_k - f.

    The time part of every ``u_k`` is evaluated with its own conjugation.
    """
    w = assemble_paradiff_solution(bands)
    wxx = deriv(w, 2)
    hat = -f.hat.copy()
    for u, sys in zip(bands, systems):
        dt_part = band_airy_operator(u, sys)
        if not sys.trivial:
            ax = sys.a_derivs[0]
            dt_part = dt_part + ax * deriv(u, 2) - ax * band(wxx, sys.j)
        hat = hat + dt_part.hat
    return f.with_hat(hat)


@dataclass
class ParadiffTrace:
    """Outer correction history of a paradifferential solve."""

    pair: list = field(default_factory=list)
    band_traces: list = field(default_factory=list)
    floor: bool = False

    @property
    def ratios(self) -> list:
        p = self.pair
        return [p[i + 1] / p[i] if p[i] > 0 else 0.0 for i in range(len(p) - 1)]


def _map_bands(fn, js, threads: int):
    if threads > 1 and len(js) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, js))
    return [fn(j) for j in js]


def paradiff_solve(u0: SpectralField, f: SpaceTimeField, a_of_band, n_outer: int = 25,
                   tol: float = 1e-8, n_inner: int = 25, threads: int = 1, floor_ratio: float = 0.7):
    """Solve (d_t + d_x^3 - T_{d_x a} d_x^2) w = f, w(0) = u0.

    ``a_of_band(j)`` returns the frozen coefficient a_{<j-4}.  Band solutions
    are assembled, the global residual is fed back as new data and forcing,
    and the process repeats until the residual pair is below ``tol`` times
    the initial one.
    """
    js = list(range(f.grid.j_top + 1))
    coeffs = {j: a_of_band(j) for j in js}
    exps = {}
    for j in js:
        key = id(coeffs[j])
        if key not in exps:
            exps[key] = band_system(j, u0, f, coeffs[j], project=False)

    def system(j, data, forcing):
        base = exps[id(coeffs[j])]
        return BandSystem(j, band(data, j), band(forcing, j), base.a_low, base.exp_plus,
                          base.exp_minus, base.extra_widening)

    trace = ParadiffTrace()
    _, _, p0 = _pair(u0, f)
    trace.pair.append(p0)
    w = f.with_hat(np.zeros_like(f.hat))
    if p0 == 0:
        return w, trace
    data, forcing = u0, f
    all_trivial = all(exps[id(coeffs[j])].trivial for j in js)
    if all_trivial:
        # no coefficient: the band solves reduce to one Duhamel solve
        return duhamel_solve(u0, f), trace
    stalls = 0
    for _ in range(n_outer):
        systems = [system(j, data, forcing) for j in js]

        def solve_one(idx):
            return band_correction_iterate(systems[idx], n_max=n_inner, tol=tol, scale=p0)

        results = _map_bands(solve_one, list(range(len(js))), threads)
        bands = [r[0] for r in results]
        trace.band_traces.append([r[1] for r in results])
        wn = assemble_paradiff_solution(bands)
        w = w + wn
        res = paradiff_residual(bands, systems, forcing)
        forcing = -res
        data = data - wn.initial
        _, _, p = _pair(data, forcing)
        trace.pair.append(p)
        if p <= tol * p0:
            break
        stalls = stalls + 1 if p >= trace.pair[-2] else 0
        if stalls >= 3:
            raise ConvergenceError("paradifferential correction stalled", code="NO_CONTRACTION",
                                   pair=trace.pair)
        r = trace.ratios
        if len(r) >= 2 and min(r[-2:]) > floor_ratio:
            trace.floor = True
            break
    return w, trace
