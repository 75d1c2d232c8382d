"""The outer fixed-point map and the end-to-end solve pipeline.

Given rescaled data ``u0k = u_low + u_high`` the high-frequency remainder
``v`` solves

    (d_t + d_x^3 - T_{d_x a(v)} d_x^2) v = H(x, v),    v(0) = u_high,

and ``v`` is found as the fixed point of ``T: v -> w`` where ``w`` solves
the same linear problem with coefficient and right-hand side frozen at the
previous iterate.  Without bad terms ``a`` vanishes and ``T`` is the
plain Duhamel map.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import nonlinearity as nl
from .errors import AdmissionError, ConvergenceError, ThresholdError
from .linear_solver import airy_flow, airy_time_derivative, coefficient_time_operator, paradiff_solve
from .norms import l2hs_norm, l2xs_norm, l2ys_surrogate, norm_report
from .rescale import RescaleContext, choose_k, rescale_data, split_low_high, unrescale_solution
from .serialization import canonical_json
from .spectral_core import Grid, SpaceTimeField, SpectralField, band, deriv, paraproduct

logger = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "AdmissionReport",
    "ConvergenceTrace",
    "SolveResult",
    "OuterContext",
    "admission_check",
    "outer_map",
    "solve",
    "lipschitz_probe",
    "substitution_residual",
    "probe_battery",
]


@dataclass
class SolverConfig:
    s: float = 4.0
    n_times: int = 64
    k: int | None = None
    k_max: int = 8
    theta: float | None = None
    delta: float = 0.1
    outer_tol: float = 1e-7
    outer_max: int = 40
    inner_tol: float = 1e-8
    inner_max: int = 25
    n_cap: int | None = 4096
    threads: int = 1
    seed: int = 0
    battery_random: int = 8
    check_admission: bool = True
    use_reference: bool = False

    @property
    def theta_value(self) -> float:
        return 0.1 * self.delta if self.theta is None else self.theta


@dataclass(frozen=True, eq=False)
class OuterContext:
    """Everything the outer map needs besides the iterate."""

    F: nl.PolynomialNonlinearity
    k: int
    u_low: SpectralField
    u_high: SpectralField
    times: np.ndarray
    config: SolverConfig

    @property
    def grid(self) -> Grid:
        return self.u_low.grid

    @property
    def sigma(self) -> float:
        return nl.sigma_exponent(self.config.s, self.F, check=False)


@dataclass
class AdmissionReport:
    dx_a_norm: float
    para_surrogate: float
    delta: float

    @property
    def passed(self) -> bool:
        return self.dx_a_norm <= self.delta and self.para_surrogate <= self.delta

    def to_dict(self) -> dict:
        return {"dx_a_norm": self.dx_a_norm, "para_surrogate": self.para_surrogate,
                "delta": self.delta, "passed": self.passed}


@dataclass
class ConvergenceTrace:
    """One record per outer iteration."""

    records: list = field(default_factory=list)
    converged: bool = False

    @property
    def ratios(self) -> list:
        return [r["ratio"] for r in self.records if r.get("ratio") is not None]

    def to_jsonl(self) -> str:
        return "".join(canonical_json(r) + "\n" for r in self.records)


@functools.lru_cache(maxsize=16)
def _battery_cached(grid: Grid, times_key: tuple, s: float, seed: int, n_random: int):
    times = np.asarray(times_key)
    rng = np.random.default_rng(seed)
    fields = []
    for j in range(grid.j_max + 1):
        hat = np.fft.fft(rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points))
        z0 = band(SpectralField(grid, hat), j)
        fields.append(airy_flow(z0, times))
    decay = (1.0 + np.abs(grid.xi)) ** (-s - 1.0)
    for _ in range(n_random):
        hat = np.fft.fft(rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)) * decay
        fields.append(airy_flow(SpectralField(grid, hat), times))
    out = []
    for z in fields:
        nz = l2xs_norm(z, s)
        if nz > 0:
            out.append(z / nz)
    return out


def probe_battery(grid: Grid, times, s: float, seed: int = 0, n_random: int = 8):
    """Unit l2X^s test fields: one Airy wave per resolved band plus random ones."""
    return _battery_cached(grid, tuple(np.asarray(times, dtype=float)), float(s), int(seed), int(n_random))


def admission_check(v: SpaceTimeField, ctx: OuterContext) -> AdmissionReport:
    """Smallness of d_x a(v) in l2X^{sigma-1} and of the paraproduct surrogate."""
    F = ctx.F
    cfg = ctx.config
    if not F.has_bad_terms:
        return AdmissionReport(0.0, 0.0, cfg.delta)
    a = nl.coefficient_a(F, v, ctx.u_low, ctx.k)
    q1 = l2xs_norm(deriv(a, 1), ctx.sigma - 1.0)
    da = coefficient_time_operator(a)
    q2 = 0.0
    if np.any(da.hat):
        for z in probe_battery(ctx.grid, v.times, cfg.s, cfg.seed, cfg.battery_random):
            q2 = max(q2, l2ys_surrogate(paraproduct(da, z), cfg.s))
    return AdmissionReport(float(q1), float(q2), cfg.delta)


def outer_map(v: SpaceTimeField, ctx: OuterContext, check: bool | None = None):
    """One application of the solution map; returns ``(w, info)``."""
    F = ctx.F
    cfg = ctx.config
    check = cfg.check_admission if check is None else check
    info = {}
    if check and F.has_bad_terms:
        rep = admission_check(v, ctx)
        info["admission"] = rep.to_dict()
        if not rep.passed:
            raise AdmissionError("coefficient too large for the paradifferential solve",
                                 report=rep.to_dict())
    H = nl.assemble_H(F, v, ctx.u_low, ctx.k, threads=cfg.threads)
    cache = {}

    def a_of_band(j):
        key = max(j - 4, 0)
        if key not in cache:
            cache[key] = nl.coefficient_a(F, v, ctx.u_low, ctx.k, j)
        return cache[key]

    w, ptrace = paradiff_solve(ctx.u_high, H, a_of_band, tol=cfg.inner_tol, n_inner=cfg.inner_max,
                               threads=cfg.threads)
    info["paradiff_pair"] = ptrace.pair
    info["paradiff_floor"] = ptrace.floor
    return w, info


@dataclass
class SolveResult:
    solution: SpaceTimeField
    rescaled: SpaceTimeField
    v: SpaceTimeField
    u_low: SpectralField
    context: RescaleContext
    trace: ConvergenceTrace
    F: nl.PolynomialNonlinearity
    s: float

    @property
    def k(self) -> int:
        return self.context.k

    def norm_report(self, with_y: bool = False):
        return norm_report(self.v, self.s, with_y=with_y)


def _check_thresholds(F: nl.PolynomialNonlinearity, s: float):
    if not s > float(F.s0):
        raise ThresholdError(f"s = {s} must exceed s0 = {F.s0}", code="S_BELOW_THRESHOLD")
    nl.gamma_exponent(s, F.lam)
    nl.sigma_exponent(s, F)


def prepare(u0: SpectralField, F: nl.PolynomialNonlinearity, config: SolverConfig, k: int | None = None):
    """Choose k, rescale and split the data; returns ``(OuterContext, RescaleContext)``."""
    lam = float(F.lam)
    times = SpaceTimeField.unit_times(config.n_times)
    if k is None:
        k = config.k
    if k is None:
        def admit(kk):
            if not F.has_bad_terms or not config.check_admission:
                return True
            ctx = _context(u0, F, config, kk, times)
            zero = SpaceTimeField.zeros(ctx.grid, times)
            return admission_check(zero, ctx).passed

        k = choose_k(u0, config.s, lam, config.theta_value, config.k_max, config.n_cap, admit=admit)
    ctx = _context(u0, F, config, k, times)
    rctx = RescaleContext(k, lam, u0.grid, ctx.grid, config.theta_value)
    return ctx, rctx


def _context(u0, F, config, k, times) -> OuterContext:
    u0k = rescale_data(u0, k, float(F.lam), config.n_cap)
    low, high = split_low_high(u0k)
    return OuterContext(F, k, low, high, times, config)


def iterate(ctx: OuterContext, v_init: SpaceTimeField | None = None):
    """Run v^{(n+1)} = T(v^{(n)}) from v^{(-1)} = 0; returns ``(v, trace)``."""
    cfg = ctx.config
    grid = ctx.grid
    v = SpaceTimeField.zeros(grid, ctx.times) if v_init is None else v_init
    trace = ConvergenceTrace()
    scale = l2hs_norm(ctx.u_low + ctx.u_high, cfg.s)
    if scale == 0:
        trace.records.append({"n": 0, "v_norm": 0.0, "diff": 0.0, "ratio": None})
        trace.converged = True
        return v, trace
    prev_diff = None
    bad = 0
    for n in range(cfg.outer_max):
        w, info = outer_map(v, ctx)
        diff = l2xs_norm(w - v, cfg.s)
        ratio = diff / prev_diff if prev_diff else None
        rec = {"n": n, "v_norm": l2xs_norm(w, cfg.s), "diff": diff, "ratio": ratio,
               "paradiff_steps": len(info["paradiff_pair"]) - 1}
        if "admission" in info:
            rec["dx_a_norm"] = info["admission"]["dx_a_norm"]
            rec["para_surrogate"] = info["admission"]["para_surrogate"]
        trace.records.append(rec)
        logger.info("outer iteration %d: diff %.3e ratio %s", n, diff, ratio)
        v = w
        if diff < cfg.outer_tol * scale:
            trace.converged = True
            break
        if ratio is not None:
            bad = bad + 1 if ratio >= 1 else 0
            if bad >= 3:
                raise ConvergenceError("outer iteration diverges", code="OUTER_DIVERGENCE",
                                       trace=trace.records)
        prev_diff = diff
    return v, trace


def solve(u0: SpectralField, F, config: SolverConfig | None = None, k: int | None = None) -> SolveResult:
    """Solve (d_t + d_x^3) u = F(u, u_x, u_xx), u(0) = u0, on [0, 2^{-3k}]."""
    config = config or SolverConfig()
    if not isinstance(F, nl.PolynomialNonlinearity):
        F = nl.validate(F)
    _check_thresholds(F, config.s)
    if not np.any(u0.hat):
        k = 0 if k is None and config.k is None else (k if k is not None else config.k)
    ctx, rctx = prepare(u0, F, config, k)
    v, trace = iterate(ctx)
    U = v + ctx.u_low
    sol = unrescale_solution(v, ctx.u_low, rctx.k, rctx.lam, u0.grid)
    return SolveResult(sol, U, v, ctx.u_low, rctx, trace, F, config.s)


def substitution_residual(result: SolveResult) -> dict:
    """||(d_t + d_x^3) u - F(u)||_{L^2_{t,x}} in the rescaled and original frames."""
    F, k = result.F, result.k
    U = result.rescaled
    lhs = airy_time_derivative(result.v) + deriv(result.u_low, 3)
    res = lhs - nl.evaluate_F(F, U, k)
    r = res.l2()
    un = U.l2()
    lam = float(F.lam)
    r_orig = 2.0 ** ((1 - lam) * k) * r
    un_orig = 2.0 ** ((-lam - 2) * k) * un
    return {"residual": r, "u_norm": un, "relative": r / (1.0 + un),
            "residual_original": r_orig, "u_norm_original": un_orig,
            "relative_original": r_orig / (1.0 + un_orig)}


def lipschitz_probe(u0_a: SpectralField, u0_b: SpectralField, F, config: SolverConfig | None = None,
                    k: int | None = None) -> dict:
    """Difference ratio of the solution map at a common rescaling level.

    Returns ``ratio`` (rescaled solution over rescaled data) and
    ``v_ratio`` (high-frequency remainders only).
    """
    config = config or SolverConfig()
    if not isinstance(F, nl.PolynomialNonlinearity):
        F = nl.validate(F)
    if k is None:
        k = config.k
    if k is None:
        k = prepare(u0_a, F, config)[1].k
    ra = solve(u0_a, F, config, k=k)
    rb = solve(u0_b, F, config, k=k)
    lam = float(F.lam)
    d0 = l2hs_norm(rescale_data(u0_a - u0_b, k, lam, config.n_cap), config.s)
    du = l2xs_norm(ra.rescaled - rb.rescaled, config.s)
    dv = l2xs_norm(ra.v - rb.v, config.s)
    if d0 == 0:
        return {"ratio": 0.0, "v_ratio": 0.0, "identical": True, "k": k}
    return {"ratio": du / d0, "v_ratio": dv / d0, "identical": False, "k": k,
            "data_diff": d0, "solution_diff": du}
