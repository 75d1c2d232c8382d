"""Mizohata integral and randomized probes of the function-space estimates.

Each probe draws random fields with the frequency pattern of one estimate,
evaluates both sides (Y norms through the windowed-cube surrogate) and
records LHS / RHS.  Probes report empirical constants; they do not decide
whether an estimate holds.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import UnknownTagError
from .linear_solver import airy_flow
from .nonlinearity import commutator_term
from .norms import l2_partition_norm, l2hs_norm, l2xs_norm, l2ys_surrogate
from .spectral_core import Grid, SpaceTimeField, SpectralField, band, below, deriv, project_at_least, wide

__all__ = [
    "mizohata_integral",
    "ProbeResult",
    "ProbeContext",
    "probe_estimate",
    "PROBE_TAGS",
    "DEFAULT_PROBE_GRID",
]

DEFAULT_PROBE_GRID = Grid(512, 8.0)


def mizohata_integral(a: SpectralField) -> float:
    """sup over x1 <= x2 of Re int_{x1}^{x2} a dx on one period (trapezoid rule)."""
    x = a.grid.x
    prefix = cumulative_trapezoid(np.real(a.values), x, initial=0.0)
    running_min = np.minimum.accumulate(prefix)
    return float(max(np.max(prefix - running_min), 0.0))


@dataclass
class ProbeResult:
    tag: str
    trials: int
    seed: int
    ratios: list
    params: dict = field(default_factory=dict)

    @property
    def median(self) -> float:
        return float(np.median(self.ratios))

    @property
    def max(self) -> float:
        return float(np.max(self.ratios))

    @property
    def max_over_median(self) -> float:
        med = self.median
        return self.max / med if med > 0 else math.inf

    def to_dict(self) -> dict:
        return {"tag": self.tag, "trials": self.trials, "seed": self.seed,
                "ratios": [float(r) for r in self.ratios], "median": self.median,
                "max": self.max, "max_over_median": self.max_over_median,
                "params": dict(self.params)}


@dataclass(frozen=True)
class ProbeContext:
    grid: Grid
    times: np.ndarray
    params: dict

    @property
    def j(self) -> int:
        return int(self.params["j"])

    def p(self, key):
        return self.params[key]


# random fields -------------------------------------------------------------

def _noise(rng, grid: Grid) -> SpectralField:
    return SpectralField.from_values(grid, rng.standard_normal(grid.n_points))


def _unit(u):
    n = u.sup_l2() if isinstance(u, SpaceTimeField) else u.norm()
    return u / n if n > 0 else u


def band_wave(rng, ctx: ProbeContext, j: int) -> SpaceTimeField:
    """Airy evolution of real Gaussian noise localized to band j."""
    return _unit(airy_flow(band(_noise(rng, ctx.grid), j), ctx.times))


def smooth_wave(rng, ctx: ProbeContext, decay: float = 2.0) -> SpaceTimeField:
    """Airy evolution of real noise with Sobolev-type decay (1 + |xi|)^-decay."""
    g = ctx.grid
    hat = _noise(rng, g).hat * (1.0 + np.abs(g.xi)) ** (-decay)
    return _unit(airy_flow(SpectralField(g, hat), ctx.times))


def band_forcing(rng, ctx: ProbeContext, j: int) -> SpaceTimeField:
    """Real space-time noise localized to band j, independent across time samples."""
    g = ctx.grid
    vals = rng.standard_normal((ctx.times.size, g.n_points))
    return _unit(band(SpaceTimeField.from_values(g, ctx.times, vals), j))


def _linf_hs(u: SpaceTimeField, s: float) -> float:
    """l^2 L^inf_t H^s_x: bands measured in l^2_{2j} L^inf_t L^2_x."""
    return float(np.sqrt(sum(
        (2.0 ** (j * s) * l2_partition_norm(band(u, j), 2 * j, "LinfL2")) ** 2
        for j in range(u.grid.j_top + 1))))


# the estimates ---------------------------------------------------------------

def _alg(rng, ctx):
    s = ctx.p("s")
    u, v = smooth_wave(rng, ctx), smooth_wave(rng, ctx)
    return l2xs_norm(u * v, s), l2xs_norm(u, s) * l2xs_norm(v, s)


def _halg(rng, ctx):
    s = ctx.p("s")
    u, v = smooth_wave(rng, ctx).initial, smooth_wave(rng, ctx).initial
    return l2hs_norm(u * v, s), l2hs_norm(u, s) * l2hs_norm(v, s)


def _bil(rng, ctx):
    s, al, be = ctx.p("s"), ctx.p("alpha"), ctx.p("beta")
    u, v = smooth_wave(rng, ctx), smooth_wave(rng, ctx)
    return l2ys_surrogate(u * v, s), l2xs_norm(u, al) * l2xs_norm(v, be)


def _bil_lh(rng, ctx):
    s, al, be, j = ctx.p("s"), ctx.p("alpha"), ctx.p("beta"), ctx.j
    u, vj = smooth_wave(rng, ctx), band_wave(rng, ctx, j)
    return l2ys_surrogate(below(u, j - 4) * vj, s), l2xs_norm(u, al) * l2xs_norm(vj, be)


def _bil_hh(rng, ctx):
    s, al, be, j = ctx.p("s"), ctx.p("alpha"), ctx.p("beta"), ctx.j
    u, v = smooth_wave(rng, ctx), smooth_wave(rng, ctx)
    lhs = l2ys_surrogate(band(project_at_least(u, j - 4) * project_at_least(v, j - 4), j), s)
    return lhs, 2.0 ** ((s + 0.5 - al - be) * j) * l2xs_norm(u, al) * l2xs_norm(v, be)


def _lh_bil_h(rng, ctx):
    s, sig, j = ctx.p("s"), ctx.p("sigma"), ctx.j
    u, vj = smooth_wave(rng, ctx).initial, band_wave(rng, ctx, j).initial
    return l2hs_norm(below(u, j - 4) * vj, s), l2hs_norm(u, sig) * l2hs_norm(vj, s)


def _lh_bil_x(rng, ctx):
    s, sig, j = ctx.p("s"), ctx.p("sigma"), ctx.j
    u, vj = smooth_wave(rng, ctx), band_wave(rng, ctx, j)
    return l2xs_norm(below(u, j - 4) * vj, s), l2xs_norm(u, sig) * l2xs_norm(vj, s)


def _hh_bil_x(rng, ctx):
    s, sig, j = ctx.p("s"), ctx.p("sigma"), ctx.j
    u, v = smooth_wave(rng, ctx), smooth_wave(rng, ctx)
    lhs = l2xs_norm(band(project_at_least(u, j - 4) * project_at_least(v, j - 4), j), s)
    return lhs, 2.0 ** (-j / 2) * l2xs_norm(u, sig) * l2xs_norm(v, sig)


def _lh_bil_y(rng, ctx):
    s, sig, j = ctx.p("s"), ctx.p("sigma"), ctx.j
    u, fj = smooth_wave(rng, ctx), band_forcing(rng, ctx, j)
    return l2ys_surrogate(below(u, j - 4) * fj, s), l2xs_norm(u, sig) * l2ys_surrogate(fj, s)


def _scaled_exponent(rng, ctx, norm):
    a = smooth_wave(rng, ctx)
    target = ctx.p("a_norm")
    return a * (target / norm(a))


def _exp_h(rng, ctx):
    s = ctx.p("s")
    a = _scaled_exponent(rng, ctx, lambda f: l2hs_norm(f.initial, s)).initial
    u = smooth_wave(rng, ctx).initial
    return l2hs_norm(a.exp() * u, s), math.exp(l2hs_norm(a, s)) * l2hs_norm(u, s)


def _exp_x(rng, ctx):
    s = ctx.p("s")
    a = _scaled_exponent(rng, ctx, lambda f: l2xs_norm(f, s))
    u = smooth_wave(rng, ctx)
    return l2xs_norm(a.exp() * u, s), math.exp(l2xs_norm(a, s)) * l2xs_norm(u, s)


def _fl_exp_h(rng, ctx):
    s, sig, j = ctx.p("s"), ctx.p("sigma"), ctx.j
    a = _scaled_exponent(rng, ctx, lambda f: l2hs_norm(f.initial, sig)).initial
    uj = band_wave(rng, ctx, j).initial
    lhs = l2hs_norm(below(a.exp(), j - 4) * uj, s)
    return lhs, math.exp(l2hs_norm(a, sig)) * l2hs_norm(uj, s)


def _fl_exp_x(rng, ctx):
    s, sig, j = ctx.p("s"), ctx.p("sigma"), ctx.j
    a = _scaled_exponent(rng, ctx, lambda f: l2xs_norm(f, sig))
    uj = band_wave(rng, ctx, j)
    lhs = l2xs_norm(below(a.exp(), j - 4) * uj, s)
    return lhs, math.exp(l2xs_norm(a, sig)) * l2xs_norm(uj, s)


def _fl_exp_y(rng, ctx):
    s, sig, j = ctx.p("s"), ctx.p("sigma"), ctx.j
    a = _scaled_exponent(rng, ctx, lambda f: l2xs_norm(f, sig))
    fj = band_forcing(rng, ctx, j)
    lhs = l2ys_surrogate(below(a.exp(), j - 4) * fj, s)
    return lhs, math.exp(l2xs_norm(a, sig)) * l2ys_surrogate(fj, s)


def _tri(rng, ctx):
    s, al, be, ga = ctx.p("s"), ctx.p("alpha"), ctx.p("beta"), ctx.p("gamma")
    u, v, w = (smooth_wave(rng, ctx) for _ in range(3))
    return l2ys_surrogate(u * v * w, s), l2xs_norm(u, al) * l2xs_norm(v, be) * l2xs_norm(w, ga)


def _tri_lhh(rng, ctx):
    s, al, be, ga, j = ctx.p("s"), ctx.p("alpha"), ctx.p("beta"), ctx.p("gamma"), ctx.j
    k = int(ctx.p("k"))
    u, vj, wk = smooth_wave(rng, ctx), band_wave(rng, ctx, j), band_wave(rng, ctx, k)
    lhs = l2ys_surrogate(below(u, j - 4) * vj * wk, s)
    return lhs, l2xs_norm(u, al) * l2xs_norm(vj, be) * l2xs_norm(wk, ga)


def _tri_nested(rng, ctx):
    idx = [int(ctx.p(key)) for key in ("i", "j", "k", "l")]
    fields = [band_wave(rng, ctx, m) for m in idx]
    prod = np.real(fields[0].values * fields[1].values * fields[2].values * fields[3].values)
    lhs = abs(float(np.trapezoid(prod.sum(axis=1) * ctx.grid.dx, ctx.times)))
    i, j, k, l = idx
    rhs = 2.0 ** (1.5 * i + 1.5 * j - k - l)
    for f, m in zip(fields, idx):
        rhs *= l2_partition_norm(f, 2 * m, "Xj", j=m)
    return lhs, rhs


def _com(rng, ctx):
    s, sig, j = ctx.p("s"), ctx.p("sigma"), ctx.j
    a, u = smooth_wave(rng, ctx, decay=sig + 1.0), smooth_wave(rng, ctx)
    lhs = l2ys_surrogate(commutator_term(below(a, j - 4), u, j), s)
    return lhs, l2xs_norm(deriv(a, 1), sig - 1.0) * l2xs_norm(wide(u, j), s)


def _bernstein(rng, ctx):
    j = ctx.j
    uj = band_wave(rng, ctx, j)
    # r = inf, p = 2, q = inf
    lhs = l2_partition_norm(uj, 2 * j, "Linf")
    return lhs, 2.0 ** (j / 2) * l2_partition_norm(uj, 2 * j, "LinfL2")


def _lfxh(rng, ctx):
    s = ctx.p("s")
    u0 = band(smooth_wave(rng, ctx), 0)
    return l2xs_norm(u0, s), _linf_hs(u0, s)


_COMMON = {"s": 1.0, "alpha": 1.0, "beta": 1.0, "gamma": 1.0, "sigma": 1.0, "a_norm": 0.5}

PROBE_TAGS = {
    "est:alg": (_alg, {}),
    "est:Halg": (_halg, {}),
    "est:bil": (_bil, {}),
    "est:bilLH": (_bil_lh, {}),
    "est:bilHH": (_bil_hh, {"j": 3}),
    "est:LHbilH": (_lh_bil_h, {}),
    "est:LHbilX": (_lh_bil_x, {}),
    "est:HHbilX": (_hh_bil_x, {"j": 3}),
    "est:LHbilY": (_lh_bil_y, {}),
    "est:expH": (_exp_h, {}),
    "est:expX": (_exp_x, {}),
    "est:FLexpH": (_fl_exp_h, {}),
    "est:FLexpX": (_fl_exp_x, {}),
    "est:FLexpY": (_fl_exp_y, {}),
    "est:tri": (_tri, {}),
    "est:triLHH": (_tri_lhh, {}),
    "lem:tri-est": (_tri_nested, {"i": 3, "j": 3, "k": 3, "l": 3}),
    "est:com": (_com, {"sigma": 4.0}),
    "est:bernstein": (_bernstein, {}),
    "est:LFXH": (_lfxh, {}),
}


def _resolve_params(tag: str, grid: Grid, overrides: dict | None) -> dict:
    params = dict(_COMMON)
    params["j"] = grid.j_max
    params.update(PROBE_TAGS[tag][1])
    params.setdefault("k", params["j"])
    if tag == "est:triLHH":
        params["k"] = max(params["k"], params["j"])
    params.update(overrides or {})
    return params


def probe_estimate(tag: str, trials: int = 100, seed: int = 0, grid: Grid | None = None,
                   n_times: int = 16, params: dict | None = None, threads: int = 1) -> ProbeResult:
    """Run ``trials`` independent draws of the probe for ``tag``.

    Trial ``t`` uses the RNG stream seeded by ``(seed, t)``, so serial and
    threaded runs give identical ratios.
    """
    if tag not in PROBE_TAGS:
        raise UnknownTagError(f"no probe for {tag!r}", tag=tag)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = grid or DEFAULT_PROBE_GRID
    fn = PROBE_TAGS[tag][0]
    ctx = ProbeContext(grid, SpaceTimeField.unit_times(n_times), _resolve_params(tag, grid, params))

    def one(t):
        lhs, rhs = fn(np.random.default_rng([seed, t]), ctx)
        return lhs / rhs if rhs > 0 else 0.0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            ratios = list(ex.map(one, range(trials)))
    else:
        ratios = [one(t) for t in range(trials)]
    return ProbeResult(tag, trials, seed, ratios, ctx.params)
