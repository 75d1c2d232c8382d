"""Polynomial nonlinearities F(u, u_x, u_xx) and their paradifferential split.

A nonlinearity is a sum of monomials ``c * u^a0 * u_x^a1 * u_xx^a2``.
After rescaling by ``2^k`` the equation for the high-frequency remainder
``v = u - u_low`` reads

    (d_t + d_x^3) v = F_k(u_low + v) - d_x^3 u_low,

where every monomial of ``F_k`` carries the weight ``2^{(lam - lam|a| + a1 + 2 a2 - 3) k}``.
The two quadratic terms with two derivatives on one factor (``u_x u_xx`` and
``u_xx^2``) contribute the "bad" part B, which is handled by the frozen
coefficient ``a``; the rest of the expansion is the "good" part G.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NonlinearityError, ThresholdError
from .spectral_core import SpaceTimeField, SpectralField, band, below, deriv, symbol_table

logger = logging.getLogger(__name__)

__all__ = [
    "Monomial",
    "GoodTerm",
    "PolynomialNonlinearity",
    "validate",
    "lambda_exponent",
    "s0_threshold",
    "gamma_exponent",
    "sigma_exponent",
    "mu_exponent",
    "split_bad_good",
    "evaluate_F",
    "evaluate_G",
    "evaluate_B",
    "rhs",
    "coefficient_a",
    "bj_terms",
    "commutator_term",
    "assemble_H",
    "paradiff_term",
]

UX_UXX = (0, 1, 1)
UXX_SQ = (0, 0, 2)
U_UXX = (1, 0, 1)


@dataclass(frozen=True)
class Monomial:
    coeff: complex
    alpha: tuple

    def __post_init__(self):
        a = tuple(int(x) for x in self.alpha)
        if len(a) != 3 or min(a) < 0:
            raise NonlinearityError(f"bad multi-index {self.alpha}", code="DEGENERATE")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "coeff", complex(self.coeff))

    @property
    def degree(self) -> int:
        return sum(self.alpha)


@dataclass(frozen=True)
class GoodTerm:
    """``coeff * v^b0 v_x^b1 v_xx^b2 * u_low^(a-b)`` with ``coeff`` unscaled.

    ``mult`` is the multinomial count left after removing the bad part.
    """

    coeff: complex
    alpha: tuple
    beta: tuple
    mult: int


@dataclass(frozen=True)
class PolynomialNonlinearity:
    monomials: tuple
    lam: Fraction
    s0: Fraction
    c1: complex
    c2: complex

    @property
    def degree(self) -> int:
        return max(m.degree for m in self.monomials)

    @property
    def has_bad_terms(self) -> bool:
        return self.c1 != 0 or self.c2 != 0

    def weight_exponent(self, alpha) -> Fraction:
        a0, a1, a2 = alpha
        return self.lam - self.lam * (a0 + a1 + a2) + a1 + 2 * a2 - 3

    def weight(self, alpha, k: int) -> float:
        return 2.0 ** (float(self.weight_exponent(alpha)) * k)

    def good_terms(self):
        """Binomial expansion of every monomial minus the bad quadratics."""
        out = []
        for m in self.monomials:
            if m.coeff == 0:
                continue
            for beta in itertools.product(*(range(a + 1) for a in m.alpha)):
                mult = math.prod(math.comb(a, b) for a, b in zip(m.alpha, beta))
                if m.alpha == UX_UXX and beta in ((0, 0, 1), (0, 1, 1)):
                    mult -= 1
                elif m.alpha == UXX_SQ and beta in ((0, 0, 1), (0, 0, 2)):
                    mult -= 1
                if mult:
                    out.append(GoodTerm(m.coeff, m.alpha, tuple(beta), mult))
        return out

    def to_records(self):
        return [
            {"c": m.coeff.real if m.coeff.imag == 0 else [m.coeff.real, m.coeff.imag],
             "a0": m.alpha[0], "a1": m.alpha[1], "a2": m.alpha[2]}
            for m in self.monomials
        ]


def _as_monomial(m) -> Monomial:
    if isinstance(m, Monomial):
        return m
    if isinstance(m, dict):
        c = m.get("c", m.get("coeff"))
        if isinstance(c, (list, tuple)):
            c = complex(c[0], c[1])
        return Monomial(c, (m.get("a0", 0), m.get("a1", 0), m.get("a2", 0)))
    c, alpha = m
    return Monomial(c, tuple(alpha))


def lambda_exponent(monomials) -> Fraction:
    """max (b1 + 2 b2 - 3) / (|b| - 1) over b <= a, |b| >= 2, c_a != 0."""
    monomials = [_as_monomial(m) for m in monomials]
    live = [m for m in monomials if m.coeff != 0] or monomials
    best = None
    for m in live:
        for beta in itertools.product(*(range(a + 1) for a in m.alpha)):
            size = sum(beta)
            if size < 2:
                continue
            val = Fraction(beta[1] + 2 * beta[2] - 3, size - 1)
            if best is None or val > best:
                best = val
    if best is None:
        raise NonlinearityError("no monomial of degree >= 2", code="DEGENERATE")
    return best


def _s0_monomial(alpha) -> Fraction:
    a0, a1, a2 = alpha
    size = a0 + a1 + a2
    rows = []
    if a1 == 0 and a2 == 0:
        rows.append(Fraction(1, 2))
    if a2 == 0 and a1 == 1 and a0 >= 2:
        rows.append(Fraction(1))
    if (a2 == 0 and a0 >= 1 and a1 >= 1) or (a2 == 1 and a0 >= 2):
        rows.append(Fraction(3, 2))
    if a0 == 0 and a2 == 0 and a1 >= 3:
        rows.append(Fraction(2))
    if a2 >= 1 and a0 + a1 >= 2:
        rows.append(Fraction(5, 2))
    if a2 >= 1 and size >= 3:
        rows.append(Fraction(7, 2))
    if a0 == 0 and a1 == 0 and a2 >= 2:
        rows.append(Fraction(9, 2))
    if rows:
        return min(rows)
    # quadratics with no row of their own
    if alpha == (0, 2, 0):
        return Fraction(2)
    if alpha == UX_UXX:
        return Fraction(7, 2)
    raise NonlinearityError(f"monomial {alpha} matches no threshold class", code="UNCLASSIFIED")


def s0_threshold(monomials) -> Fraction:
    """Largest per-monomial regularity threshold."""
    monomials = [_as_monomial(m) for m in monomials]
    live = [m for m in monomials if m.coeff != 0] or monomials
    return max(_s0_monomial(m.alpha) for m in live)


def gamma_exponent(s: float, lam) -> float:
    g = min(1.0, float(s) - float(lam) - 0.5)
    if g <= 0:
        raise ThresholdError(f"gamma = {g} <= 0 for s={s}, lambda={lam}", code="NONPOSITIVE_GAMMA")
    return g


def sigma_exponent(s: float, F: PolynomialNonlinearity, check: bool = True) -> float:
    sigma = float(s) - (1.0 if F.c2 != 0 else 0.0)
    if check and sigma <= 3.5:
        raise ThresholdError(f"sigma = {sigma} must exceed 7/2", code="SIGMA_TOO_SMALL")
    return sigma


def mu_exponent(F: PolynomialNonlinearity, alpha, beta, s: float) -> float:
    """Gain exponent of one good term in the perturbative estimate."""
    lam = float(F.lam)
    size = sum(beta)
    return (lam * (size - 1) - (beta[1] + 2 * beta[2] - 3)
            + (s - 0.5) * (alpha[0] - beta[0])
            + min(s - 1.5, 0.0) * (alpha[1] - beta[1])
            + min(s - 2.5, 0.0) * (alpha[2] - beta[2]))


def validate(monomials) -> PolynomialNonlinearity:
    """Check admissibility and compute the derived scalars.

    Repeated multi-indices are merged.  Raises ``NonlinearityError`` with
    code ``EMPTY``, ``DEGENERATE`` or ``PRESENCE_OF_UUXX``.
    """
    monomials = [_as_monomial(m) for m in monomials]
    if not monomials:
        raise NonlinearityError("nonlinearity has no monomials", code="EMPTY")
    merged = {}
    for m in monomials:
        if m.degree <= 1:
            raise NonlinearityError(f"monomial {m.alpha} has degree {m.degree}", code="DEGENERATE")
        if m.alpha == U_UXX:
            raise NonlinearityError("u * u_xx terms are not admissible", code="PRESENCE_OF_UUXX")
        merged[m.alpha] = merged.get(m.alpha, 0) + m.coeff
    mons = tuple(Monomial(c, a) for a, c in sorted(merged.items()))
    return PolynomialNonlinearity(
        monomials=mons,
        lam=lambda_exponent(mons),
        s0=s0_threshold(mons),
        c1=merged.get(UX_UXX, 0j),
        c2=merged.get(UXX_SQ, 0j),
    )


@dataclass
class BadSpec:
    """B = c1w (ul_x v_xx + v_x v_xx) + c2w (ul_xx v_xx + v_xx^2)."""

    c1w: complex
    c2w: complex
    u0_low: SpectralField


@dataclass
class GoodSpec:
    terms: list
    weights: list
    u0_low: SpectralField
    k: int
    mu: list = field(default_factory=list)


def split_bad_good(F: PolynomialNonlinearity, k: int, u0_low: SpectralField, s: float | None = None):
    lam = float(F.lam)
    bad = BadSpec(F.c1 * 2.0 ** (-lam * k), F.c2 * 2.0 ** ((1 - lam) * k), u0_low)
    terms = F.good_terms()
    weights = [t.coeff * t.mult * F.weight(t.alpha, k) for t in terms]
    mu = [mu_exponent(F, t.alpha, t.beta, s) for t in terms] if s is not None else []
    return bad, GoodSpec(terms, weights, u0_low, k, mu)


def _jets(u):
    """Physical samples of (u, u_x, u_xx)."""
    return [deriv(u, r).values for r in range(3)]


def _low_jets(u0_low):
    if u0_low is None:
        return None
    return _jets(u0_low)


def _power_product(jets, powers):
    out = None
    for arr, p in zip(jets, powers):
        for _ in range(p):
            out = arr if out is None else out * arr
    return out


def evaluate_F(F: PolynomialNonlinearity, u, k: int = 0):
    """Rescaled nonlinearity F_k(u, u_x, u_xx), products in physical space."""
    jets = _jets(u)
    total = np.zeros(np.shape(jets[0]), dtype=complex)
    for m in F.monomials:
        total = total + m.coeff * F.weight(m.alpha, k) * _power_product(jets, m.alpha)
    return u.from_values_like(total)


def evaluate_G(F: PolynomialNonlinearity, v: SpaceTimeField, u0_low: SpectralField, k: int) -> SpaceTimeField:
    """Good part of the rescaled right-hand side, including -d_x^3 u_low."""
    vj = _jets(v)
    lj = _low_jets(u0_low)
    total = np.zeros(vj[0].shape, dtype=complex)
    _, good = split_bad_good(F, k, u0_low)
    for term, w in zip(good.terms, good.weights):
        rest = tuple(a - b for a, b in zip(term.alpha, term.beta))
        prod = np.ones_like(total)
        pv = _power_product(vj, term.beta)
        if pv is not None:
            prod = prod * pv
        pl = _power_product(lj, rest)
        if pl is not None:
            prod = prod * pl[None, :]
        total = total + w * prod
    out = v.from_values_like(total)
    return out - deriv(u0_low, 3)


def evaluate_B(F: PolynomialNonlinearity, v: SpaceTimeField, u0_low: SpectralField, k: int) -> SpaceTimeField:
    bad, _ = split_bad_good(F, k, u0_low)
    vj = _jets(v)
    lj = _low_jets(u0_low)
    total = (bad.c1w * (lj[1][None, :] * vj[2] + vj[1] * vj[2])
             + bad.c2w * (lj[2][None, :] * vj[2] + vj[2] * vj[2]))
    return v.from_values_like(total)


def rhs(F: PolynomialNonlinearity, v: SpaceTimeField, u0_low: SpectralField, k: int) -> SpaceTimeField:
    """F_k(u_low + v) - d_x^3 u_low evaluated directly."""
    u = v + u0_low
    return evaluate_F(F, u, k) - deriv(u0_low, 3)


def coefficient_a(F: PolynomialNonlinearity, v: SpaceTimeField, u0_low: SpectralField, k: int, j: int | None = None):
    """Paradifferential coefficient a(v), frozen below band ``j - 4`` when ``j`` is given.

    The low-frequency data enters unprojected; for ``j <= 4`` the frozen
    coefficient depends on ``u_low`` only.
    """
    lam = float(F.lam)
    c1w = F.c1 * 2.0 ** (-lam * k)
    c2w = F.c2 * 2.0 ** ((1 - lam) * k)
    vv = v if j is None else below(v, j - 4)
    low = SpaceTimeField.constant_in_time(u0_low, v.times)
    out = v.with_hat(np.zeros_like(v.hat))
    if c1w != 0:
        out = out + c1w * (low + vv)
    if c2w != 0:
        out = out + c2w * deriv(low + 2.0 * vv, 1)
    return out


def bj_terms(F: PolynomialNonlinearity, v: SpaceTimeField, j: int, k: int) -> SpaceTimeField:
    lam = float(F.lam)
    c1w = F.c1 * 2.0 ** (-lam * k)
    c2w = F.c2 * 2.0 ** ((1 - lam) * k)
    tab = symbol_table(v.grid)
    out = v.with_hat(np.zeros_like(v.hat))
    vxx = deriv(v, 2)
    if c1w != 0:
        high_vx = v.with_hat(deriv(v, 1).hat * tab.at_least(j - 4))
        out = out + c1w * band(high_vx * vxx, j)
    if c2w != 0:
        high_vxx = v.with_hat(vxx.hat * tab.at_least(j - 4))
        out = out + c2w * band(high_vxx * high_vxx, j)
    return out


def commutator_term(a_low: SpaceTimeField, v: SpaceTimeField, j: int) -> SpaceTimeField:
    """[S_j, d_x a_low] v_xx = S_j(d_x a_low * v_xx) - d_x a_low * S_j v_xx."""
    ax = deriv(a_low, 1)
    vxx = deriv(v, 2)
    return band(ax * vxx, j) - ax * band(vxx, j)


def paradiff_term(F, v_coeff: SpaceTimeField, u0_low, k: int, w: SpaceTimeField, threads: int = 1) -> SpaceTimeField:
    """sum_j d_x a_{<j-4}(v_coeff) * S_j w_xx."""
    wxx = deriv(w, 2)

    def one(j):
        a = coefficient_a(F, v_coeff, u0_low, k, j)
        return deriv(a, 1) * band(wxx, j)

    return _sorted_sum(one, range(w.grid.j_top + 1), w, threads)


def _sorted_sum(fn, indices, like, threads: int):
    indices = list(indices)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(fn, indices))
    else:
        parts = [fn(i) for i in indices]
    hat = np.zeros_like(like.hat)
    for p in parts:
        hat = hat + p.hat
    return like.with_hat(hat)


def assemble_H(F: PolynomialNonlinearity, v: SpaceTimeField, u0_low: SpectralField, k: int,
               threads: int = 1) -> SpaceTimeField:
    """Right-hand side of the paradifferential equation for v.

    H = sum_j ([S_j, d_x a_{<j-4}] v_xx + b_j) + G.
    """
    G = evaluate_G(F, v, u0_low, k)
    if not F.has_bad_terms:
        return G

    def one(j):
        a = coefficient_a(F, v, u0_low, k, j)
        return commutator_term(a, v, j) + bj_terms(F, v, j, k)

    return _sorted_sum(one, range(v.grid.j_top + 1), v, threads) + G
