"""Computable objects from the perturbation analysis of Prony's method.

Everything here is a small, exact-ish evaluator meant to be checked against
an independent route: θ-sums against their integral sandwich, the squared
Lagrange value against its exponential form, the discrepancy expansion of
the homogeneous Prony polynomial against a determinant difference.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .condnum import lagrange_eval
from .mpnum import precision_of, to_mpfr, workprec
from .prony import bareiss_det
from .spectral import GrowthBounds, SpectralModel, estimate_growth_bounds, synthesize_trace


class IndexOutOfRange(IndexError):
    pass


class EtaOutOfRange(ValueError):
    pass


class NonpositiveArgument(ValueError):
    pass


class BadInterval(ValueError):
    pass


class KOutOfRange(ValueError):
    pass


class NegativeValue(ValueError):
    pass


class NonpositiveInput(ValueError):
    pass


class SizeCap(ValueError):
    pass


class UnsupportedTail(ValueError):
    pass


def _prec(*objs, floor=64) -> int:
    return max(precision_of(*objs), floor)


# ---------------------------------------------------------------- Ψ and a(η)

def psi(n: int, n1: int) -> int:
    """Σ_{j=n+1}^{n1} (j² − n²)."""
    if not 1 <= n <= n1:
        raise IndexOutOfRange(f"need 1 <= n <= n1, got n={n}, n1={n1}")
    return sum(j * j - n * n for j in range(n + 1, n1 + 1))


def eta_cubic_coefficient(eta):
    """a(η) = 1/6 + η³/3 − η²/2, the cubic rate constant of Ψ(⌊ηN₁⌋; N₁)."""
    if not 0 < eta < 1:
        raise EtaOutOfRange("need 0 < eta < 1")
    if isinstance(eta, Fraction):
        return Fraction(1, 6) + eta ** 3 / 3 - eta ** 2 / 2
    prec = _prec(eta, floor=53)
    with workprec(prec):
        eta = mpfr(eta)
        return mpfr(1) / 6 + eta ** 3 / 3 - eta ** 2 / 2


def psi_cubic_onset(eta, n_max: int = 200) -> int | None:
    """Smallest N₀ with Ψ(⌊ηN₁⌋; N₁) ≥ a(η)N₁³ for every N₁ in [N₀, n_max].

    Returns None when the bound fails at n_max itself.
    """
    eta_q = Fraction(str(eta))
    a = eta_cubic_coefficient(eta_q)
    onset = None
    for n1 in range(n_max, 0, -1):
        n = math.floor(eta_q * n1)
        if n < 1 or psi(n, n1) < a * n1 ** 3:
            break
        onset = n1
    return onset


# ---------------------------------------------------------------- 𝔤 and 𝒢

def g_function(x, prec: int | None = None):
    """𝔤(x) = −ln(1 − e^(−x)), positive and decreasing on x > 0."""
    prec = prec or _prec(x, floor=53)
    with workprec(prec):
        x = to_mpfr(x, prec)
        if x <= 0:
            raise NonpositiveArgument("g is defined for x > 0 only")
        if x < 1:
            return -gmpy2.log(-gmpy2.expm1(-x))
        return -gmpy2.log1p(-gmpy2.exp(-x))


@functools.lru_cache(maxsize=16)
def gauss_legendre(order: int, prec: int):
    """Nodes and weights on [−1, 1], Newton-polished from the float64 rule."""
    x0, _ = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    with workprec(prec + 32):
        for guess in x0:
            x = mpfr(float(guess))
            for _ in range(200):
                p0, p1 = mpfr(1), x
                for k in range(2, order + 1):
                    p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
                dp = order * (x * p1 - p0) / (x * x - 1)
                step = p1 / dp
                x -= step
                if abs(step) <= mpfr(2) ** (-prec - 16):
                    break
            nodes.append(x)
            weights.append(2 / ((1 - x * x) * dp * dp))
    with workprec(prec):
        return tuple(mpfr(v) for v in nodes), tuple(mpfr(w) for w in weights)


def _g_integral_near_zero(b, prec):
    """∫_0^b 𝔤(y) dy for 0 < b ≤ 1 from the Laurent-log series of 𝔤.

    𝔤(y) = −ln y + y/2 − Σ_k (−1)^(k+1) ζ(2k) (y/2π)^(2k) / k.
    """
    with workprec(prec + 16):
        total = b - b * gmpy2.log(b) + b * b / 4
        r2 = (b / (2 * gmpy2.const_pi())) ** 2
        power, k = r2, 1
        tiny = mpfr(2) ** (-prec - 8) * abs(total)
        while True:
            term = gmpy2.zeta(2 * k) * b * power / (k * (2 * k + 1))
            total += -term if k % 2 else term
            if term < tiny:
                break
            power *= r2
            k += 1
        return total


def _g_integral_panels(a, b, prec):
    """∫_a^b 𝔤 for 0 < a < b < ∞ by composite 64-point Gauss–Legendre.

    Panels grow geometrically away from the branch point at 0 and are capped
    in width by the distance to the poles at ±2πi.
    """
    nodes, weights = gauss_legendre(64, prec + 16)
    with workprec(prec + 16):
        rho = 2.0 ** ((prec + 20) / 128)
        ratio = 2 / ((rho + 1 / rho) / 2 - 1)  # relative panel width
        cap = 2 * math.pi * 2 / (rho + 1 / rho) * 1.8
        total, lo = mpfr(0), mpfr(a)
        while lo < b:
            hi = min(b, lo + min(float(lo) * ratio, cap))
            c, h = (lo + hi) / 2, (hi - lo) / 2
            total += h * gmpy2.fsum(w * g_function(c + h * x, prec + 16)
                                    for x, w in zip(nodes, weights))
            lo = mpfr(hi)
        return total


def _g_integral(a, b, prec):
    """∫_a^b 𝔤(y) dy with a ≥ 0 and b possibly infinite."""
    with workprec(prec + 16):
        cut = (prec + 16) * gmpy2.log(2)  # 𝔤(y) < 2^(−prec) beyond this
        if gmpy2.is_infinite(b) or b > cut:
            b = cut
        if a >= b:
            return mpfr(0)
        total = mpfr(0)
        if a < 1:
            s = min(b, mpfr(1))
            total += _g_integral_near_zero(s, prec)
            if a > 0:
                total -= _g_integral_near_zero(mpfr(a), prec)
            a = s
        if a < b:
            total += _g_integral_panels(a, b, prec)
        return total


def calG(w1, w2, zeta, prec: int | None = None):
    """𝒢_{w1,w2}(ζ) = ∫_{w1}^{w2} 𝔤(ζx) dx; w2 may be math.inf."""
    prec = prec or _prec(w1, w2, zeta, floor=128)
    with workprec(prec):
        w1 = to_mpfr(w1, prec)
        w2 = mpfr("inf") if w2 == math.inf or (isinstance(w2, str) and w2 == "inf") \
            else to_mpfr(w2, prec)
        zeta = to_mpfr(zeta, prec)
        if not (0 <= w1 < w2) or zeta <= 0:
            raise BadInterval("need 0 <= w1 < w2 and zeta > 0")
        out = _g_integral(zeta * w1, zeta * w2, prec) / zeta
    with workprec(prec):
        return +out


# ---------------------------------------------------------------- θ-sums

def separation_tau(delta_star, upsilon):
    """τ = (1 − e^(−3Δ★υ))/3."""
    prec = _prec(delta_star, upsilon, floor=53)
    with workprec(prec):
        d, u = to_mpfr(delta_star, prec), to_mpfr(upsilon, prec)
        if d <= 0 or u <= 0:
            raise NonpositiveInput("need delta_star > 0 and upsilon > 0")
        return -gmpy2.expm1(-3 * d * u) / 3


def min_relative_gap(nodes):
    """min over n of min_{j≠n} |φ_j − φ_n| / φ_n."""
    prec = precision_of(list(nodes))
    with workprec(prec):
        return min(abs(a - b) / b for i, b in enumerate(nodes)
                   for j, a in enumerate(nodes) if i != j)


@dataclass(frozen=True)
class AnalysisContext:
    lambdas: tuple
    delta: mpfr
    n1: int
    growth: GrowthBounds
    tau: mpfr

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ValueError("lambdas must be increasing")
        if not 0 < self.tau < 0.5:
            raise ValueError("tau must lie in (0, 1/2)")

    @classmethod
    def build(cls, lambdas, delta, n1: int, delta_star=None, growth=None, prec: int = 256):
        lams = tuple(to_mpfr(v, prec) for v in lambdas)
        delta = to_mpfr(delta, prec)
        growth = growth or estimate_growth_bounds(lams)
        tau = separation_tau(delta_star if delta_star is not None else delta, growth.upsilon)
        return cls(lams, delta, int(n1), growth, tau)

    @property
    def prec(self) -> int:
        return precision_of(list(self.lambdas), self.delta)

    def nodes(self):
        with workprec(self.prec):
            return [gmpy2.exp(-self.delta * lam) for lam in self.lambdas]


@dataclass(frozen=True)
class ThetaTriple:
    theta1: mpfr
    theta2: mpfr
    theta3: mpfr


def _check_n(ctx: AnalysisContext, n: int, need_tail=True):
    if not 1 <= n <= ctx.n1:
        raise IndexOutOfRange(f"n={n} outside 1..{ctx.n1}")
    if need_tail and len(ctx.lambdas) < ctx.n1 + 1:
        raise IndexOutOfRange("theta sums need lambda_{N1+1}")


def theta_sums(ctx: AnalysisContext, n: int) -> ThetaTriple:
    _check_n(ctx, n)
    lam, d, N, prec = ctx.lambdas, ctx.delta, ctx.n1, ctx.prec

    def g(x):
        return g_function(x, prec)

    with workprec(prec):
        t1 = gmpy2.fsum([g(d * (lam[N] - lam[j - 1])) for j in range(1, N + 1) if j != n])
        t2 = gmpy2.fsum([g(d * (lam[n - 1] - lam[j - 1])) for j in range(1, n)])
        t3 = gmpy2.fsum([g(d * (lam[j - 1] - lam[n - 1])) for j in range(n + 1, N + 1)])
        return ThetaTriple(mpfr(t1), mpfr(t2), mpfr(t3))


def theta_bounds(ctx: AnalysisContext, n: int) -> dict:
    """Integral sandwich (lower, upper) for each θ; None where the bound is vacuous.

    The θ² bound is stated for n > 1 and the θ³ bound for n < N₁; at the
    excluded indices the sums are empty and equal to zero.
    """
    _check_n(ctx, n)
    d, N, prec = ctx.delta, ctx.n1, ctx.prec
    ups, Ups = ctx.growth.upsilon, ctx.growth.Upsilon
    inf = math.inf
    with workprec(prec):
        out = {
            "theta1": (calG(1, 2, d * Ups * (2 * N + 1), prec)
                       - g_function(d * Ups * (N + 1 - n) * (2 * N + 1), prec),
                       calG(0, inf, d * ups * N, prec)
                       - g_function(d * ups * (N + 1 - n) * (N + 1), prec)),
            "theta2": None,
            "theta3": None,
        }
        if n > 1:
            out["theta2"] = (calG(1, 2, d * Ups * (2 * n - 1), prec),
                             calG(0, inf, d * ups * (n + 1), prec))
        if n < N:
            out["theta3"] = (calG(1, 2, d * Ups * (N + n + 1), prec),
                             calG(0, inf, d * ups * (2 * n + 1), prec))
    return out


def lsquared_identity(ctx: AnalysisContext, n: int) -> dict:
    """L_n(φ_{N₁+1})² directly and through the θ-sum exponential form."""
    _check_n(ctx, n)
    nodes = ctx.nodes()
    N, lam, d = ctx.n1, ctx.lambdas, ctx.delta
    L = lagrange_eval(nodes[:N], n, nodes[N])
    th = theta_sums(ctx, n)
    with workprec(ctx.prec):
        gap_sum = gmpy2.fsum([lam[j - 1] - lam[n - 1] for j in range(n + 1, N + 1)])
        expo = -2 * d * gap_sum - 2 * th.theta1 + 2 * th.theta2 + 2 * th.theta3
        return {"direct": L * L, "formula": gmpy2.exp(expo)}


# ---------------------------------------------------------------- symmetric functions

def elementary_symmetric(values, k_max: int | None = None) -> list:
    """[S_0, S_1, ..., S_{k_max}] by the one-pass product update."""
    values = list(values)
    k_max = len(values) if k_max is None else k_max
    e = [values[0] ** 0 if values else 1] + [0] * k_max
    for v in values:
        for j in range(min(k_max, len(values)), 0, -1):
            e[j] = e[j] + v * e[j - 1]
    return e


def symmetric_means(values, k: int) -> dict:
    values = list(values)
    if not 1 <= k <= len(values):
        raise KOutOfRange(f"k={k} outside 1..{len(values)}")
    s = elementary_symmetric(values, k)[k]
    return {"S_k": s, "M_k": s / math.comb(len(values), k)}


def maclaurin_check(values, prec: int = 256) -> bool:
    """True iff M_1 ≥ M_2^(1/2) ≥ ... ≥ M_N^(1/N) (up to rounding at `prec`)."""
    values = list(values)
    if any(v < 0 for v in values):
        raise NegativeValue("MacLaurin's inequality needs nonnegative values")
    with workprec(prec):
        vals = [to_mpfr(v, prec) for v in values]
        e = elementary_symmetric(vals)
        N = len(vals)
        roots = [gmpy2.root(e[k] / math.comb(N, k), k) for k in range(1, N + 1)]
        slack = 1 + mpfr(2) ** (-(prec - 16))
        return all(b <= a * slack for a, b in zip(roots, roots[1:]))


def vandermonde_column_deleted(chis, k: int):
    """det of the m×m matrix [χ_i^p], p = 0..m with p = k left out."""
    m = len(chis)
    if not 0 <= k <= m:
        raise KOutOfRange(f"k={k} outside 0..{m}")
    rows = [[c ** p for p in range(m + 1) if p != k] for c in chis]
    return exact_det(rows)


def vandermonde_symmetric_form(chis, k: int):
    """𝔖_{m−k}(χ) · Π_{i<j} (χ_j − χ_i)."""
    m = len(chis)
    out = elementary_symmetric(chis, m - k)[m - k]
    for j in range(m):
        for i in range(j):
            out = out * (chis[j] - chis[i])
    return out


def exact_det(A):
    """Determinant by Gaussian elimination; exact for Fraction entries."""
    M = [list(row) for row in A]
    n = len(M)
    with workprec(_prec(M)):  # only matters for mpfr entries
        out = M[0][0] ** 0 if n else 1
        for c in range(n):
            p = max(range(c, n), key=lambda r: abs(M[r][c]))
            if M[p][c] == 0:
                return out * 0
            if p != c:
                M[c], M[p] = M[p], M[c]
                out = -out
            out = out * M[c][c]
            for r in range(c + 1, n):
                f = M[r][c] / M[c][c]
                for j in range(c, n):
                    M[r][j] = M[r][j] - f * M[c][j]
        return out


def higher_order_adjugate(L, order: int) -> dict:
    """Entries {(ζ, ξ): (−1)^(Σζ+Σξ) det L with rows ξ and columns ζ removed}.

    Indices are 1-based increasing tuples of length `order`; order 0 is det L.
    """
    m = len(L)
    if not 0 <= order <= m:
        raise KOutOfRange(f"order {order} outside 0..{m}")
    subsets = list(itertools.combinations(range(1, m + 1), order))
    out = {}
    for zeta in subsets:
        cols = [c for c in range(1, m + 1) if c not in zeta]
        for xi in subsets:
            rows = [r for r in range(1, m + 1) if r not in xi]
            sub = [[L[r - 1][c - 1] for c in cols] for r in rows]
            d = exact_det(sub)
            with workprec(_prec(sub)):
                out[(zeta, xi)] = -d if (sum(zeta) + sum(xi)) % 2 else d
    return out


def tail_matrix(phi_tail, y_tail, n1: int):
    """The rank-one (N₁+1)×(N₁+1) tail matrix: zero first row, row r ≥ 2 holds y·φ^(r−2+c−1)."""
    zero = y_tail * 0
    rows = [[zero] * (n1 + 1)]
    for r in range(2, n1 + 2):
        rows.append([y_tail * phi_tail ** (r - 2 + c - 1) for c in range(1, n1 + 2)])
    return rows


# ---------------------------------------------------------------- erfi

def erfi(x, prec: int | None = None):
    """(2/√π) Σ x^(2k+1) / (k!(2k+1)), summed until terms drop below 2^(−prec) of the sum."""
    prec = prec or _prec(x, floor=53)
    with workprec(prec + 16):
        x = to_mpfr(x, prec + 16)
        if x < 0:
            raise NonpositiveArgument("erfi is evaluated for x >= 0")
        x2 = x * x
        power, total, k = x, mpfr(0), 0
        while True:
            term = power / (2 * k + 1)
            total += term
            if term <= mpfr(2) ** (-prec - 8) * total or x == 0:
                break
            k += 1
            power *= x2 / k
        out = 2 * total / gmpy2.sqrt(gmpy2.const_pi())
    with workprec(prec):
        return +out


# ---------------------------------------------------------------- Prony polynomials

def _pencil(samples, n1, z):
    """Rows [1, z, ..., z^n1] then samples[r .. r+n1] for r < n1."""
    first = [z ** i for i in range(n1 + 1)]
    return [first] + [list(samples[r:r + n1 + 1]) for r in range(n1)]


def _clean_trace(model: SpectralModel):
    return synthesize_trace(model.with_epsilon(0)).samples


def pbar_two_ways(model: SpectralModel, z, max_n1: int = 8) -> dict:
    """det 𝔓(z) and its closed product form (Πy)(Π_{s<t}(φ_t−φ_s)²)(Π(φ_s−z))."""
    N = model.n1
    if N > max_n1:
        raise SizeCap(f"determinant route capped at N1={max_n1}")
    prec = model.prec
    z = to_mpfr(z, prec)
    phi = model.nodes()[:N]
    with workprec(prec):
        det_form = bareiss_det(_pencil(_clean_trace(model), N, z), prec)
        prod = mpfr(1)
        for y in model.amplitudes[:N]:
            prod *= y
        for t in range(N):
            for s in range(t):
                prod *= (phi[t] - phi[s]) ** 2
        for p in phi:
            prod *= p - z
    return {"det_form": det_form, "product_form": prod}


def discrepancy_formula(model: SpectralModel, z) -> dict:
    """First-order expansion of det 𝔔(z) − det 𝔓(z) for a one-term tail.

    `formula` sums over column sets γ, row sets β containing the first row,
    and (N₁−1)-subsets ω of the leading nodes; `oracle` differences the two
    determinants directly.
    """
    N = model.n1
    if model.n2 != 1:
        raise UnsupportedTail("the expansion covers a single tail term only")
    if not 2 <= N <= 4:
        raise SizeCap("enumeration is limited to 2 <= N1 <= 4")
    prec = model.prec
    z = to_mpfr(z, prec)
    phi = model.nodes()
    ys = model.amplitudes
    eps = model.epsilon
    with workprec(prec):
        q_det = bareiss_det(_pencil(synthesize_trace(model).samples, N, z), prec)
        p_det = bareiss_det(_pencil(_clean_trace(model), N, z), prec)
        oracle = q_det - p_det

        phi_t, y_t = phi[N], ys[N]
        idx = range(1, N + 2)
        total = []
        for gamma in itertools.combinations(idx, N):
            gc = next(i for i in idx if i not in gamma)
            for beta in itertools.combinations(idx, N):
                if beta[0] != 1:
                    continue
                bc = next(i for i in idx if i not in beta)
                a = gamma[0] - 1
                b = (beta[1] - 2) + (gamma[0] - 1)
                sign = -1 if (sum(gamma) + sum(beta)) % 2 else 1
                head = sign * y_t * phi_t ** (bc + gc - 3) * z ** a
                for omega in itertools.combinations(range(1, N + 1), N - 1):
                    po = [phi[w - 1] for w in omega]
                    term = head
                    for w in omega:
                        term *= ys[w - 1]
                    for p in po:
                        term *= p ** b * (p - z)
                    if gc not in (1, N + 1):
                        term *= elementary_symmetric([z] + po, N + 1 - gc)[N + 1 - gc]
                    if bc not in (2, N + 1):
                        term *= elementary_symmetric(po, N + 1 - bc)[N + 1 - bc]
                    for t in range(len(po)):
                        for s in range(t):
                            term *= (po[t] - po[s]) ** 2
                    total.append(term)
        formula = eps * gmpy2.fsum(total)
    return {"formula": formula, "oracle": oracle}
