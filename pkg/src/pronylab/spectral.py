"""Spectral models, structured-noise measurement traces and eigenvalue sources."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .mpnum import RealVec, precision_of, to_decimal, to_mpfr, vector, workprec
from .potential import Potential, half_step_grid, shoot_batch, shoot_mp


class InvalidModel(ValueError):
    pass


class BracketingFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralModel:
    """Exponents λ_1 < ... < λ_{N1+N2}, amplitudes, split N1 / tail N2, noise ε, step Δ."""

    lambdas: tuple
    amplitudes: tuple
    n1: int
    n2: int
    epsilon: mpfr
    delta: mpfr
    prec: int

    def __post_init__(self):
        if len(self.lambdas) != self.n1 + self.n2 or len(self.amplitudes) != self.n1 + self.n2:
            raise InvalidModel("need n1 + n2 exponents and amplitudes")
        if self.n1 < 1:
            raise InvalidModel("n1 must be positive")
        if any(a >= b for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise InvalidModel("exponents must be strictly increasing")
        if self.lambdas[0] <= 0:
            raise InvalidModel("exponents must be positive")
        if any(y == 0 for y in self.amplitudes[:self.n1]):
            raise InvalidModel("leading amplitudes must be nonzero")
        if self.epsilon < 0 or self.delta <= 0:
            raise InvalidModel("need epsilon >= 0 and delta > 0")

    @classmethod
    def build(cls, lambdas, amplitudes, n1, n2=0, epsilon=0, delta="0.1", prec=256):
        return cls(tuple(vector(lambdas, prec)), tuple(vector(amplitudes, prec)), int(n1),
                   int(n2), to_mpfr(epsilon, prec), to_mpfr(delta, prec), int(prec))

    def nodes(self) -> RealVec:
        with workprec(self.prec):
            return [gmpy2.exp(-lam * self.delta) for lam in self.lambdas]

    def with_epsilon(self, epsilon) -> "SpectralModel":
        return SpectralModel(self.lambdas, self.amplitudes, self.n1, self.n2,
                             to_mpfr(epsilon, self.prec), self.delta, self.prec)

    def at_precision(self, prec: int) -> "SpectralModel":
        return SpectralModel(tuple(vector(self.lambdas, prec)), tuple(vector(self.amplitudes, prec)),
                             self.n1, self.n2, to_mpfr(self.epsilon, prec),
                             to_mpfr(self.delta, prec), prec)

    def satisfies_amplitude_bounds(self, ell, m_y) -> bool:
        """ℓ⁻¹ ≤ |y_n| ≤ ℓ for n ≤ N1, and |y_n| / |y_k| ≤ M_y for tail n against leading k."""
        lead = [abs(y) for y in self.amplitudes[:self.n1]]
        tail = [abs(y) for y in self.amplitudes[self.n1:]]
        if any(y < 1 / mpfr(ell) or y > ell for y in lead):
            return False
        return all(t / y <= m_y for t in tail for y in lead)


@dataclass(frozen=True)
class MeasurementTrace:
    delta: mpfr
    samples: tuple
    source: str = "synthetic"

    def __post_init__(self):
        if len(self.samples) < 2 or len(self.samples) % 2:
            raise ValueError("a trace holds an even number (>= 2) of samples")
        if self.source not in ("synthetic", "pde-point", "pde-integral"):
            raise ValueError(f"unknown trace source {self.source!r}")

    @property
    def prec(self) -> int:
        return precision_of(list(self.samples))

    def head(self, count: int) -> "MeasurementTrace":
        return MeasurementTrace(self.delta, self.samples[:count], self.source)

    def to_csv_rows(self, digits: int):
        for k, y in enumerate(self.samples):
            with workprec(self.prec):
                t = k * self.delta
            yield to_decimal(t, digits), to_decimal(y, digits)


@dataclass(frozen=True)
class GrowthBounds:
    upsilon: mpfr
    Upsilon: mpfr


def powerlaw_eigenvalues(c, p, count: int, prec: int = 256) -> RealVec:
    """λ_n = c·n^p for n = 1..count."""
    with workprec(prec):
        c, p = to_mpfr(c, prec), to_mpfr(p, prec)
        if c <= 0 or p <= 0:
            raise ValueError("need c > 0 and p > 0")
        return [c * mpfr(n) ** p for n in range(1, count + 1)]


def synthesize_trace(model: SpectralModel) -> MeasurementTrace:
    """Samples Σ_{n≤N1} y_n φ_n^k + ε Σ_{n>N1} y_n φ_n^k, k = 0..2N1−1."""
    prec = model.prec
    with workprec(prec):
        nodes = model.nodes()
        weights = [mpfr(y) for y in model.amplitudes[:model.n1]]
        weights += [model.epsilon * y for y in model.amplitudes[model.n1:]]
        terms = list(weights)
        samples = []
        for _ in range(2 * model.n1):
            samples.append(gmpy2.fsum(terms))
            terms = [t * phi for t, phi in zip(terms, nodes)]
    return MeasurementTrace(model.delta, tuple(samples), "synthetic")


def estimate_growth_bounds(lambdas, count: int = 200) -> GrowthBounds:
    """υ and Υ bracketing (λ_m − λ_n)/(m² − n²) over all pairs m > n ≤ count."""
    lams = list(lambdas)[:count]
    if len(lams) < 2:
        raise ValueError("need at least two eigenvalues")
    prec = precision_of(lams)
    with workprec(prec):
        ratios = [(lams[m] - lams[n]) / ((m + 1) ** 2 - (n + 1) ** 2)
                  for m in range(len(lams)) for n in range(m)]
    return GrowthBounds(min(ratios), max(ratios))


def shooting_eigenvalues(q: Potential, count: int, tol=1e-12, prec: int | None = None) -> RealVec:
    """First `count` Dirichlet eigenvalues of -d²/dx² - q by RK4 shooting.

    Sign changes of y(1; λ) are located on a grid below 1.5π²(count+2)² and
    refined by bisection until |y(1)| ≤ tol.  Without `prec` the integration
    runs vectorized in float64; with it, in mpfr at that precision.
    """
    ceiling = 1.5 * math.pi ** 2 * (count + 2) ** 2
    floor = -q.sup_abs() - 1.0
    grid = np.arange(floor, ceiling, math.pi ** 2 / 4)
    q_half = q(half_step_grid())
    values = shoot_batch(q_half, grid)
    brackets = [(grid[i], grid[i + 1]) for i in range(len(grid) - 1)
                if values[i] == 0 or values[i] * values[i + 1] < 0][:count]
    if len(brackets) < count:
        raise BracketingFailed(f"found {len(brackets)} of {count} eigenvalues below {ceiling:.1f}")
    lo = np.array([b[0] for b in brackets])
    hi = np.array([b[1] for b in brackets])
    f_lo = shoot_batch(q_half, lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = shoot_batch(q_half, mid)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
        if np.all((np.abs(f_mid) <= tol) | (hi - lo <= 4 * np.spacing(hi))):
            break
    roots = 0.5 * (lo + hi)
    if prec is None:
        return [mpfr(float(r)) for r in roots]
    return [_refine_mp(q, float(r), float(hi[i] - lo[i]) + 1e-9 * abs(r), tol, prec)
            for i, r in enumerate(roots)]


def _refine_mp(q, guess, width, tol, prec):
    """Secant refinement of one eigenvalue with the mpfr integrator."""
    with workprec(prec):
        tol = to_mpfr(tol, prec)
        a, b = to_mpfr(guess - width, prec), to_mpfr(guess + width, prec)
        fa, fb = shoot_mp(q, a, prec), shoot_mp(q, b, prec)
        for _ in range(60):
            if fb == fa:
                break
            c = b - fb * (b - a) / (fb - fa)
            a, fa = b, fb
            b, fb = c, shoot_mp(q, c, prec)
            if abs(fb) <= tol:
                break
        return b
