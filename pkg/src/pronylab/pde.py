"""Method-of-lines solver for z_t = z_xx + q(x) z on [0, 1] with Dirichlet
ends, and the point / integral measurement traces taken from it.

Space is Chebyshev–Gauss–Lobatto collocation; time is exact for the
semi-discrete system (one matrix exponential per time step, reused).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .analysis import gauss_legendre
from .mpnum import (lu_factor, lu_solve, matmul, matrix_exp, matvec, precision_of, to_mpfr,
                    workprec)
from .potential import Potential
from .spectral import MeasurementTrace

PDE_PREC = 512


class TooFewNodes(ValueError):
    pass


class TimeOutOfRange(ValueError):
    pass


# ---------------------------------------------------------------- collocation

def _cheb_points(n_x: int, prec: int):
    with workprec(prec):
        pi = gmpy2.const_pi()
        return [(1 - gmpy2.cos(pi * j / n_x)) / 2 for j in range(n_x + 1)]


def _barycentric_weights(n_x: int):
    w = [(-1) ** j for j in range(n_x + 1)]
    w[0] /= 2
    w[-1] /= 2
    return w


def cheb_diff2(n_x: int, prec: int = PDE_PREC) -> dict:
    """Chebyshev–Gauss–Lobatto points x_j = (1 − cos(πj/n_x))/2 and the
    second-derivative collocation matrix on [0, 1]."""
    if n_x < 4:
        raise TooFewNodes("need n_x >= 4")
    x = _cheb_points(n_x, prec)
    n = n_x + 1
    c = [2 if j in (0, n_x) else 1 for j in range(n)]
    with workprec(prec):
        D = [[mpfr(0)] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                if i != j:
                    sign = -1 if (i + j) % 2 else 1
                    D[i][j] = mpfr(c[i]) / c[j] * sign / (x[i] - x[j])
            D[i][i] = -gmpy2.fsum([D[i][j] for j in range(n) if j != i])
        D2 = matmul(D, D, prec)
    return {"nodes": x, "D2": D2}


def _cheb_diff2_float(n_x: int):
    t = -np.cos(np.pi * np.arange(n_x + 1) / n_x)
    x = (t + 1) / 2
    c = np.ones(n_x + 1)
    c[0] = c[-1] = 2
    c *= (-1.0) ** np.arange(n_x + 1)
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1 / c) / (dx + np.eye(n_x + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D @ D


def interior_operator(q: Potential, n_x: int, prec: int = PDE_PREC):
    """M = D2 + diag(q) restricted to interior nodes (z_t = M z)."""
    cd = cheb_diff2(n_x, prec)
    x, D2 = cd["nodes"], cd["D2"]
    with workprec(prec):
        M = [[D2[i][j] for j in range(1, n_x)] for i in range(1, n_x)]
        for k in range(n_x - 1):
            M[k][k] += q(x[k + 1])
    return x, M


def discrete_eigenvalues(q: Potential, n_x: int, count: int, prec: int | None = None):
    """Smallest `count` eigenvalues of −M.

    float64 eigenvalues of the dense operator; with `prec` each is polished
    by shifted inverse iteration on the mpfr operator.
    """
    x, D2 = _cheb_diff2_float(n_x)
    A = -(D2[1:-1, 1:-1] + np.diag(q(x[1:-1])))
    vals = np.linalg.eigvals(A)
    vals = np.sort(vals[np.abs(vals.imag) < 1e-6 * np.abs(vals)].real)[:count]
    if prec is None:
        return [mpfr(float(v)) for v in vals]
    _, M = interior_operator(q, n_x, prec)
    return [_polish_eigenvalue(M, float(v), prec) for v in vals]


def _polish_eigenvalue(M, guess: float, prec: int, sweeps: int = 40):
    """Fixed-shift inverse iteration on −M; Rayleigh-type quotient on exit."""
    n = len(M)
    with workprec(prec):
        sigma = mpfr(guess) * (1 + mpfr(2) ** -40)
        A = [[-M[i][j] - (sigma if i == j else 0) for j in range(n)] for i in range(n)]
        F = lu_factor(A, prec)
        v = [mpfr(1) / (i + 1) for i in range(n)]
        lam = mpfr(guess)
        for _ in range(sweeps):
            w = lu_solve(F, v)
            new = sigma + gmpy2.fsum(a * a for a in v) / gmpy2.fsum(a * b for a, b in zip(v, w))
            scale = max(abs(a) for a in w)
            v = [a / scale for a in w]
            if abs(new - lam) <= mpfr(2) ** (-prec + 16) * abs(new):
                lam = new
                break
            lam = new
        return lam


# ---------------------------------------------------------------- data

@dataclass(frozen=True)
class SineSeries:
    """f(x) = Σ_k b_k sin(πkx), k from 1."""

    coeffs: tuple

    def __call__(self, x):
        if isinstance(x, type(mpfr(0))):
            px = gmpy2.const_pi() * x
            return gmpy2.fsum(mpfr(b) * gmpy2.sin(k * px) for k, b in enumerate(self.coeffs, 1))
        x = np.asarray(x, dtype=float)
        k = np.arange(1, len(self.coeffs) + 1)
        return np.sin(np.pi * np.multiply.outer(x, k)) @ np.array([float(b) for b in self.coeffs])

    def to_json(self) -> dict:
        return {"sine": [str(b) for b in self.coeffs]}

    @classmethod
    def from_json(cls, obj) -> "SineSeries":
        return cls(tuple(obj["sine"]))


class MeasurementKernel(SineSeries):
    """c(x) = Σ c_k sin(πkx)."""

    @classmethod
    def random(cls, m: int, rng: np.random.Generator, low=1.0, high=2.0) -> "MeasurementKernel":
        return cls(tuple(float(v) for v in rng.uniform(low, high, m)))


def default_initial_condition(n_terms: int = 60) -> SineSeries:
    """Σ_{k≤n_terms} (−1)^(k+1) k^(−3) sin(πkx)."""
    from fractions import Fraction
    return SineSeries(tuple(Fraction((-1) ** (k + 1), k ** 3) for k in range(1, n_terms + 1)))


@dataclass(frozen=True)
class ForwardSolution:
    x_nodes: tuple
    t_nodes: tuple
    grid: tuple  # grid[j][i] = z(x_i, t_j), boundary entries zero

    @property
    def prec(self) -> int:
        return precision_of(list(self.x_nodes))

    def column(self, j: int) -> list:
        return list(self.grid[j])


def forward_solve(q: Potential, f, t_final, n_x: int, n_t: int,
                  prec: int = PDE_PREC) -> ForwardSolution:
    """z on the Chebyshev grid at n_t equispaced times t_j = j·t_final/(n_t − 1)."""
    if n_t < 2:
        raise ValueError("need n_t >= 2")
    x, M = interior_operator(q, n_x, prec)
    with workprec(prec):
        t_final = to_mpfr(t_final, prec)
        if t_final <= 0:
            raise ValueError("t_final must be positive")
        dt = t_final / (n_t - 1)
        E = matrix_exp(M, dt, prec)
        z = [_eval(f, xi) for xi in x[1:-1]]
        zero = mpfr(0)
        grid = [tuple([zero] + z + [zero])]
        for _ in range(n_t - 1):
            z = matvec(E, z, prec)
            grid.append(tuple([zero] + z + [zero]))
        times = tuple(j * dt for j in range(n_t))
    return ForwardSolution(tuple(x), times, tuple(grid))


def _eval(f, x):
    v = f(x)
    return v if isinstance(v, type(mpfr(0))) else mpfr(v)


def sample_grid_solve(q: Potential, f, delta, n_samples: int, n_x: int,
                      prec: int = PDE_PREC) -> ForwardSolution:
    """Forward solve whose time slices are exactly t_k = kΔ, k < n_samples."""
    with workprec(prec):
        delta = to_mpfr(delta, prec)
        return forward_solve(q, f, delta * (n_samples - 1), n_x, n_samples, prec)


# ---------------------------------------------------------------- measurements

def _lagrange_row(x_nodes, x, prec):
    """Values at x of all Lagrange basis polynomials on the CGL nodes."""
    n_x = len(x_nodes) - 1
    w = _barycentric_weights(n_x)
    with workprec(prec):
        for i, xi in enumerate(x_nodes):
            if x == xi:
                return [mpfr(1) if k == i else mpfr(0) for k in range(n_x + 1)]
        terms = [wi / (x - xi) for wi, xi in zip(w, x_nodes)]
        denom = gmpy2.fsum(terms)
        return [t / denom for t in terms]


def _slice_at(sol: ForwardSolution, t, prec):
    """Grid column at t; linear in t between stored slices."""
    times = sol.t_nodes
    with workprec(prec):
        t = to_mpfr(t, prec)
        span = times[-1] - times[0]
        slack = mpfr(2) ** (-(prec // 2)) * span
        if t < times[0] - slack or t > times[-1] + slack:
            raise TimeOutOfRange(f"t={float(t):.6g} outside [{float(times[0]):.6g}, "
                                 f"{float(times[-1]):.6g}]")
        dt = span / (len(times) - 1)
        pos = (t - times[0]) / dt
        j = int(gmpy2.rint(pos))
        if abs(pos - j) * dt <= slack:
            return sol.column(min(max(j, 0), len(times) - 1))
        j = min(int(gmpy2.floor(pos)), len(times) - 2)
        frac = pos - j
        a, b = sol.grid[j], sol.grid[j + 1]
        return [(1 - frac) * u + frac * v for u, v in zip(a, b)]


def point_trace(sol: ForwardSolution, x0, sample_times, delta=None) -> MeasurementTrace:
    """z(x0, t_k) by barycentric interpolation in x."""
    prec = sol.prec
    x0 = to_mpfr(x0, prec)
    if not 0 < x0 < 1:
        raise ValueError("x0 must lie in (0, 1)")
    row = _lagrange_row(sol.x_nodes, x0, prec)
    with workprec(prec):
        samples = tuple(gmpy2.fsum(a * b for a, b in zip(row, _slice_at(sol, t, prec)))
                        for t in sample_times)
    return MeasurementTrace(_step(sample_times, delta, prec), samples, "pde-point")


def integral_weights(x_nodes, kernel, prec: int, panels: int = 64, order: int = 64):
    """w_i = ∫_0^1 c(x) ℓ_i(x) dx, composite Gauss–Legendre on `panels` panels."""
    gx, gw = gauss_legendre(order, prec)
    with workprec(prec):
        h = mpfr(1) / (2 * panels)
        acc = [[] for _ in x_nodes]
        for p in range(panels):
            mid = (2 * p + 1) * h
            for u, wu in zip(gx, gw):
                x = mid + h * u
                cx = _eval(kernel, x) * wu * h
                for i, li in enumerate(_lagrange_row(x_nodes, x, prec)):
                    acc[i].append(cx * li)
        return [gmpy2.fsum(a) for a in acc]


def integral_trace(sol: ForwardSolution, kernel, sample_times, delta=None,
                   weights=None) -> MeasurementTrace:
    """∫_0^1 c(x) z(x, t_k) dx over the polynomial interpolant of each slice."""
    prec = sol.prec
    weights = weights or integral_weights(sol.x_nodes, kernel, prec)
    with workprec(prec):
        samples = tuple(gmpy2.fsum(a * b for a, b in zip(weights, _slice_at(sol, t, prec)))
                        for t in sample_times)
    return MeasurementTrace(_step(sample_times, delta, prec), samples, "pde-integral")


def _step(sample_times, delta, prec):
    if delta is not None:
        return to_mpfr(delta, prec)
    with workprec(prec):
        return to_mpfr(sample_times[1], prec) - to_mpfr(sample_times[0], prec)


def sample_times(delta, n_samples: int, prec: int = PDE_PREC) -> list:
    with workprec(prec):
        delta = to_mpfr(delta, prec)
        return [k * delta for k in range(n_samples)]


def l2_norm(sol: ForwardSolution, j: int, panels: int = 4):
    """‖z(·, t_j)‖₂ of the slice interpolant, Gauss–Legendre per panel."""
    prec = sol.prec
    gx, gw = gauss_legendre(64, prec)
    col = sol.column(j)
    with workprec(prec):
        h = mpfr(1) / (2 * panels)
        total = []
        for p in range(panels):
            for u, wu in zip(gx, gw):
                x = (2 * p + 1) * h + h * u
                v = gmpy2.fsum(a * b for a, b in zip(_lagrange_row(sol.x_nodes, x, prec), col))
                total.append(wu * h * v * v)
        return gmpy2.sqrt(gmpy2.fsum(total))


def samples_per_trace(t_final, delta) -> int:
    """2·N_s with N_s = ⌊t_final / (2Δ)⌋."""
    n_s = math.floor(float(t_final) / (2 * float(delta)) + 1e-9)
    return 2 * n_s
