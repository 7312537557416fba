"""Potential recovery from a handful of Dirichlet eigenvalues.

The unknown q(x) = Σ_k a_k cos(2πkx) is fitted by driving the shooting
residuals y_j(1) of −h'' − q h = λ_j h to zero, with BFGS on finite-difference
gradients and a few restarts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .mpnum import to_decimal, to_mpfr
from .potential import Potential, half_step_grid, shoot_batch, shoot_mp
from .prony import filtered_prony, match_to_truth
from .spectral import MeasurementTrace


class OptimizerDiverged(RuntimeError):
    pass


class NoModesRecovered(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    restarts: int = 5
    max_iters: int = 500
    grad_step: float | None = None  # None: max(1e-8, 2^(-prec/4))
    seed: int = 0
    gtol: float = 1e-10
    ftol: float = 1e-18
    prec_bits: int = 512
    init_range: float = 0.5

    def step(self) -> float:
        if self.grad_step is not None:
            return self.grad_step
        return max(1e-8, 2.0 ** (-self.prec_bits / 4))


@dataclass
class RecoveryReport:
    recovered_coeffs: list
    recovered_lambdas: list
    loss_final: float
    restarts_used: int
    n_opt: int
    converged: bool
    metrics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        out["recovered_lambdas"] = [to_decimal(v, 30) if not isinstance(v, float) else repr(v)
                                    for v in self.recovered_lambdas]
        return out


def _cosine_basis(count: int, steps=None) -> np.ndarray:
    x = half_step_grid() if steps is None else half_step_grid(steps)
    return np.cos(2 * np.pi * np.multiply.outer(np.arange(count), x))


def shoot_boundary_value(coeffs, lam, prec: int | None = None):
    """y(1) of y'' = −(q + λ) y, y(0) = 0, y'(0) = 1 with q = Σ a_k cos(2πkx).

    float64 by default; with `prec`, the same RK4 steps in mpfr.
    """
    if prec is not None:
        return shoot_mp(Potential.fourier(list(coeffs)), lam, prec)
    a = np.asarray([float(c) for c in coeffs], dtype=float)
    q_half = a @ _cosine_basis(len(a)) if len(a) else np.zeros(len(half_step_grid()))
    return float(shoot_batch(q_half, float(lam)))


def recovery_loss(coeffs, lambdas, prec: int | None = None):
    """Σ_j y_j(1)²."""
    if len(lambdas) == 0:
        raise ValueError("need at least one eigenvalue")
    if prec is not None:
        q = Potential.fourier(list(coeffs))
        vals = [shoot_mp(q, lam, prec) for lam in lambdas]
        return sum(v * v for v in vals)
    return float(_Objective(lambdas, len(coeffs)).loss(np.asarray(coeffs, dtype=float)))


class _Objective:
    """Vectorized loss and central-difference gradient for fixed eigenvalues."""

    def __init__(self, lambdas, n_coeffs: int, step: float = 1e-8):
        self.lams = np.array([float(v) for v in lambdas])
        self.basis = _cosine_basis(n_coeffs)
        self.step = step

    def loss(self, a: np.ndarray) -> float:
        y = shoot_batch(a @ self.basis, self.lams)
        return float(np.sum(y * y))

    def grad(self, a: np.ndarray) -> np.ndarray:
        n = len(a)
        h = self.step * (1 + np.abs(a))
        shifts = np.concatenate([np.diag(h), -np.diag(h)])
        q = (a + shifts) @ self.basis
        y = shoot_batch(q, self.lams)
        f = np.sum(y * y, axis=-1)
        return (f[:n] - f[n:]) / (2 * h)


def _bfgs(obj: _Objective, x0: np.ndarray, cfg: OptimizerConfig):
    """BFGS with Armijo backtracking; returns (x, loss, converged)."""
    x = x0.copy()
    f = obj.loss(x)
    g = obj.grad(x)
    H = np.eye(len(x))
    for _ in range(cfg.max_iters):
        if f < cfg.ftol or np.max(np.abs(g)) < cfg.gtol:
            return x, f, True
        p = -H @ g
        slope = g @ p
        if slope >= 0:  # lost descent; restart the curvature model
            H = np.eye(len(x))
            p, slope = -g, -(g @ g)
        t = 1.0
        while True:
            x_new = x + t * p
            f_new = obj.loss(x_new)
            if f_new <= f + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        g_new = obj.grad(x_new)
        s, yv = x_new - x, g_new - g
        sy = s @ yv
        if sy > 1e-300:
            rho = 1 / sy
            I = np.eye(len(x))
            H = (I - rho * np.outer(s, yv)) @ H @ (I - rho * np.outer(yv, s)) + rho * np.outer(s, s)
        if np.array_equal(x_new, x):
            break
        x, f, g = x_new, f_new, g_new
    return x, f, f < cfg.ftol or np.max(np.abs(g)) < cfg.gtol


def recover_potential(lambdas, M: int, opt: OptimizerConfig | None = None) -> RecoveryReport:
    """Fit the first N_opt = min(len(lambdas), M) cosine coefficients."""
    opt = opt or OptimizerConfig()
    if M < 1:
        raise ValueError("M must be positive")
    lams = [float(v) for v in lambdas]
    if any(a >= b for a, b in zip(lams, lams[1:])):
        raise ValueError("eigenvalues must be increasing")
    n_opt = min(len(lams), M)
    if n_opt == 0:
        raise NoModesRecovered("no eigenvalues to fit")
    obj = _Objective(lams[:n_opt], n_opt, opt.step())
    rng = np.random.default_rng(opt.seed)
    starts = [np.zeros(n_opt)] + [rng.uniform(-opt.init_range, opt.init_range, n_opt)
                                  for _ in range(opt.restarts - 1)]
    best, used = None, 0
    for x0 in starts:
        used += 1
        x, f, ok = _bfgs(obj, x0, opt)
        if best is None or f < best[1]:
            best = (x, f, ok)
        if ok:
            break
    x, f, ok = best
    if not ok and not math.isfinite(f):
        raise OptimizerDiverged("every restart ended at a non-finite loss")
    coeffs = [float(v) for v in x] + [0.0] * (M - n_opt)
    return RecoveryReport(coeffs, lams[:n_opt], f, used, n_opt, ok)


# ---------------------------------------------------------------- metrics

def potential_l2_error(q_true: Potential, coeffs, panels: int = 256) -> float:
    """‖q_true − q_rec‖_{L²(0,1)} by composite 8-point Gauss–Legendre."""
    gx, gw = np.polynomial.legendre.leggauss(8)
    h = 1.0 / panels
    x = ((np.arange(panels)[:, None] + (gx[None, :] + 1) / 2) * h).ravel()
    w = np.tile(gw * h / 2, panels)
    diff = q_true(x) - Potential.fourier(list(coeffs))(x)
    return float(np.sqrt(np.sum(w * diff * diff)))


def recovery_metrics(report: RecoveryReport, prony_lambdas, delta, true_lambdas=None,
                     q_true: Potential | None = None) -> dict:
    metrics = {}
    if true_lambdas is not None and len(prony_lambdas):
        prec = 256
        rec = [to_mpfr(v, prec) for v in prony_lambdas]
        tru = [to_mpfr(v, prec) for v in true_lambdas]
        pairs = match_to_truth(rec, tru, to_mpfr(delta, prec))
        metrics["eig_rel_err"] = [float(abs(rec[i] - tru[j]) / abs(tru[j])) for i, j in pairs]
        metrics["eig_matched_index"] = [j + 1 for _, j in pairs]
        first = [e for (i, j), e in zip(pairs, metrics["eig_rel_err"]) if i < report.n_opt]
        metrics["eig_rel_err_max"] = max(first) if first else float("nan")
    if q_true is not None:
        true_c = q_true.fourier_coefficients(len(report.recovered_coeffs))
        metrics["coeff_abs_err"] = [abs(a - b) for a, b in zip(report.recovered_coeffs, true_c)]
        metrics["coeff_abs_err_max"] = max(metrics["coeff_abs_err"])
        metrics["potential_l2_err"] = potential_l2_error(q_true, report.recovered_coeffs)
    return metrics


def end_to_end_recover(trace: MeasurementTrace, n_prony: int, M: int, amp_threshold="1e-6",
                       opt: OptimizerConfig | None = None, true_lambdas=None,
                       q_true: Potential | None = None, realness_tol=None) -> RecoveryReport:
    """filtered Prony on the trace, then potential recovery from the exponents."""
    if len(trace.samples) < 2 * n_prony:
        raise ValueError(f"trace holds {len(trace.samples)} samples, need {2 * n_prony}")
    res = filtered_prony(trace.samples, n_prony, trace.delta, amp_threshold=amp_threshold,
                         realness_tol=realness_tol, prec=trace.prec)
    lams = [lam for lam in res.exponents if lam > 0]
    if not lams:
        raise NoModesRecovered("Prony kept no positive exponents")
    report = recover_potential(lams, M, opt)
    report.metrics = recovery_metrics(report, lams, trace.delta, true_lambdas, q_true)
    report.metrics["n_recovered"] = len(lams)
    report.metrics["prony_exponents"] = [to_decimal(v, 40) for v in lams]
    return report
