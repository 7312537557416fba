"""First-order condition numbers: Hermite-basis formulas, empirical Prony
counterparts, regime sweeps and decay-exponent fits."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, field

import gmpy2
from gmpy2 import mpfr

from .mpnum import precision_of, to_decimal, to_mpfr, workprec
from .prony import DuplicateNodes, classical_prony, filtered_prony, match_to_truth
from .spectral import SpectralModel, powerlaw_eigenvalues, synthesize_trace


class RecoveryFailed(RuntimeError):
    pass


class KappaOutOfRange(ValueError):
    pass


def _distinct(nodes):
    if len(set(nodes)) != len(nodes):
        raise DuplicateNodes("interpolation nodes must be distinct")


def lagrange_eval(nodes, n: int, x):
    """L_n(x) = Π_{j≠n} (x − χ_j)/(χ_n − χ_j), with n counted from 1."""
    _distinct(nodes)
    prec = precision_of(list(nodes), x)
    with workprec(prec):
        chi = nodes[n - 1]
        out = mpfr(1)
        for j, c in enumerate(nodes):
            if j != n - 1:
                out *= (x - c) / (chi - c)
        return out


def lagrange_deriv_at_node(nodes, n: int):
    """L'_n(χ_n) = Σ_{k≠n} 1/(χ_n − χ_k)."""
    _distinct(nodes)
    prec = precision_of(list(nodes))
    with workprec(prec):
        chi = nodes[n - 1]
        return gmpy2.fsum([1 / (chi - c) for j, c in enumerate(nodes) if j != n - 1])


def hermite_eval(nodes, n: int, x):
    """Value-type and slope-type Hermite basis functions (H_n(x), H̃_n(x))."""
    prec = precision_of(list(nodes), x)
    L = lagrange_eval(nodes, n, x)
    dL = lagrange_deriv_at_node(nodes, n)
    with workprec(prec):
        gap = x - nodes[n - 1]
        L2 = L * L
        return (1 - 2 * gap * dL) * L2, gap * L2


@dataclass
class ConditionReport:
    kind: str  # "analytic" | "prony_empirical"
    per_n: list  # [{"n", "K_lambda", "K_y"}]
    n1: int
    n2: int
    delta: mpfr
    epsilon: mpfr
    eta: float
    prec: int

    def max_abs(self, metric: str):
        key = "K_lambda" if metric == "lambda" else "K_y"
        return max(abs(row[key]) for row in self.per_n)


def recovered_count(n1: int, eta) -> int:
    return int(math.floor(float(eta) * n1 + 1e-12))


def analytic_condition_numbers(model: SpectralModel, eta=0.5) -> ConditionReport:
    """K_y(n) = Σ_m y_m H_n(φ_m) and K_λ(n) = −Σ_m y_m H̃_n(φ_m) / (Δ y_n φ_n)."""
    if not 0 < float(eta) <= 1:
        raise ValueError("eta must lie in (0, 1]")
    prec = model.prec
    nodes = model.nodes()
    lead, tail = nodes[:model.n1], nodes[model.n1:]
    rows = []
    for n in range(1, recovered_count(model.n1, eta) + 1):
        with workprec(prec):
            ky, kl = mpfr(0), mpfr(0)
        for y_m, phi_m in zip(model.amplitudes[model.n1:], tail):
            H, Ht = hermite_eval(lead, n, phi_m)
            with workprec(prec):
                ky += y_m * H
                kl += y_m * Ht
        with workprec(prec):
            kl = -kl / (model.delta * model.amplitudes[n - 1] * lead[n - 1])
        rows.append({"n": n, "K_lambda": kl, "K_y": ky})
    return ConditionReport("analytic", rows, model.n1, model.n2, model.delta, model.epsilon,
                           float(eta), prec)


def empirical_condition_numbers(model: SpectralModel, eta=0.5, solver: str = "classical",
                                **solver_opts) -> ConditionReport:
    """K̂_λ(n) = |λ̂_n − λ_n|/ε and K̂_y(n) = |ŷ_n − y_n|/ε from an actual Prony run."""
    if model.epsilon <= 0:
        raise ValueError("empirical condition numbers need epsilon > 0")
    result = run_prony(model, solver, **solver_opts)
    prec = model.prec
    truth = list(model.lambdas[:model.n1])
    pairs = dict((j, i) for i, j in match_to_truth(result.exponents, truth, model.delta))
    rows = []
    for n in range(1, recovered_count(model.n1, eta) + 1):
        if n - 1 not in pairs:
            raise RecoveryFailed(f"mode {n} was not recovered")
        i = pairs[n - 1]
        with workprec(prec):
            kl = abs(result.exponents[i] - truth[n - 1]) / model.epsilon
            ky = abs(result.amplitudes[i] - model.amplitudes[n - 1]) / model.epsilon
        rows.append({"n": n, "K_lambda": kl, "K_y": ky, "node": result.nodes[i]})
    return ConditionReport("prony_empirical", rows, model.n1, model.n2, model.delta,
                           model.epsilon, float(eta), prec)


def run_prony(model: SpectralModel, solver: str = "classical", **opts):
    trace = synthesize_trace(model)
    if solver == "classical":
        return classical_prony(trace.samples, model.n1, model.delta, model.prec, **opts)
    if solver == "filtered":
        opts.setdefault("amp_threshold", 0)
        return filtered_prony(trace.samples, model.n1, model.delta, prec=model.prec, **opts)
    raise ValueError(f"unknown solver {solver!r}")


def fit_decay_exponent(axis, kappas) -> dict:
    """Least-squares line through (ln axis_i, ln(−ln κ_i))."""
    if len(axis) < 4 or len(axis) != len(kappas):
        raise ValueError("need at least 4 matching points")
    if any(b <= a for a, b in zip(axis, axis[1:])):
        raise ValueError("axis must be strictly increasing")
    xs, ys = [], []
    for a, k in zip(axis, kappas):
        k = mpfr(k) if not isinstance(k, type(mpfr(0))) else k
        if not (0 < k < 1):
            raise KappaOutOfRange(f"kappa {to_decimal(k, 6)} outside (0, 1)")
        with workprec(max(k.precision, 64)):
            ys.append(float(gmpy2.log(-gmpy2.log(k))))
        xs.append(math.log(float(a)))
    slope, intercept = statistics.linear_regression(xs, ys)
    resid = math.sqrt(sum((y - slope * x - intercept) ** 2 for x, y in zip(xs, ys)) / len(xs))
    return {"slope": slope, "intercept": intercept, "residual": resid}


def gautschi_bound(nodes):
    """max_i Π_{j≠i} (1 + |φ_j|)/|φ_i − φ_j|."""
    _distinct(nodes)
    prec = precision_of(list(nodes))
    with workprec(prec):
        best = mpfr(0)
        for i, a in enumerate(nodes):
            prod = mpfr(1)
            for j, b in enumerate(nodes):
                if j != i:
                    prod *= (1 + abs(b)) / abs(a - b)
            best = max(best, prod)
        return best


def hankel_pivot_bits(model: SpectralModel) -> float:
    """−log2 of the smallest noiseless Hankel pivot relative to the largest entry.

    The k-th pivot of the noiseless Hankel matrix equals
    y_k Π_{s<k} (φ_k − φ_s)².
    """
    prec = model.prec
    nodes = model.nodes()[:model.n1]
    with workprec(prec):
        scale = abs(gmpy2.fsum(model.amplitudes[:model.n1]))
        worst = 0.0
        for k, phi in enumerate(nodes):
            piv = abs(model.amplitudes[k])
            for s in range(k):
                piv *= (phi - nodes[s]) ** 2
            worst = max(worst, float(gmpy2.log2(scale / piv)))
    return worst


def required_precision(model: SpectralModel, base: int, margin: int = 256) -> int:
    """Smallest precision ≥ base at which the Hankel stays nonsingular under
    the 2^(−prec/2) pivot rule, with `margin` extra bits, rounded up to 64."""
    need = 2 * hankel_pivot_bits(model) + margin
    return max(base, int(math.ceil(need / 64.0)) * 64)


@dataclass
class SweepConfig:
    regime: str = "R1"
    grid: list = field(default_factory=lambda: [25, 35, 45, 55, 65])
    eta: float = 0.5
    epsilon: str = "1e-6"
    prec_bits: int = 9000
    delta: str = "0.1"  # R1
    n1: int = 10  # R2
    horizon: str = "2.0"  # R3
    power_c: str = "1"
    power_p: str = "2"
    amplitude: str = "1"
    n2: int = 1
    solver: str = "classical"
    empirical: bool = True
    auto_precision: bool = True

    @classmethod
    def defaults(cls, regime: str) -> "SweepConfig":
        if regime == "R1":
            return cls("R1")
        if regime == "R2":
            return cls("R2", grid=[0.1, 0.5, 1.0, 1.5, 2.0, 2.5], epsilon="0.1")
        if regime == "R3":
            return cls("R3", grid=[10, 20, 30, 40, 50, 65])
        raise ValueError(f"unknown regime {regime!r}")

    def point_model(self, axis_value, prec: int) -> SpectralModel:
        if self.regime == "R1":
            n1, delta = int(axis_value), to_mpfr(self.delta, prec)
        elif self.regime == "R2":
            n1, delta = self.n1, to_mpfr(str(axis_value), prec)
        elif self.regime == "R3":
            n1 = int(axis_value)
            delta = to_mpfr(self.horizon, prec) / n1
        else:
            raise ValueError(f"unknown regime {self.regime!r}")
        lams = powerlaw_eigenvalues(self.power_c, self.power_p, n1 + self.n2, prec)
        return SpectralModel(tuple(lams), tuple([to_mpfr(self.amplitude, prec)] * (n1 + self.n2)),
                             n1, self.n2, to_mpfr(self.epsilon, prec), delta, prec)


@dataclass
class SweepPoint:
    axis: float
    n_max: int
    prec: int
    kappa: dict  # (kind, metric) -> mpfr
    excluded: dict  # (kind, metric) -> bool
    analytic: ConditionReport
    empirical: ConditionReport | None = None
    error: str | None = None


@dataclass
class SweepResult:
    regime: str
    config: SweepConfig
    points: list
    slopes: dict  # "kind/metric" -> fit dict (or None when < 4 usable points)

    def axis(self):
        return [p.axis for p in self.points]


KINDS = ("analytic", "prony_empirical")
METRICS = ("lambda", "y")


def sweep_point(cfg: SweepConfig, axis_value) -> SweepPoint:
    model = cfg.point_model(axis_value, cfg.prec_bits)
    prec = required_precision(model, cfg.prec_bits) if cfg.auto_precision else cfg.prec_bits
    if prec != cfg.prec_bits:
        model = cfg.point_model(axis_value, prec)
    analytic = analytic_condition_numbers(model, cfg.eta)
    kappa = {("analytic", m): analytic.max_abs(m) for m in METRICS}
    empirical, error = None, None
    if cfg.empirical:
        try:
            empirical = empirical_condition_numbers(model, cfg.eta, cfg.solver)
            kappa.update({("prony_empirical", m): empirical.max_abs(m) for m in METRICS})
        except (ArithmeticError, RecoveryFailed) as exc:
            error = f"{type(exc).__name__}: {exc}"
    with workprec(prec):
        floor = mpfr(2) ** (-prec + 64)
    excluded = {key: not (floor <= k < 1) for key, k in kappa.items()}
    return SweepPoint(float(axis_value), recovered_count(model.n1, cfg.eta), prec, kappa,
                      excluded, analytic, empirical, error)


def regime_sweep(cfg: SweepConfig, progress=None) -> SweepResult:
    """Analytic and empirical max-κ per grid point plus ln(−ln κ) slope fits."""
    grid = sorted(cfg.grid)
    points = []
    for value in grid:
        points.append(sweep_point(cfg, value))
        if progress:
            progress(points[-1])
    slopes = {}
    for kind in KINDS:
        for metric in METRICS:
            usable = [(p.axis, p.kappa[(kind, metric)]) for p in points
                      if (kind, metric) in p.kappa and not p.excluded[(kind, metric)]]
            key = f"{kind}/{metric}"
            slopes[key] = fit_decay_exponent(*zip(*usable)) if len(usable) >= 4 else None
    return SweepResult(cfg.regime, cfg, points, slopes)
