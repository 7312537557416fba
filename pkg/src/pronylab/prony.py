"""Prony's method: classical, homogeneous (determinant) and filtered variants."""

from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpc, mpfr

from .mpnum import (Poly, SingularMatrix, digits_for, lu_factor, norm_inf, poly_roots,
                    precision_of, solve_least_squares, solve_square, to_decimal, to_mpfr,
                    workprec)


class InsufficientSamples(ValueError):
    pass


class SingularHankel(ArithmeticError):
    pass


class DegenerateAllZero(ArithmeticError):
    pass


class DuplicateNodes(ValueError):
    pass


class NonpositiveNode(ValueError):
    pass


@dataclass
class PronyResult:
    delta: mpfr
    nodes: list  # descending
    exponents: list  # ascending
    amplitudes: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_recovered(self) -> int:
        return len(self.nodes)

    def to_json(self, digits: int | None = None) -> dict:
        digits = digits or digits_for(precision_of(self.nodes, self.delta))

        def enc(v):
            return to_decimal(v, digits)

        diag = {k: (enc(v) if isinstance(v, type(mpfr(0))) else v)
                for k, v in self.diagnostics.items() if k != "rejected_roots"}
        return {"delta": enc(self.delta), "nodes": [enc(v) for v in self.nodes],
                "exponents": [enc(v) for v in self.exponents],
                "amplitudes": [enc(v) for v in self.amplitudes], "diagnostics": diag}


def default_realness_tol(prec: int) -> mpfr:
    with workprec(prec):
        return mpfr(10) ** (-(digits_for(prec) // 4))


def build_hankel(samples, n: int) -> list:
    """H[i][j] = samples[i + j], i, j < n."""
    if len(samples) < 2 * n - 1 or n < 1:
        raise InsufficientSamples(f"need {2 * n - 1} samples for an order-{n} Hankel")
    return [list(samples[i:i + n]) for i in range(n)]


def nodes_to_exponents(nodes, delta) -> list:
    prec = precision_of(list(nodes), delta)
    with workprec(prec):
        if any(z <= 0 for z in nodes):
            raise NonpositiveNode("nodes must be positive")
        return [-gmpy2.log(z) / delta for z in nodes]


def _check_distinct(nodes):
    if len(set(nodes)) != len(nodes):
        raise DuplicateNodes("nodes must be distinct")


def recover_amplitudes(nodes, samples, prec: int | None = None) -> list:
    """Amplitudes from the Vandermonde system V[k][n] = node_n^k.

    Square systems are solved directly, tall ones in the least-squares sense.
    """
    nodes = list(nodes)
    _check_distinct(nodes)
    if len(samples) < len(nodes):
        raise InsufficientSamples("fewer samples than nodes")
    prec = prec or precision_of(nodes, list(samples))
    if not nodes:
        return []
    with workprec(prec):
        rows = [[mpfr(1)] * len(nodes)]
        for _ in range(len(samples) - 1):
            rows.append([r * z for r, z in zip(rows[-1], nodes)])
        if len(samples) == len(nodes):
            return solve_square(rows, list(samples), prec)
        return solve_least_squares(rows, list(samples), prec).x


def _split_roots(roots, prec, realness_tol, positive_below_one=False):
    """Partition roots into accepted real nodes and rejected ones."""
    kept, rejected = [], []
    with workprec(prec):
        for z in roots:
            scale = max(abs(z), mpfr(1))
            ok = abs(z.imag) <= realness_tol * scale
            if ok:
                x = z.real
                ok = x > 0 and (x < 1 or not positive_below_one)
            (kept if ok else rejected).append(z.real if ok else z)
    return kept, rejected


def _root_residual(coeffs, roots, prec):
    with workprec(prec):
        worst = mpfr(0)
        for z in roots:
            val, scale, power = mpc(0), mpfr(0), mpfr(1)
            for c in coeffs:
                val += c * power
                scale += abs(c) * abs(power)
                power *= z
            if scale:
                worst = max(worst, abs(val) / scale)
        return worst


def _finish(delta, nodes, amplitudes, diagnostics):
    order = sorted(range(len(nodes)), key=lambda i: nodes[i], reverse=True)
    nodes = [nodes[i] for i in order]
    amplitudes = [amplitudes[i] for i in order]
    exponents = nodes_to_exponents(nodes, delta) if nodes else []
    return PronyResult(delta, nodes, exponents, amplitudes, diagnostics)


def classical_prony(samples, n1: int, delta=1, prec: int | None = None,
                    realness_tol=None) -> PronyResult:
    """Classical Prony on the first 2·n1 samples.

    Solves the square Hankel system for the monic Prony polynomial, takes its
    roots, and fits amplitudes on the real positive ones.  Complex or
    nonpositive roots are dropped from the result and listed in diagnostics.
    """
    samples = list(samples)
    if len(samples) < 2 * n1:
        raise InsufficientSamples(f"need {2 * n1} samples, got {len(samples)}")
    prec = prec or precision_of(samples)
    delta = to_mpfr(delta, prec)
    realness_tol = realness_tol if realness_tol is not None else default_realness_tol(prec)
    H = build_hankel(samples, n1)
    with workprec(prec):
        rhs = [-samples[n1 + k] for k in range(n1)]
        try:
            coeffs = solve_square(H, rhs, prec)
        except SingularMatrix as exc:
            raise SingularHankel(str(exc)) from exc
        coeffs = coeffs + [mpfr(1)]
    roots = poly_roots(Poly(tuple(coeffs)), prec)
    kept, rejected = _split_roots(roots, prec, realness_tol)
    window = samples[:n1] if len(kept) == n1 else samples[:2 * n1]
    amps = recover_amplitudes(kept, window, prec) if kept else []
    diagnostics = {
        "hankel_rank_gap": _pivot_gap(H, prec),
        "max_root_residual": _root_residual(coeffs, roots, prec),
        "discarded_roots": len(rejected),
        "complex_roots_retained": any(abs(z.imag) > 0 for z in rejected),
        "rejected_roots": rejected,
    }
    return _finish(delta, kept, amps, diagnostics)


def _pivot_gap(H, prec):
    """Smallest over largest LU pivot magnitude of H."""
    try:
        F = lu_factor(H, prec)
    except SingularMatrix:
        return to_mpfr(0, prec)
    with workprec(prec):
        piv = [abs(F.lu[i][i]) for i in range(len(H))]
        return min(piv) / max(piv)


def bareiss_det(A, prec: int | None = None) -> mpfr:
    """Determinant by fraction-free (Bareiss) elimination with row pivoting."""
    prec = prec or precision_of(A)
    n = len(A)
    if n == 0:
        return to_mpfr(1, prec)
    with workprec(prec):
        M = [[mpfr(v) for v in row] for row in A]
        sign, prev = 1, mpfr(1)
        for k in range(n - 1):
            p = max(range(k, n), key=lambda i: abs(M[i][k]))
            if M[p][k] == 0:
                return mpfr(0)
            if p != k:
                M[k], M[p] = M[p], M[k]
                sign = -sign
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    M[i][j] = (M[k][k] * M[i][j] - M[i][k] * M[k][j]) / prev
                M[i][k] = mpfr(0)
            prev = M[k][k]
        return sign * M[n - 1][n - 1]


def homogeneous_prony_poly(samples, n1: int, prec: int | None = None) -> Poly:
    """Determinant form of the Prony polynomial.

    The polynomial is det of the (n1+1)×(n1+1) matrix whose first row is
    [1, z, ..., z^n1] and whose row r+1 is samples[r..r+n1].  Coefficient i
    is the signed minor obtained by deleting column i of the sample block.
    """
    samples = list(samples)
    if len(samples) < 2 * n1:
        raise InsufficientSamples(f"need {2 * n1} samples, got {len(samples)}")
    prec = prec or precision_of(samples)
    block = [samples[r:r + n1 + 1] for r in range(n1)]
    coeffs = []
    for i in range(n1 + 1):
        minor = [row[:i] + row[i + 1:] for row in block]
        d = bareiss_det(minor, prec)
        with workprec(prec):
            coeffs.append(d if i % 2 == 0 else -d)
    with workprec(prec):
        scale = mpfr(1)
        for row in block:
            scale *= norm_inf(row) or mpfr(1)
        if all(abs(c) <= scale * mpfr(2) ** (-(prec // 2)) for c in coeffs):
            raise DegenerateAllZero("every maximal minor of the sample block vanishes")
    return Poly(tuple(coeffs))


def filtered_prony(samples, n_prony: int, delta=1, amp_threshold="1e-6", realness_tol=None,
                   prec: int | None = None, rcond=None) -> PronyResult:
    """Least-squares Prony with realness, range and amplitude filters.

    Roots that are not real (relative to realness_tol), not in (0, 1), or
    whose fitted amplitude is below amp_threshold are dropped; amplitudes are
    then refitted once on the surviving nodes.  Results are sorted by
    increasing exponent.
    """
    samples = list(samples)
    if len(samples) < 2 * n_prony:
        raise InsufficientSamples(f"need {2 * n_prony} samples, got {len(samples)}")
    prec = prec or precision_of(samples)
    delta = to_mpfr(delta, prec)
    threshold = to_mpfr(amp_threshold, prec)
    realness_tol = realness_tol if realness_tol is not None else default_realness_tol(prec)
    window = samples[:2 * n_prony]
    H = build_hankel(window, n_prony)
    with workprec(prec):
        rhs = [-window[n_prony + k] for k in range(n_prony)]
    lsq = solve_least_squares(H, rhs, prec, rcond=rcond)
    with workprec(prec):
        coeffs = lsq.x + [mpfr(1)]
    roots = poly_roots(Poly(tuple(coeffs)), prec)
    kept, rejected = _split_roots(roots, prec, realness_tol, positive_below_one=True)
    kept = _dedupe(kept, prec)
    amps = recover_amplitudes(kept, window, prec) if kept else []
    with workprec(prec):
        survivors = [z for z, a in zip(kept, amps) if abs(a) >= threshold]
    dropped = len(kept) - len(survivors)
    amps = recover_amplitudes(survivors, window, prec) if survivors else []
    with workprec(prec):
        smax = lsq.singular_values[0] if lsq.singular_values else mpfr(0)
        smin = lsq.singular_values[lsq.rank - 1] if lsq.rank else mpfr(0)
    diagnostics = {
        "hankel_rank_gap": smin / smax if smax else to_mpfr(0, prec),
        "hankel_rank": lsq.rank,
        "rank_deficient": lsq.rank_deficient,
        "max_root_residual": _root_residual(coeffs, roots, prec),
        "discarded_roots": len(rejected) + dropped,
        "rejected_nonreal_or_range": len(rejected),
        "rejected_small_amplitude": dropped,
        "rejected_roots": rejected,
    }
    return _finish(delta, survivors, amps, diagnostics)


def _dedupe(nodes, prec):
    """Drop exact duplicates that can appear when a root pair collapses onto the real axis."""
    out = []
    with workprec(prec):
        for z in sorted(nodes, reverse=True):
            if out and abs(out[-1] - z) <= mpfr(2) ** (-(prec // 2)) * abs(z):
                continue
            out.append(z)
    return out


def match_to_truth(recovered_exponents, true_exponents, delta) -> list:
    """Greedy nearest matching in log-node space.

    Returns (recovered_index, true_index) pairs; each index is used once.
    Unmatched recovered entries are spurious.
    """
    prec = precision_of(list(recovered_exponents), list(true_exponents), delta)
    with workprec(prec):
        pairs = sorted(
            (abs(r - t) * delta, i, j)
            for i, r in enumerate(recovered_exponents)
            for j, t in enumerate(true_exponents))
    used_r, used_t, out = set(), set(), []
    for _, i, j in pairs:
        if i in used_r or j in used_t:
            continue
        used_r.add(i)
        used_t.add(j)
        out.append((i, j))
    return sorted(out)
