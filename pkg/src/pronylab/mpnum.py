"""Arbitrary-precision scalars, dense linear algebra and polynomial roots.

Everything here is built on gmpy2's mpfr/mpc types.  Precision is never
read from a global setting: each kernel opens its own gmpy2 context at the
precision it was given (or the largest precision among its operands).
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2
from gmpy2 import mpc, mpfr

RealVec = list  # list[mpfr]
RealMatrix = list  # list[list[mpfr]]
ComplexVec = list  # list[mpc]

DEFAULT_PREC = 53
MPFR = type(mpfr(0))
MPC = type(mpc(0))


class SingularMatrix(ArithmeticError):
    pass


class NoConvergence(ArithmeticError):
    pass


def workprec(prec: int):
    """Context manager running gmpy2 arithmetic at `prec` bits (thread-local)."""
    return gmpy2.context(precision=int(prec))


def digits_for(prec: int) -> int:
    return int(prec * 0.301)


def precision_of(*objs) -> int:
    """Largest precision found among (nested) mpfr / mpc / Real operands."""
    best = 0
    stack = list(objs)
    while stack:
        obj = stack.pop()
        if isinstance(obj, Real):
            best = max(best, obj.prec)
        elif isinstance(obj, MPFR):
            best = max(best, obj.precision)
        elif isinstance(obj, MPC):
            best = max(best, obj.precision[0])
        elif isinstance(obj, (list, tuple)):
            stack.extend(obj)
    return best or DEFAULT_PREC


def to_mpfr(x, prec: int) -> mpfr:
    """Convert str / int / float / Fraction / mpfr / Real to an mpfr at `prec` bits."""
    if isinstance(x, Real):
        x = x.value
    with workprec(prec):
        if isinstance(x, Fraction):
            return mpfr(x.numerator) / mpfr(x.denominator)
        return mpfr(x)


def vector(values: Iterable, prec: int) -> RealVec:
    return [to_mpfr(v, prec) for v in values]


def matrix(rows: Iterable[Iterable], prec: int) -> RealMatrix:
    return [vector(r, prec) for r in rows]


@dataclass(frozen=True)
class Real:
    """An mpfr value together with the precision it lives at.

    Arithmetic between two Reals runs at the larger of their precisions.
    """

    value: mpfr
    prec: int

    @classmethod
    def of(cls, x, prec: int) -> "Real":
        return cls(to_mpfr(x, prec), int(prec))

    def _lift(self, other):
        if isinstance(other, Real):
            return other.value, max(self.prec, other.prec)
        return other, self.prec

    def _binary(self, other, op, swap=False):
        val, prec = self._lift(other)
        with workprec(prec):
            a, b = mpfr(self.value), mpfr(val)
            return Real(op(b, a) if swap else op(a, b), prec)

    def __add__(self, o):
        return self._binary(o, operator.add)

    def __radd__(self, o):
        return self._binary(o, operator.add, True)

    def __sub__(self, o):
        return self._binary(o, operator.sub)

    def __rsub__(self, o):
        return self._binary(o, operator.sub, True)

    def __mul__(self, o):
        return self._binary(o, operator.mul)

    def __rmul__(self, o):
        return self._binary(o, operator.mul, True)

    def __truediv__(self, o):
        return self._binary(o, operator.truediv)

    def __rtruediv__(self, o):
        return self._binary(o, operator.truediv, True)

    def __neg__(self):
        return Real(-self.value, self.prec)

    def __abs__(self):
        return Real(abs(self.value), self.prec)

    def __float__(self):
        return float(self.value)

    def __lt__(self, o):
        return self.value < self._lift(o)[0]

    def __le__(self, o):
        return self.value <= self._lift(o)[0]

    def __gt__(self, o):
        return self.value > self._lift(o)[0]

    def __ge__(self, o):
        return self.value >= self._lift(o)[0]

    def __eq__(self, o):
        return self.value == self._lift(o)[0]

    def __hash__(self):
        return hash((self.value, self.prec))

    def decimal(self, digits: int | None = None) -> str:
        return to_decimal(self.value, digits or digits_for(self.prec))

    def to_json(self) -> dict:
        return {"prec_bits": self.prec, "value": self.decimal()}

    @classmethod
    def from_json(cls, obj: dict) -> "Real":
        return cls.of(obj["value"], int(obj["prec_bits"]))


def to_decimal(x, digits: int) -> str:
    """Scientific-notation decimal string with `digits` significant digits."""
    x = x if isinstance(x, MPFR) else mpfr(x)
    if not gmpy2.is_finite(x):
        return str(x)
    if x == 0:
        return "0"
    mant, exp, _ = x.digits(10, max(1, digits))
    sign = "-" if mant.startswith("-") else ""
    mant = mant.lstrip("-").rstrip("0") or "0"
    head, tail = mant[0], mant[1:]
    return f"{sign}{head}.{tail}e{exp - 1}" if tail else f"{sign}{head}e{exp - 1}"


# ---------------------------------------------------------------------------
# dense linear algebra


def dot(a: Sequence, b: Sequence):
    """Correctly rounded inner product at the ambient context precision."""
    return gmpy2.fsum(map(operator.mul, a, b))


def matmul(A: RealMatrix, B: RealMatrix, prec: int | None = None) -> RealMatrix:
    prec = prec or precision_of(A, B)
    cols = list(zip(*B))
    with workprec(prec):
        return [[dot(row, col) for col in cols] for row in A]


def matvec(A: RealMatrix, x: RealVec, prec: int | None = None) -> RealVec:
    prec = prec or precision_of(A, x)
    with workprec(prec):
        return [dot(row, x) for row in A]


def identity(n: int, prec: int) -> RealMatrix:
    with workprec(prec):
        return [[mpfr(1) if i == j else mpfr(0) for j in range(n)] for i in range(n)]


def norm_inf(A) -> mpfr:
    """Infinity norm of a vector or (row-sum) of a matrix."""
    if A and isinstance(A[0], (list, tuple)):
        return max((gmpy2.fsum(abs(v) for v in row) for row in A), default=mpfr(0))
    return max((abs(v) for v in A), default=mpfr(0))


@dataclass
class LUFactors:
    lu: RealMatrix
    perm: list
    sign: int
    prec: int


def lu_factor(A: RealMatrix, prec: int | None = None, pivot_tol=None) -> LUFactors:
    """Partial-pivot LU.  Raises SingularMatrix when a pivot is at or below pivot_tol."""
    prec = prec or precision_of(A)
    n = len(A)
    if any(len(row) != n for row in A):
        raise ValueError("matrix must be square")
    with workprec(prec):
        lu = [[mpfr(v) for v in row] for row in A]
        perm = list(range(n))
        sign = 1
        for k in range(n):
            p = max(range(k, n), key=lambda i: abs(lu[i][k]))
            if abs(lu[p][k]) <= (pivot_tol if pivot_tol is not None else 0):
                raise SingularMatrix(f"pivot {k} below threshold")
            if p != k:
                lu[k], lu[p] = lu[p], lu[k]
                perm[k], perm[p] = perm[p], perm[k]
                sign = -sign
            pivot_row = lu[k]
            inv = 1 / pivot_row[k]
            tail = pivot_row[k + 1:]
            for i in range(k + 1, n):
                row = lu[i]
                f = row[k] * inv
                row[k] = f
                if f:
                    row[k + 1:] = [a - f * b for a, b in zip(row[k + 1:], tail)]
    return LUFactors(lu, perm, sign, prec)


def lu_solve(F: LUFactors, b: RealVec) -> RealVec:
    n = len(F.lu)
    with workprec(F.prec):
        y = [mpfr(b[F.perm[i]]) for i in range(n)]
        for i in range(n):
            row = F.lu[i]
            if i:
                y[i] -= dot(row[:i], y[:i])
        for i in reversed(range(n)):
            row = F.lu[i]
            if i + 1 < n:
                y[i] -= dot(row[i + 1:], y[i + 1:])
            y[i] /= row[i]
    return y


def solve_square(A: RealMatrix, b: RealVec, prec: int | None = None) -> RealVec:
    """Solve A x = b by partial-pivot LU.

    A pivot no larger than 2^(-prec/2)·‖A‖∞ is treated as singular.
    """
    prec = prec or precision_of(A, b)
    with workprec(prec):
        tol = norm_inf(A) * mpfr(2) ** (-(prec // 2))
    return lu_solve(lu_factor(A, prec, tol), b)


def solve_matrix(A: RealMatrix, B: RealMatrix, prec: int | None = None) -> RealMatrix:
    """Solve A X = B column by column with a single factorization."""
    prec = prec or precision_of(A, B)
    with workprec(prec):
        tol = norm_inf(A) * mpfr(2) ** (-(prec // 2))
    F = lu_factor(A, prec, tol)
    cols = [lu_solve(F, list(col)) for col in zip(*B)]
    return [list(r) for r in zip(*cols)]


def det(A: RealMatrix, prec: int | None = None) -> mpfr:
    """Determinant by LU; exactly singular matrices give 0."""
    prec = prec or precision_of(A)
    if not A:
        return to_mpfr(1, prec)
    try:
        F = lu_factor(A, prec)
    except SingularMatrix:
        return to_mpfr(0, prec)
    with workprec(prec):
        d = mpfr(F.sign)
        for i in range(len(A)):
            d *= F.lu[i][i]
    return d


@dataclass
class LeastSquaresSolution:
    x: RealVec
    singular_values: RealVec
    rank: int
    rank_deficient: bool


def jacobi_svd(A: RealMatrix, prec: int | None = None):
    """One-sided (Hestenes) Jacobi SVD of a tall matrix.

    Returns (U, sigma, V) with A = U diag(sigma) V^T; columns of U with zero
    singular value are left as zero vectors.
    """
    prec = prec or precision_of(A)
    m, n = len(A), len(A[0])
    with workprec(prec):
        cols = [[mpfr(A[i][j]) for i in range(m)] for j in range(n)]
        V = [[mpfr(1) if i == j else mpfr(0) for i in range(n)] for j in range(n)]
        tol = mpfr(2) ** (-prec + 4) * max(m, n)
        norms = [dot(c, c) for c in cols]
        for _sweep in range(80):
            rotated = False
            for j in range(n - 1):
                for k in range(j + 1, n):
                    a, b = norms[j], norms[k]
                    if a == 0 or b == 0:
                        continue
                    c = dot(cols[j], cols[k])
                    if abs(c) <= tol * gmpy2.sqrt(a * b):
                        continue
                    rotated = True
                    zeta = (b - a) / (2 * c)
                    t = gmpy2.copy_sign(mpfr(1), zeta) / (abs(zeta) + gmpy2.sqrt(1 + zeta * zeta))
                    cs = 1 / gmpy2.sqrt(1 + t * t)
                    sn = cs * t
                    uj, uk = cols[j], cols[k]
                    cols[j] = [cs * x - sn * y for x, y in zip(uj, uk)]
                    cols[k] = [sn * x + cs * y for x, y in zip(uj, uk)]
                    vj, vk = V[j], V[k]
                    V[j] = [cs * x - sn * y for x, y in zip(vj, vk)]
                    V[k] = [sn * x + cs * y for x, y in zip(vj, vk)]
                    norms[j] = dot(cols[j], cols[j])
                    norms[k] = dot(cols[k], cols[k])
            if not rotated:
                break
        else:
            raise NoConvergence("Jacobi SVD did not converge")
        sigma = [gmpy2.sqrt(v) for v in norms]
        U = [[x / s for x in col] if s else col for col, s in zip(cols, sigma)]
    # U and V are returned column-major: U[j] is the j-th left singular vector
    return U, sigma, V


def solve_least_squares(A: RealMatrix, b: RealVec, prec: int | None = None,
                        rcond=None) -> LeastSquaresSolution:
    """Minimum-norm least-squares solution through the Jacobi SVD.

    Singular values below rcond·σ_max (default: rounding level) are dropped.
    The result is flagged rank deficient when the smallest retained singular
    value falls under 2^(-prec/3)·σ_max.
    """
    prec = prec or precision_of(A, b)
    if len(A) < len(A[0]):
        raise ValueError("least squares needs rows >= cols")
    U, sigma, V = jacobi_svd(A, prec)
    with workprec(prec):
        smax = max(sigma)
        if rcond is None:
            rcond = mpfr(2) ** (-prec + 8) * max(len(A), len(A[0]))
        keep = [j for j, s in enumerate(sigma) if s > rcond * smax]
        x = [mpfr(0)] * len(A[0])
        for j in keep:
            coef = dot(U[j], b) / sigma[j]
            x = [xi + coef * vi for xi, vi in zip(x, V[j])]
        smallest = min((sigma[j] for j in keep), default=mpfr(0))
        deficient = len(keep) < len(sigma) or smallest < mpfr(2) ** (-(prec // 3)) * smax
    return LeastSquaresSolution(x, sorted(sigma, reverse=True), len(keep), bool(deficient))


# ---------------------------------------------------------------------------
# matrix exponential

_PADE13 = (64764752532480000, 32382376266240000, 7771770303897600,
           1187353796428800, 129060195264000, 10559470521600, 670442572800,
           33522128640, 1323241920, 40840800, 960960, 16380, 182, 1)
# leading coefficient of the [13/13] Padé remainder, (13!)^2 / (26! 27!)
_PADE13_ERR = math.factorial(13) ** 2 / (math.factorial(26) * math.factorial(27))


def _scaling_threshold(prec: int) -> float:
    # the remainder term c·x^27 must sit below 2^-prec; never above 0.5
    log_theta = (-prec * math.log(2) - math.log(_PADE13_ERR)) / 27
    return min(0.5, math.exp(log_theta))


def matrix_exp(A: RealMatrix, t=1, prec: int | None = None) -> RealMatrix:
    """e^(A t) by scaling and squaring around the degree-13 Padé approximant."""
    prec = prec or precision_of(A, t)
    n = len(A)
    with workprec(prec):
        t = mpfr(t.value if isinstance(t, Real) else t)
        At = [[mpfr(v) * t for v in row] for row in A]
        if all(At[i][j] == 0 for i in range(n) for j in range(n) if i != j):
            return [[gmpy2.exp(At[i][i]) if i == j else mpfr(0) for j in range(n)]
                    for i in range(n)]
        norm = norm_inf(At)
        theta = _scaling_threshold(prec)
        s = 0
        if norm > theta:
            s = max(0, int(math.ceil(float(gmpy2.log2(norm / theta)))))
        scale = mpfr(2) ** (-s)
        X = [[v * scale for v in row] for row in At]
        I = identity(n, prec)
        X2 = matmul(X, X, prec)
        X4 = matmul(X2, X2, prec)
        X6 = matmul(X4, X2, prec)
        b = [mpfr(c) for c in _PADE13]

        def comb(terms):
            return [[gmpy2.fsum(c * M[i][j] for c, M in terms) for j in range(n)]
                    for i in range(n)]

        inner_u = comb([(b[13], X6), (b[11], X4), (b[9], X2)])
        U = matmul(X, _add(matmul(X6, inner_u, prec),
                           comb([(b[7], X6), (b[5], X4), (b[3], X2), (b[1], I)])), prec)
        inner_v = comb([(b[12], X6), (b[10], X4), (b[8], X2)])
        V = _add(matmul(X6, inner_v, prec),
                 comb([(b[6], X6), (b[4], X4), (b[2], X2), (b[0], I)]))
        P = [[v + u for v, u in zip(rv, ru)] for rv, ru in zip(V, U)]
        Q = [[v - u for v, u in zip(rv, ru)] for rv, ru in zip(V, U)]
        R = solve_matrix(Q, P, prec)
        for _ in range(s):
            R = matmul(R, R, prec)
    return R


def _add(A, B):
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


# ---------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True)
class Poly:
    """Real polynomial with coefficients in ascending degree order."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = list(self.coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        object.__setattr__(self, "coeffs", tuple(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def prec(self) -> int:
        return precision_of(list(self.coeffs))

    def __call__(self, z):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return acc

    def monic(self) -> "Poly":
        lead = self.coeffs[-1]
        with workprec(self.prec):
            return Poly(tuple(c / lead for c in self.coeffs))


def poly_from_roots(roots: Sequence, prec: int) -> Poly:
    """Expand Π (z − r) into ascending coefficients."""
    with workprec(prec):
        coeffs = [mpfr(1)]
        for r in roots:
            r = mpfr(r)
            nxt = [mpfr(0)] * (len(coeffs) + 1)
            for i, c in enumerate(coeffs):
                nxt[i + 1] += c
                nxt[i] -= r * c
            coeffs = nxt
    return Poly(tuple(coeffs))


def _horner_with_derivative(coeffs, z):
    p = coeffs[-1]
    dp = 0
    for c in reversed(coeffs[:-1]):
        dp = dp * z + p
        p = p * z + c
    return p, dp


def _aberth(coeffs, start, prec, tol_bits, max_iter, real_mode=False):
    """Aberth–Ehrlich iteration on a monic polynomial.  Returns (roots, converged)."""
    n = len(coeffs) - 1
    with workprec(prec):
        roots = [mpfr(r.real) if real_mode else mpc(r) for r in start]
        cs = [mpfr(c) for c in coeffs]
        tol = mpfr(2) ** (-tol_bits)
        floor = mpfr(2) ** (-prec)
        active = [True] * n
        for _ in range(max_iter):
            moved = False
            for i in range(n):
                if not active[i]:
                    continue
                zi = roots[i]
                p, dp = _horner_with_derivative(cs, zi)
                if p == 0:
                    active[i] = False
                    continue
                newton = p / dp
                s = mpfr(0) if real_mode else mpc(0)
                for j in range(n):
                    if j != i:
                        s += 1 / (zi - roots[j])
                step = newton / (1 - newton * s)
                roots[i] = zi - step
                moved = True
                if abs(step) <= tol * abs(roots[i]) or abs(step) <= floor:
                    active[i] = False
            if not moved or not any(active):
                return roots, True
    return roots, False


def poly_roots(p: Poly, prec: int | None = None) -> ComplexVec:
    """All complex roots of p (with multiplicity), as mpc values.

    Aberth–Ehrlich simultaneous iteration, started on the circle of radius
    1 + |c0|^(1/deg).  Runs first at a modest precision and re-polishes at
    doubling precisions up to `prec`, which keeps high-precision work to a
    few cubically convergent sweeps.
    """
    prec = prec or p.prec
    if p.degree < 1:
        raise ValueError("polynomial must have degree >= 1")
    with workprec(prec):
        coeffs = [mpfr(c) for c in p.coeffs]
        zeros = 0
        while coeffs[0] == 0:
            coeffs.pop(0)
            zeros += 1
        lead = coeffs[-1]
        coeffs = [c / lead for c in coeffs]
    n = len(coeffs) - 1
    roots = [mpc(0)] * zeros
    if n == 0:
        return roots
    if n == 1:
        with workprec(prec):
            return roots + [mpc(-coeffs[0])]

    levels = [prec]
    while levels[-1] > 160:
        levels.append((levels[-1] + 1) // 2)
    levels.reverse()
    with workprec(levels[0]):
        radius = 1 + abs(mpfr(coeffs[0])) ** (mpfr(1) / n)
        start = [radius * gmpy2.exp(mpc(0, 2 * gmpy2.const_pi() * k / n + 0.4))
                 for k in range(n)]
    cap = 200 * n
    for level in levels:
        real_mode = False
        if level == prec and level != levels[0]:
            with workprec(prec):
                all_real = all(abs(z.imag) <= mpfr(2) ** (-level // 4) * abs(z) for z in start)
            real_mode = all_real and _distinct_real(start)
        found, ok = _aberth(coeffs, start, level, level // 2, cap, real_mode)
        if not ok and real_mode:
            found, ok = _aberth(coeffs, start, level, level // 2, cap, False)
        if not ok:
            raise NoConvergence(f"Aberth iteration hit the cap at {level} bits")
        start = found
    with workprec(prec):
        return roots + [mpc(z) for z in start]


def _distinct_real(zs) -> bool:
    xs = sorted(z.real for z in zs)
    return all(b - a > 1e-6 * max(abs(a), abs(b)) for a, b in zip(xs, xs[1:]))


def sort_roots(roots: ComplexVec) -> ComplexVec:
    return sorted(roots, key=lambda z: (z.real, z.imag))
