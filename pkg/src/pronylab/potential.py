"""1-D potentials q(x) on [0, 1] and the RK4 shooting integrator shared by
the forward eigenvalue solver and the inverse problem.

The boundary-value problem is -h'' - q h = λ h with h(0) = h(1) = 0.  The
shooting IVP integrates y'' = -(q(x) + λ) y, y(0) = 0, y'(0) = 1 and reports
y(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .mpnum import to_mpfr, workprec

SHOOTING_STEPS = 2000


@dataclass(frozen=True)
class Potential:
    """q(x) as a Fourier-cosine series, the centered triangle, or a table."""

    kind: str
    coeffs: tuple = ()
    table: tuple = ()  # ((x0, v0), (x1, v1), ...) sorted by x

    @classmethod
    def fourier(cls, coeffs) -> "Potential":
        return cls("fourier_cosine", tuple(float(c) if isinstance(c, (int, float)) else c
                                           for c in coeffs))

    @classmethod
    def zero(cls) -> "Potential":
        return cls.fourier([0])

    @classmethod
    def constant(cls, value) -> "Potential":
        return cls.fourier([value])

    @classmethod
    def triangle(cls) -> "Potential":
        return cls("triangle")

    @classmethod
    def tabulated(cls, xs, vs) -> "Potential":
        pairs = tuple(sorted(zip(xs, vs)))
        return cls("tabulated", table=pairs)

    def __call__(self, x):
        """Evaluate at a float (numpy arrays allowed) or at an mpfr."""
        if isinstance(x, type(mpfr(0))):
            return self._eval_mp(x)
        x = np.asarray(x, dtype=float)
        if self.kind == "fourier_cosine":
            k = np.arange(len(self.coeffs))
            a = np.array([float(c) for c in self.coeffs])
            return np.cos(2 * np.pi * np.multiply.outer(x, k)) @ a
        if self.kind == "triangle":
            return 0.25 - np.abs(x - 0.5)
        xs, vs = zip(*self.table)
        return np.interp(x, xs, vs)

    def _eval_mp(self, x):
        if self.kind == "fourier_cosine":
            two_pi_x = 2 * gmpy2.const_pi() * x
            return gmpy2.fsum(mpfr(c) * gmpy2.cos(k * two_pi_x)
                              for k, c in enumerate(self.coeffs))
        if self.kind == "triangle":
            return 1 - abs(x - mpfr("0.5")) - mpfr("0.75")
        xs = [mpfr(p[0]) for p in self.table]
        vs = [mpfr(p[1]) for p in self.table]
        if x <= xs[0]:
            return vs[0]
        for (x0, v0), (x1, v1) in zip(zip(xs, vs), zip(xs[1:], vs[1:])):
            if x <= x1:
                return v0 + (v1 - v0) * (x - x0) / (x1 - x0)
        return vs[-1]

    def sup_abs(self) -> float:
        if self.kind == "fourier_cosine":
            return float(sum(abs(float(c)) for c in self.coeffs))
        if self.kind == "triangle":
            return 0.25
        return max(abs(float(v)) for _, v in self.table)

    def fourier_coefficients(self, count: int) -> list:
        """Cosine coefficients a_0..a_{count-1} of q in the basis cos(2πkx)."""
        if self.kind == "fourier_cosine":
            return [float(c) for c in self.coeffs[:count]] + [0.0] * max(0, count - len(self.coeffs))
        if self.kind == "triangle":
            # 0.25 - |x - 1/2| has mean zero and a_k = -2/(π k)^2 for odd k
            return [0.0] + [(-2 / (math.pi * k) ** 2 if k % 2 else 0.0) for k in range(1, count)]
        raise ValueError("cosine coefficients are only tabulated for analytic potentials")

    def to_json(self) -> dict:
        if self.kind == "fourier_cosine":
            return {"fourier": [str(c) for c in self.coeffs]}
        if self.kind == "triangle":
            return {"triangle": True}
        return {"tabulated": [[str(x), str(v)] for x, v in self.table]}

    @classmethod
    def from_json(cls, obj) -> "Potential":
        if "fourier" in obj:
            return cls.fourier([float(c) for c in obj["fourier"]])
        if obj.get("triangle"):
            return cls.triangle()
        if "tabulated" in obj:
            xs, vs = zip(*obj["tabulated"])
            return cls.tabulated([float(x) for x in xs], [float(v) for v in vs])
        raise ValueError(f"unknown potential descriptor {obj!r}")


def half_step_grid(steps: int = SHOOTING_STEPS) -> np.ndarray:
    """x at every RK4 stage point: 0, h/2, h, ..., 1."""
    return np.linspace(0.0, 1.0, 2 * steps + 1)


def shoot_batch(q_half: np.ndarray, lambdas) -> np.ndarray:
    """y(1) for y'' = -(q + λ) y, y(0)=0, y'(0)=1, vectorized in float64.

    q_half has shape (..., 2S+1) holding q on the half-step grid; the result
    broadcasts the leading shape of q_half against the shape of `lambdas`.
    """
    q_half = np.asarray(q_half, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    steps = (q_half.shape[-1] - 1) // 2
    h = 1.0 / steps
    lead = q_half.shape[:-1]
    w = -(q_half.reshape(lead + (1,) * lam.ndim + (-1,)) + lam[..., None])
    shape = w.shape[:-1]
    y = np.zeros(shape)
    v = np.ones(shape)
    for i in range(steps):
        w0, wm, w1 = w[..., 2 * i], w[..., 2 * i + 1], w[..., 2 * i + 2]
        k1y, k1v = v, w0 * y
        k2y = v + 0.5 * h * k1v
        k2v = wm * (y + 0.5 * h * k1y)
        k3y = v + 0.5 * h * k2v
        k3v = wm * (y + 0.5 * h * k2y)
        k4y = v + h * k3v
        k4v = w1 * (y + h * k3y)
        y = y + (h / 6) * (k1y + 2 * k2y + 2 * k3y + k4y)
        v = v + (h / 6) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return y


def shoot_mp(q: Potential, lam, prec: int, steps: int = SHOOTING_STEPS):
    """The same RK4 recurrence carried out in mpfr at `prec` bits."""
    with workprec(prec):
        lam = to_mpfr(lam, prec)
        h = mpfr(1) / steps
        half = h / 2
        w = [-(q(mpfr(i) / (2 * steps)) + lam) for i in range(2 * steps + 1)]
        y, v = mpfr(0), mpfr(1)
        for i in range(steps):
            w0, wm, w1 = w[2 * i], w[2 * i + 1], w[2 * i + 2]
            k1y, k1v = v, w0 * y
            k2y = v + half * k1v
            k2v = wm * (y + half * k1y)
            k3y = v + half * k2v
            k3v = wm * (y + half * k2y)
            k4y = v + h * k3v
            k4v = w1 * (y + h * k3y)
            y += h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
            v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        return y
