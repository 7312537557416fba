import math

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from pronylab.inverse import (NoModesRecovered, OptimizerConfig, _Objective, end_to_end_recover,
                              potential_l2_error, recover_potential, recovery_loss,
                              shoot_boundary_value)
from pronylab.mpnum import workprec
from pronylab.potential import Potential
from pronylab.spectral import MeasurementTrace, shooting_eigenvalues

PI2 = math.pi ** 2


# ---------------------------------------------------------------- shooting residual

def test_boundary_value_free_particle():
    assert shoot_boundary_value([0], 0) == pytest.approx(1, abs=1e-12)
    assert abs(shoot_boundary_value([0], PI2)) <= 1e-12
    assert shoot_boundary_value([0], 4) == pytest.approx(math.sin(2) / 2, abs=1e-12)


def test_boundary_value_mpfr_agrees_with_float():
    a = [0.1, -0.2, 0.05]
    assert float(shoot_boundary_value(a, 30, prec=128)) == pytest.approx(
        shoot_boundary_value(a, 30), abs=1e-13)


# ---------------------------------------------------------------- loss

def test_loss_examples():
    assert recovery_loss([0], [1]) == pytest.approx(math.sin(1) ** 2, rel=1e-10)
    assert recovery_loss([0], [PI2, 4 * PI2]) <= 1e-24


def test_loss_requires_eigenvalues():
    with pytest.raises(ValueError):
        recovery_loss([0], [])


def test_loss_vanishes_at_true_potential():
    a = [0.3, 0.8, -0.5]
    lams = shooting_eigenvalues(Potential.fourier(a), 3)
    assert recovery_loss(a, lams) <= 1e-20


@settings(max_examples=20)
@given(st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=4))
def test_loss_small_at_own_spectrum(a):
    lams = shooting_eigenvalues(Potential.fourier(a), len(a))
    assert recovery_loss(a, lams) <= 1e-20


def test_gradient_matches_finite_differences():
    lams = [10.0, 40.0, 90.0]
    obj = _Objective(lams, 3)
    a = np.array([0.2, -0.1, 0.3])
    g = obj.grad(a)
    h = 1e-5
    fd = np.array([(obj.loss(a + h * e) - obj.loss(a - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(g, fd, rtol=1e-4, atol=1e-10)


# ---------------------------------------------------------------- recovery

def test_recover_zero_potential():
    lams = [PI2 * n * n for n in range(1, 5)]
    rep = recover_potential(lams, 4)
    assert rep.converged
    assert max(abs(c) for c in rep.recovered_coeffs) <= 1e-6
    assert rep.loss_final <= 1e-12


def test_recover_single_cosine():
    lams = shooting_eigenvalues(Potential.fourier([0, 0.3]), 2)
    rep = recover_potential(lams, 2)
    assert rep.recovered_coeffs[1] == pytest.approx(0.3, abs=1e-4)
    assert abs(rep.recovered_coeffs[0]) <= 1e-4


def test_zero_padding_is_exact():
    lams = shooting_eigenvalues(Potential.fourier([0.2, 0.4]), 2)
    short = recover_potential(lams, 2)
    padded = recover_potential(lams, 6)
    assert padded.n_opt == 2
    assert padded.recovered_coeffs[:2] == short.recovered_coeffs
    assert padded.recovered_coeffs[2:] == [0.0] * 4


def test_recover_rejects_unsorted_and_empty():
    with pytest.raises(ValueError):
        recover_potential([40.0, 10.0], 2)
    with pytest.raises(NoModesRecovered):
        recover_potential([], 2)
    with pytest.raises(ValueError):
        recover_potential([10.0], 0)


def test_restarts_are_seeded():
    lams = shooting_eigenvalues(Potential.fourier([0.1, 1.2, -0.7]), 3)
    cfg = OptimizerConfig(seed=7)
    assert recover_potential(lams, 3, cfg).recovered_coeffs == \
        recover_potential(lams, 3, OptimizerConfig(seed=7)).recovered_coeffs


def test_l2_error_of_shift():
    assert potential_l2_error(Potential.constant(0.5), [0.0]) == pytest.approx(0.5, rel=1e-12)
    assert potential_l2_error(Potential.fourier([0, 1]), [0.0]) == pytest.approx(
        math.sqrt(0.5), rel=1e-12)


def test_l2_error_triangle_uses_coefficients():
    tri = Potential.triangle()
    # the triangle's own cosine series converges like k^-2
    assert potential_l2_error(tri, tri.fourier_coefficients(40)) < 1e-3


# ---------------------------------------------------------------- end to end

def _free_trace(n_modes=3, n_samples=20, delta="0.01", prec=256):
    with workprec(prec):
        d = mpfr(delta)
        pi2 = gmpy2.const_pi() ** 2
        ys = tuple(gmpy2.fsum(gmpy2.exp(-n * n * pi2 * k * d) for n in range(1, n_modes + 1))
                   for k in range(n_samples))
    return MeasurementTrace(d, ys)


def test_end_to_end_free_particle():
    with workprec(256):
        truth = [gmpy2.const_pi() ** 2 * n * n for n in (1, 2, 3)]
    rep = end_to_end_recover(_free_trace(), 3, 3, true_lambdas=truth, q_true=Potential.zero())
    assert rep.metrics["n_recovered"] == 3
    assert rep.metrics["eig_rel_err_max"] < 1e-30
    assert max(abs(c) for c in rep.recovered_coeffs) <= 1e-6
    assert rep.metrics["potential_l2_err"] <= 1e-6
    assert "prony_exponents" in rep.to_json()["metrics"]


def test_end_to_end_needs_enough_samples():
    with pytest.raises(ValueError):
        end_to_end_recover(_free_trace(n_samples=4), 3, 3)


def test_end_to_end_without_modes():
    with workprec(128):
        trace = MeasurementTrace(mpfr("0.01"), tuple(mpfr(0) for _ in range(8)))
    with pytest.raises((NoModesRecovered, ArithmeticError)):
        end_to_end_recover(trace, 2, 2)


def test_triangle_report_has_all_coefficients():
    lams = shooting_eigenvalues(Potential.triangle(), 5)
    rep = recover_potential(lams, 5)
    assert len(rep.recovered_coeffs) == 5
    assert rep.n_opt == 5
