import math
from fractions import Fraction

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr
from hypothesis import given
from hypothesis import strategies as st

from pronylab.condnum import (KappaOutOfRange, SweepConfig, analytic_condition_numbers,
                              empirical_condition_numbers, fit_decay_exponent, gautschi_bound,
                              hermite_eval, lagrange_deriv_at_node, lagrange_eval,
                              regime_sweep, required_precision, run_prony)
from pronylab.mpnum import to_mpfr, workprec
from pronylab.prony import DuplicateNodes, match_to_truth
from pronylab.spectral import SpectralModel

node_sets = st.lists(st.floats(0.01, 0.99), min_size=1, max_size=12, unique=True).filter(
    lambda v: all(abs(a - b) > 1e-3 for i, a in enumerate(v) for b in v[:i]))


def mp(values, prec=256):
    return [to_mpfr(v, prec) for v in values]


# ---------------------------------------------------------------- interpolation bases

def test_lagrange_single_node():
    assert lagrange_eval(mp([0.3]), 1, mpfr(7)) == 1


def test_lagrange_interpolates():
    nodes = mp([0.2, 0.5, 0.9])
    assert lagrange_eval(nodes, 2, nodes[1]) == 1
    assert lagrange_eval(nodes, 2, nodes[0]) == 0 and lagrange_eval(nodes, 2, nodes[2]) == 0


def test_lagrange_hand_value():
    v = lagrange_eval(mp(["0.2", "0.5", "0.9"]), 2, to_mpfr("0.7", 256))
    with workprec(256):
        assert abs(v - mpfr(5) / 6) < mpfr(10) ** -70


def test_lagrange_duplicate_nodes():
    with pytest.raises(DuplicateNodes):
        lagrange_eval(mp([0.5, 0.5]), 1, mpfr(0))


def test_lagrange_derivative_single_and_pair():
    assert lagrange_deriv_at_node(mp([0.4]), 1) == 0
    assert lagrange_deriv_at_node(mp([0, 1]), 1) == -1


def test_lagrange_derivative_finite_difference():
    prec = 384
    nodes = mp(np.random.default_rng(11).uniform(0.05, 0.95, 6), prec)
    with workprec(prec):
        h = mpfr(2) ** (-prec // 3)
        for n in range(1, 7):
            x = nodes[n - 1]
            fd = (lagrange_eval(nodes, n, x + h) - lagrange_eval(nodes, n, x - h)) / (2 * h)
            exact = lagrange_deriv_at_node(nodes, n)
            assert abs(fd - exact) <= mpfr(2) ** (-prec // 6) * abs(exact)


def test_hermite_at_own_node_and_others():
    nodes = mp([0.1, 0.4, 0.8])
    assert hermite_eval(nodes, 2, nodes[1]) == (1, 0)
    assert hermite_eval(nodes, 2, nodes[0]) == (0, 0)


def test_hermite_single_node():
    nodes = mp([0.3])
    for x in mp([0, 0.7, 5]):
        H, Ht = hermite_eval(nodes, 1, x)
        with workprec(256):
            assert H == 1 and Ht == x - nodes[0]


@given(node_sets)
def test_hermite_partition_at_nodes(values):
    nodes = mp(values)
    with workprec(256):
        for j, chi in enumerate(nodes):
            total = mpfr(0)
            for n in range(1, len(nodes) + 1):
                H, Ht = hermite_eval(nodes, n, chi)
                assert abs(H - (1 if n == j + 1 else 0)) < mpfr(10) ** -50
                assert abs(Ht) < mpfr(10) ** -50
                total += H
            assert abs(total - 1) < mpfr(10) ** -50


# ---------------------------------------------------------------- condition numbers

def test_analytic_one_plus_one():
    prec = 256
    m = SpectralModel.build([1, 3], ["1.5", "0.7"], 1, 1, 0, "0.4", prec)
    r = analytic_condition_numbers(m, eta=1)
    phi1, phi2 = m.nodes()
    with workprec(prec):
        want_l = -m.amplitudes[1] * (phi2 - phi1) / (m.delta * m.amplitudes[0] * phi1)
        assert abs(r.per_n[0]["K_y"] - m.amplitudes[1]) < mpfr(10) ** -70
        assert abs(r.per_n[0]["K_lambda"] - want_l) < mpfr(10) ** -70


def test_analytic_ignores_epsilon():
    m = SpectralModel.build([1, 4, 9, 16], [1] * 4, 3, 1, "1e-3", "0.3", 256)
    a = analytic_condition_numbers(m, 1)
    b = analytic_condition_numbers(m.with_epsilon(0), 1)
    assert a.per_n == b.per_n


def test_analytic_covers_floor_eta_n1():
    m = SpectralModel.build([n * n for n in range(1, 12)], [1] * 11, 10, 1, 0, "0.1", 256)
    assert [row["n"] for row in analytic_condition_numbers(m, 0.55).per_n] == [1, 2, 3, 4, 5]


def test_empirical_needs_noise():
    m = SpectralModel.build([1, 4], [1, 1], 1, 1, 0, "0.5", 256)
    with pytest.raises(ValueError):
        empirical_condition_numbers(m)


def test_empirical_matches_analytic_first_order():
    m = SpectralModel.build([n * n for n in range(1, 7)], [1] * 6, 5, 1, "1e-20", "0.5", 9000)
    ana = analytic_condition_numbers(m, 1)
    emp = empirical_condition_numbers(m, 1)
    with workprec(9000):
        for a, e in zip(ana.per_n, emp.per_n):
            assert abs(e["K_lambda"] - abs(a["K_lambda"])) <= mpfr("0.01") * abs(a["K_lambda"])
            assert abs(e["K_y"] - abs(a["K_y"])) <= mpfr("0.01") * abs(a["K_y"])


def test_first_order_deviation_shrinks_linearly():
    base = SpectralModel.build([1, 4, 9, 16], [1, 2, 1, 1], 3, 1, "1e-16", "0.5", 9000)
    ana = analytic_condition_numbers(base, 1)

    def deviation(eps):
        m = base.with_epsilon(eps)
        r = run_prony(m)
        pairs = dict((j, i) for i, j in match_to_truth(r.exponents, m.lambdas[:3], m.delta))
        with workprec(9000):
            return max(abs((r.exponents[pairs[n]] - m.lambdas[n]) / m.epsilon
                           - ana.per_n[n]["K_lambda"]) for n in range(3))

    assert deviation("1e-16") >= mpfr(10) ** 14 * deviation("1e-32")


# ---------------------------------------------------------------- fits

def test_fit_cubic_rate():
    axis = [10, 20, 30, 40]
    kap = [gmpy2.exp(to_mpfr(-2 * n ** 3, 512)) for n in axis]
    assert fit_decay_exponent(axis, kap)["slope"] == pytest.approx(3, abs=1e-12)


def test_fit_linear_rate():
    axis = [0.5, 1, 1.5, 2, 2.5]
    kap = [gmpy2.exp(to_mpfr(-5 * d, 128)) for d in axis]
    assert fit_decay_exponent(axis, kap)["slope"] == pytest.approx(1, abs=1e-12)


def test_fit_noisy_quadratic():
    rng = np.random.default_rng(5)
    axis = list(range(10, 70, 5))
    kap = []
    for n in axis:
        ln_k = -0.3 * n * n * (1 + 0.01 * rng.standard_normal())
        kap.append(gmpy2.exp(to_mpfr(ln_k, 256)))
    assert abs(fit_decay_exponent(axis, kap)["slope"] - 2) <= 0.05


def test_fit_rejects_kappa_above_one():
    with pytest.raises(KappaOutOfRange):
        fit_decay_exponent([1, 2, 3, 4], [mpfr("0.1"), mpfr("0.2"), mpfr(2), mpfr("0.3")])


def test_fit_needs_four_points():
    with pytest.raises(ValueError):
        fit_decay_exponent([1, 2, 3], [mpfr("0.1")] * 3)


def test_regime2_slope_is_linear():
    res = regime_sweep(SweepConfig.defaults("R2"))
    for key, fit in res.slopes.items():
        assert abs(fit["slope"] - 1) <= 0.3, key


def test_slopes_do_not_depend_on_amplitude_scale():
    one = regime_sweep(SweepConfig("R2", grid=[0.5, 1.0, 1.5, 2.0, 2.5], epsilon="0.1",
                                   empirical=False))
    three = regime_sweep(SweepConfig("R2", grid=[0.5, 1.0, 1.5, 2.0, 2.5], epsilon="0.1",
                                     amplitude="3", empirical=False))
    a, b = one.slopes["analytic/lambda"], three.slopes["analytic/lambda"]
    assert abs(a["slope"] - b["slope"]) <= max(a["residual"], b["residual"])


def test_precision_floor_excludes_points():
    cfg = SweepConfig("R1", grid=[25, 35, 45, 55], prec_bits=2048, auto_precision=False,
                      empirical=False)
    res = regime_sweep(cfg)
    excluded = [p.excluded[("analytic", "lambda")] for p in res.points]
    assert excluded[0] is False and any(excluded)


def test_required_precision_grows_with_n1():
    small = SpectralModel.build([n * n for n in range(1, 27)], [1] * 26, 25, 1, "1e-6", "0.1", 256)
    big = SpectralModel.build([n * n for n in range(1, 67)], [1] * 66, 65, 1, "1e-6", "0.1", 256)
    assert required_precision(small, 9000) == 9000 < required_precision(big, 9000)


# ---------------------------------------------------------------- Gautschi

def test_gautschi_single_node():
    assert gautschi_bound(mp([0.3])) == 1


def test_gautschi_two_nodes():
    assert gautschi_bound(mp([0.5, 0.25])) == 6


def test_gautschi_exceeds_1e10_for_quadratic_nodes():
    prec = 256
    with workprec(prec):
        nodes = [gmpy2.exp(mpfr("-0.1") * n * n) for n in range(1, 11)]
    assert gautschi_bound(nodes) > 1e10


@given(node_sets, st.randoms())
def test_gautschi_permutation_invariant(values, rnd):
    nodes = mp(values)
    shuffled = list(nodes)
    rnd.shuffle(shuffled)
    a, b = gautschi_bound(nodes), gautschi_bound(shuffled)
    with workprec(256):
        assert abs(a - b) <= mpfr(2) ** -240 * a  # product order only changes rounding
