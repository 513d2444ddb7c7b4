import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calabi.jets import (
    Jet,
    JetError,
    jet_arith,
    jet_compose_univariate,
    jet_cos,
    jet_cosh,
    jet_dot,
    jet_exp,
    jet_extract,
    jet_log,
    jet_reciprocal,
    jet_sin,
    jet_sinh,
    jet_sqrt,
    monomial_exponents,
    monomial_stack,
)


def random_jet(rng, num_vars, order):
    from calabi.jets import _ncoef

    return Jet(num_vars, order, rng.uniform(-1, 1, _ncoef(num_vars, order)))


def test_square_of_coordinate_at_one():
    x = Jet.variable(0, 1.0, 1, 2)
    sq = jet_arith(x, x, "mul")
    # (1+h)^2 = 1 + 2h + h^2
    assert sq.extract((0,)) == pytest.approx(1.0)
    assert sq.extract((1,)) == pytest.approx(2.0)
    assert sq.extract((2,)) == pytest.approx(2.0)  # second derivative of x^2
    assert sq.coeffs[2] == pytest.approx(1.0)  # raw Taylor coefficient


def test_additive_identity():
    rng = np.random.default_rng(0)
    a = random_jet(rng, 3, 4)
    zero = Jet.constant(0.0, 3, 4)
    assert np.allclose(jet_arith(a, zero, "add").coeffs, a.coeffs)


def test_rational_jet_against_closed_form_derivatives():
    # f(x) = 1/(1+x^2) at x = 0.5, order 3; expected Taylor coefficients from
    # the hand-differentiated closed forms below.
    x = 0.5
    f = 1.0 / (1.0 + x * x)
    f1 = -2.0 * x / (1.0 + x * x) ** 2
    f2 = (-2.0 + 6.0 * x * x) / (1.0 + x * x) ** 3
    f3 = 24.0 * x * (1.0 - x * x) / (1.0 + x * x) ** 4
    expected = [f, f1, f2 / 2.0, f3 / 6.0]

    xs = Jet.variable(0, x, 1, 3)
    jet = 1.0 / (1.0 + xs * xs)
    assert np.allclose(jet.coeffs, expected, rtol=1e-13, atol=1e-15)


def test_division_matches_series_inversion():
    rng = np.random.default_rng(7)
    a = random_jet(rng, 2, 4)
    b = random_jet(rng, 2, 4) + 2.0  # keep the constant term away from zero
    q = jet_arith(a, b, "div")
    assert np.allclose((q * b).coeffs, a.coeffs, atol=1e-12)


def test_division_by_zero_constant_term_raises():
    a = Jet.constant(1.0, 1, 3)
    b = Jet.variable(0, 0.0, 1, 3)
    with pytest.raises(JetError):
        jet_arith(a, b, "div")


def test_shape_mismatch_raises():
    a = Jet.constant(1.0, 2, 3)
    b = Jet.constant(1.0, 2, 4)
    with pytest.raises(JetError):
        jet_arith(a, b, "add")
    c = Jet.constant(1.0, 3, 3)
    with pytest.raises(JetError):
        jet_arith(a, c, "mul")


def test_exp_series_at_zero():
    h = Jet.variable(0, 0.0, 1, 3)
    e = jet_exp(h)
    assert np.allclose(e.coeffs, [1.0, 1.0, 0.5, 1.0 / 6.0])


def test_cosh_fourth_derivative_matches_closed_form():
    t = Jet.variable(0, 0.3, 1, 4)
    c = jet_cosh(t)
    # d^4/dt^4 cosh = cosh
    assert c.extract((4,)) == pytest.approx(math.cosh(0.3), rel=1e-13)
    assert c.extract((3,)) == pytest.approx(math.sinh(0.3), rel=1e-13)


def test_log_of_kahler_potential_argument():
    x = Jet.variable(0, 0.0, 2, 3)
    y = Jet.variable(1, 0.0, 2, 3)
    pot = jet_log(1.0 + x * x + y * y)
    assert pot.value == pytest.approx(0.0)
    # second derivative in x at the origin is 2
    assert pot.extract((2, 0)) == pytest.approx(2.0)


def test_compose_univariate_too_short_raises():
    t = Jet.variable(0, 0.0, 1, 4)
    with pytest.raises(JetError):
        jet_compose_univariate([1.0, 1.0], t)


def test_extract_trivial_cases():
    x = Jet.variable(0, 0.0, 1, 3)
    sq = x * x
    assert jet_extract(sq, (2,)) == pytest.approx(2.0)
    assert jet_extract(sq, (0,)) == pytest.approx(0.0)

    u = Jet.variable(0, 2.0, 2, 2)
    v = Jet.variable(1, 3.0, 2, 2)
    assert jet_extract(u * v, (1, 1)) == pytest.approx(1.0)
    assert jet_extract(u * v, (0, 0)) == pytest.approx(6.0)


def test_extract_out_of_range_raises():
    a = Jet.constant(1.0, 1, 2)
    with pytest.raises(JetError):
        a.extract((3,))


def test_partial_derivative_drops_order():
    x = Jet.variable(0, 1.5, 2, 3)
    y = Jet.variable(1, -0.5, 2, 3)
    f = x * x * y
    fx = f.partial(0)
    assert fx.order == 2
    assert fx.value == pytest.approx(2 * 1.5 * (-0.5))
    assert fx.extract((1, 0)) == pytest.approx(2 * (-0.5))
    assert fx.extract((0, 1)) == pytest.approx(2 * 1.5)


def test_truncation_is_prefix_consistent():
    rng = np.random.default_rng(3)
    a = random_jet(rng, 3, 5)
    b = random_jet(rng, 3, 5)
    full = (a * b).truncated(3)
    short = a.truncated(3) * b.truncated(3)
    assert np.allclose(full.coeffs, short.coeffs, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 4))
def test_leibniz_rule(seed, num_vars, order):
    rng = np.random.default_rng(seed)
    a = random_jet(rng, num_vars, order)
    b = random_jet(rng, num_vars, order)
    prod = a * b
    exps = monomial_exponents(num_vars, order)
    for alpha in exps:
        lhs = prod.extract(alpha)
        rhs = 0.0
        for beta in exps:
            gamma = alpha - beta
            if np.any(gamma < 0):
                continue
            binom = 1.0
            for ai, bi in zip(alpha, beta):
                binom *= math.comb(int(ai), int(bi))
            rhs += binom * a.extract(beta) * b.extract(gamma)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_mul_commutative_and_add_associative(seed):
    rng = np.random.default_rng(seed)
    a = random_jet(rng, 2, 4)
    b = random_jet(rng, 2, 4)
    c = random_jet(rng, 2, 4)
    assert np.allclose((a * b).coeffs, (b * a).coeffs)
    assert np.allclose(((a + b) + c).coeffs, (a + (b + c)).coeffs, atol=1e-15)
    assert np.allclose(((a * b) * c).coeffs, (a * (b * c)).coeffs, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-0.8, 0.8))
def test_composition_chain_rule(seed, x0):
    # jet of exp(sin(x) + x^2) two ways: direct evaluation versus composing
    # exp with the jet of the inner function.
    rng = np.random.default_rng(seed)
    order = 5
    x = Jet.variable(0, x0, 1, order)
    inner = jet_sin(x) + x * x
    direct = jet_exp(inner)
    outer = [math.exp(inner.value) / math.factorial(k) for k in range(order + 1)]
    composed = jet_compose_univariate(outer, inner)
    assert np.allclose(direct.coeffs, composed.coeffs, rtol=1e-12, atol=1e-12)


def test_trig_and_sqrt_derivatives():
    t = Jet.variable(0, 0.7, 1, 4)
    assert jet_sin(t).extract((1,)) == pytest.approx(math.cos(0.7), rel=1e-13)
    assert jet_cos(t).extract((2,)) == pytest.approx(-math.cos(0.7), rel=1e-13)
    assert jet_sinh(t).extract((2,)) == pytest.approx(math.sinh(0.7), rel=1e-13)
    s = jet_sqrt(t)
    assert s.extract((1,)) == pytest.approx(0.5 / math.sqrt(0.7), rel=1e-13)
    r = jet_reciprocal(t)
    assert r.extract((1,)) == pytest.approx(-1.0 / 0.7 ** 2, rel=1e-13)


def test_jet_dot_matches_naive_sum():
    rng = np.random.default_rng(11)
    aa = [random_jet(rng, 3, 3) for _ in range(5)]
    bb = [random_jet(rng, 3, 3) for _ in range(5)]
    fast = jet_dot(aa, bb)
    slow = aa[0] * bb[0]
    for a, b in zip(aa[1:], bb[1:]):
        slow = slow + a * b
    assert np.allclose(fast.coeffs, slow.coeffs, atol=1e-13)


def test_monomial_stack_evaluates_polynomials():
    # p(x, y) = 3 + 2 x y - x^3 evaluated as a jet through the stack
    point = [0.4, -0.2]
    order, degree = 3, 3
    stack = monomial_stack(point, order, degree)
    exps = monomial_exponents(2, degree)
    coeff = np.zeros(len(exps))
    for r, e in enumerate(exps):
        if tuple(e) == (0, 0):
            coeff[r] = 3.0
        elif tuple(e) == (1, 1):
            coeff[r] = 2.0
        elif tuple(e) == (3, 0):
            coeff[r] = -1.0
    jet = Jet(2, order, coeff @ stack)
    x, y = point
    assert jet.value == pytest.approx(3 + 2 * x * y - x ** 3, rel=1e-13)
    assert jet.extract((1, 0)) == pytest.approx(2 * y - 3 * x ** 2, rel=1e-13)
    assert jet.extract((0, 1)) == pytest.approx(2 * x, rel=1e-13)
    assert jet.extract((2, 1)) == pytest.approx(0.0, abs=1e-14)


def test_power_operator():
    x = Jet.variable(0, 1.2, 1, 4)
    assert np.allclose((x ** 3).coeffs, (x * x * x).coeffs, atol=1e-13)
    assert np.allclose((x ** 0).coeffs, Jet.constant(1.0, 1, 4).coeffs)
