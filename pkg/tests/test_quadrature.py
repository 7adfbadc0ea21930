import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hardylab.quadrature import collapsed_triangle_rule, gauss_interval, simplex_rule, triangle_rule


@pytest.mark.parametrize("order", [1, 2, 4, 6, 10, 30])
def test_interval_weights_sum_to_one(order):
    x, w = gauss_interval(order)
    assert np.all((x > 0) & (x < 1))
    assert w.sum() == pytest.approx(1.0, abs=1e-14)


@given(order=st.integers(1, 20), p=st.integers(0, 20))
def test_interval_rule_exact_on_polynomials(order, p):
    if p > order:
        return
    x, w = gauss_interval(order)
    assert w @ x**p == pytest.approx(1.0 / (p + 1), rel=1e-12)


def _monomial_triangle(a, b):
    # int over the unit simplex of x^a y^b = a! b! / (a + b + 2)!
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 6])
def test_triangle_rule_exact(order):
    bary, w = triangle_rule(order)
    assert w.sum() == pytest.approx(1.0, abs=1e-13)
    assert np.all(bary >= -1e-14)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(order + 1):
        for b in range(order + 1 - a):
            # weights are relative to the simplex area 1/2
            assert 0.5 * (w @ (x**a * y**b)) == pytest.approx(_monomial_triangle(a, b), rel=1e-11, abs=1e-15)


@pytest.mark.parametrize("apex", [0, 1, 2])
def test_collapsed_rule_exact_and_resolves_apex_singularity(apex):
    bary, w = collapsed_triangle_rule(8, 16, apex)
    assert w.sum() == pytest.approx(1.0, abs=1e-13)
    # 1/r at the apex is integrable; the Duffy rule integrates it to high accuracy
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    x = bary @ P
    r = np.linalg.norm(x - P[apex], axis=1)
    val = 0.5 * (w @ (1.0 / r))
    # reference by an independent polar integration (scipy)
    from scipy import integrate

    others = [P[i] - P[apex] for i in range(3) if i != apex]
    a0 = math.atan2(others[0][1], others[0][0])
    a1 = math.atan2(others[1][1], others[1][0])
    lo, hi = sorted((a0, a1))
    if hi - lo > math.pi:
        lo, hi = hi, lo + 2 * math.pi
    e0, e1 = others

    def rmax(t):
        d = np.array([math.cos(t), math.sin(t)])
        # ray from the apex to the opposite edge e0 + s (e1 - e0)
        M = np.column_stack([d, e0 - e1])
        return np.linalg.solve(M, e0)[0]

    ref = integrate.quad(rmax, lo, hi, epsabs=1e-13)[0]
    assert val == pytest.approx(ref, rel=1e-9)


@settings(max_examples=30)
@given(dim=st.sampled_from([1, 2]), order=st.integers(1, 6))
def test_simplex_rule_integrates_constants(dim, order):
    bary, w = simplex_rule(dim, order)
    assert bary.shape[1] == dim + 1
    assert np.allclose(bary.sum(axis=1), 1.0)
    assert w.sum() == pytest.approx(1.0, abs=1e-13)
