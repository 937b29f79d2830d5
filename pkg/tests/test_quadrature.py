import mpmath
import numpy as np
import pytest

from taylorbie import quadrature as q
from taylorbie.errors import ConfigError


def test_rule_moment_conditions():
    rule = q.alpert_rule(8)
    v, u = rule.nodes, rule.weights
    with mpmath.workdps(30):
        for p in range(len(v)):
            lhs = float(np.sum(u * v ** p))
            rhs = float(-mpmath.zeta(-p, rule.a))
            assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)
            lhs = float(np.sum(u * v ** p * np.log(v)))
            rhs = float(mpmath.zeta(-p, rule.a, derivative=1))
            assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)


def _log_problem(a=1.5):
    # 1/(a - cos s) = (1 + 2 sum rho^k cos ks)/sqrt(a^2-1) and
    # int_0^{2pi} cos(ks) log(4 sin^2(s/2)) ds = -2 pi / k
    rho = a - np.sqrt(a * a - 1)
    exact = 4 * np.pi * np.log(1 - rho) / np.sqrt(a * a - 1)
    return (lambda s: np.log(4 * np.sin(s / 2) ** 2) / (a - np.cos(s))), exact


def test_alpert_eighth_order_convergence():
    f, exact = _log_problem()
    n1, n2 = 32, 192
    e1 = abs(q.log_singular_quadrature(f, 2 * np.pi, n1, 8) - exact)
    e2 = abs(q.log_singular_quadrature(f, 2 * np.pi, n2, 8) - exact)
    h1, h2 = 2 * np.pi / n1, 2 * np.pi / n2
    # the rule is O(h^8 log h); remove the log factor before measuring the order
    order = np.log((e1 / abs(np.log(h1))) / (e2 / abs(np.log(h2)))) / np.log(h1 / h2)
    assert order >= 8.0
    assert e2 < 1e-12


def test_singular_point_off_origin():
    f, exact = _log_problem(2.0)
    s0 = 1.3
    g = lambda s: f(s - s0)
    assert q.log_singular_quadrature(g, 2 * np.pi, 128, 8, s0=s0) == pytest.approx(exact, abs=1e-12)


def test_plain_trapezoid_would_fail():
    # sanity check that the corrected rule matters: skip the singular node only
    f, exact = _log_problem()
    n = 128
    s = 2 * np.pi * np.arange(1, n) / n
    assert abs(2 * np.pi / n * np.sum(f(s)) - exact) > 1e-3


def test_unknown_order_and_small_n():
    assert 8 in q.available_orders()
    with pytest.raises(ConfigError):
        q.alpert_rule(5)
    with pytest.raises(ConfigError):
        q.alpert_correction(8, 10)


def test_select_rule():
    assert q.select_rule(100).order == max(q.available_orders())


@pytest.mark.parametrize("n", [16, 17])
def test_periodic_interpolation_exact_for_band_limited(n, rng):
    k = np.arange(n)
    s = 2 * np.pi * k / n
    f = lambda x: np.cos(3 * x) + 0.5 * np.sin(5 * x) + 0.25
    d = rng.uniform(0, n, 7)
    w = q.periodic_interp_weights(n, d)
    np.testing.assert_allclose(w @ f(s), f(2 * np.pi * d / n), atol=1e-13)
    np.testing.assert_allclose(q.periodic_interp_weights(n, 0.0), np.eye(n)[0], atol=1e-15)
