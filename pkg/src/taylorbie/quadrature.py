"""Hybrid Gauss-trapezoidal rules for periodic integrands with a log singularity.

For a 2pi-periodic (or L-periodic) integrand f(s) = phi(s) log|s - s_i| + psi(s)
with phi, psi smooth, the rule

    h * sum_{a <= |j - i| <= n - a} f(s_j) + h * sum_k u_k [f(s_i + v_k h) + f(s_i - v_k h)]

drops the 2a - 1 trapezoid nodes nearest the singularity and replaces them by
j off-grid nodes on each side.  The nodes v_k and weights u_k satisfy

    sum_k u_k v_k^p        = -zeta(-p, a)
    sum_k u_k v_k^p log v_k = zeta'(-p, a),     p = 0..j-1,

with zeta the Hurwitz zeta function; the rule is then accurate to order
O(h^{j+1} log h) for such integrands.  The tables below were generated in
extended precision and are checked against these conditions in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "AlpertRule",
    "alpert_rule",
    "alpert_correction",
    "available_orders",
    "periodic_interp_weights",
    "log_singular_quadrature",
]

# order: (a, [(v_k, u_k), ...])
_RULES = {
    8: (6, [
        ("0.008726295714627151355837346", "0.03289239841273566864201912"),
        ("0.1213552103401668298799885", "0.2271516795647105519692644"),
        ("0.5294921934545036154533948", "0.6144024848414928665451805"),
        ("1.368660789416366438769907", "1.053537932050639478870998"),
        ("2.573865195211093744964536", "1.307061723276206703390755"),
        ("3.867705928915246370735107", "1.228785872998716928030633"),
        ("4.990928361578598426946513", "1.036167908855497802551149"),
    ]),
}


@dataclass(frozen=True)
class AlpertRule:
    order: int
    a: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def min_points(self):
        return 2 * self.a + 1


def available_orders():
    return tuple(sorted(_RULES))


def alpert_rule(order):
    if order not in _RULES:
        raise ConfigError(f"no hybrid Gauss-trapezoidal rule of order {order}; "
                          f"available: {available_orders()}")
    a, tab = _RULES[order]
    v = np.array([float(x) for x, _ in tab])
    u = np.array([float(y) for _, y in tab])
    v.setflags(write=False)
    u.setflags(write=False)
    return AlpertRule(order, a, v, u)


def alpert_correction(order, n):
    """Rule of the requested order after checking that ``n`` nodes can carry it."""
    rule = alpert_rule(order)
    if n < rule.min_points:
        raise ConfigError(f"n={n} too small for the order-{order} rule (need n >= {rule.min_points})")
    return rule


def select_rule(n, order=None):
    """Highest-order rule usable with ``n`` nodes, or the requested one."""
    if order is not None:
        return alpert_correction(order, n)
    for o in sorted(_RULES, reverse=True):
        rule = alpert_rule(o)
        if n >= max(rule.min_points, 4 * rule.a):
            return rule
    return alpert_correction(min(_RULES), n)


def periodic_interp_weights(n, delta):
    """Weights w_j with f(s_0 + delta h) ~ sum_j w_j f(s_j) (trigonometric interpolation).

    ``delta`` may be an array; the result has shape delta.shape + (n,).
    """
    delta = np.asarray(delta, dtype=float)
    x = delta[..., None] - np.arange(n)
    # wrap to (-n/2, n/2] so the kernel is evaluated where it is well conditioned
    x = x - n * np.round(x / n)
    px = np.pi * x
    with np.errstate(divide="ignore", invalid="ignore"):
        if n % 2:
            w = np.sin(px) / (n * np.sin(px / n))
        else:
            w = np.sin(px) / (n * np.tan(px / n))
    exact = np.abs(x) < 1e-14
    w = np.where(exact, 1.0, w)
    return w


def log_singular_quadrature(f, L, n, order, s0=0.0):
    """Apply the periodic rule to a callable ``f(s)`` singular at ``s0`` (for tests)."""
    rule = alpert_correction(order, n)
    h = L / n
    j = np.arange(rule.a, n - rule.a + 1)
    total = h * np.sum(f(s0 + j * h))
    sp = np.concatenate([s0 + rule.nodes * h, s0 - rule.nodes * h])
    total += h * np.sum(np.concatenate([rule.weights, rule.weights]) * f(sp))
    return total
