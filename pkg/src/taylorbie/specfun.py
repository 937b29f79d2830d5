"""Special functions used by the modal kernels and the analytic reference.

Complete elliptic integrals are evaluated with the arithmetic-geometric mean,
which converges quadratically and needs no branch logic.  Everything here is
vectorized over numpy arrays.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "EllipticPair",
    "ellip_KE",
    "ellip_KE_comp",
    "ellip_KE_derivs",
    "legendre_Q_halves",
    "legendre_Q_halves_xm1",
    "legendre_Q_halves_derivs_xm1",
    "bessel_JY01",
]

_AGM_MAXITER = 40


class EllipticPair(NamedTuple):
    K: np.ndarray
    E: np.ndarray


def ellip_KE_comp(kc):
    """K and E as functions of the complementary modulus ``kc = sqrt(1 - k^2)``.

    Passing ``kc`` directly keeps full relative accuracy of K near the
    logarithmic singularity, where forming ``1 - k^2`` would cancel.
    """
    kc = np.asarray(kc, dtype=float)
    if np.any(kc <= 0.0) or np.any(kc > 1.0):
        raise DomainError("complementary modulus must lie in (0, 1]")
    a = np.ones_like(kc)
    b = kc.copy()
    # c_0^2 = k^2 = 1 - kc^2 = (1 - kc)(1 + kc)
    csum = 0.5 * (1.0 - kc) * (1.0 + kc)
    pow2 = 0.5
    for _ in range(_AGM_MAXITER):
        c = 0.5 * (a - b)
        pow2 *= 2.0
        csum = csum + pow2 * c * c
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        if np.all(np.abs(c) <= 1e-17 * a):
            break
    K = 0.5 * np.pi / a
    E = K * (1.0 - csum)
    return EllipticPair(K, E)


def ellip_KE(t):
    """Complete elliptic integrals K(t), E(t) of modulus ``t`` in [0, 1)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t >= 1.0) or np.any(~np.isfinite(t)):
        raise DomainError("elliptic modulus must lie in [0, 1)")
    kc = np.sqrt((1.0 - t) * (1.0 + t))
    return ellip_KE_comp(kc)


def ellip_KE_derivs(t):
    """Derivatives dK/dt and dE/dt for modulus ``0 <= t < 1``.

    Below ``t = 1e-3`` the closed forms lose digits to cancellation and the
    leading Taylor terms are used instead.
    """
    t = np.asarray(t, dtype=float)
    K, E = ellip_KE(t)
    small = t < 1e-3
    ts = np.where(small, 0.5, t)
    one_m = (1.0 - ts) * (1.0 + ts)
    dK = (E - one_m * K) / (ts * one_m)
    dE = (E - K) / ts
    t2 = t * t
    dK_series = 0.5 * np.pi * (0.5 * t + 0.5625 * t * t2)
    dE_series = -0.5 * np.pi * (0.5 * t + 0.1875 * t * t2)
    return np.where(small, dK_series, dK), np.where(small, dE_series, dE)


def legendre_Q_halves_xm1(xm1):
    """Q_{-1/2}(chi) and Q_{1/2}(chi) given ``xm1 = chi - 1 > 0``.

    The elliptic modulus is t = sqrt(2/(1+chi)) and its complement
    sqrt((chi-1)/(chi+1)) is formed from ``xm1`` without cancellation.
    Q_{1/2} is a difference of two terms of size sqrt(chi), so for large chi
    it is accurate in absolute rather than relative terms.
    """
    xm1 = np.asarray(xm1, dtype=float)
    if np.any(xm1 <= 0.0):
        raise DomainError("Legendre Q_{+-1/2} requires chi > 1 (coincident circles)")
    xp1 = xm1 + 2.0
    t = np.sqrt(2.0 / xp1)
    kc = np.sqrt(xm1 / xp1)
    K, E = ellip_KE_comp(kc)
    chi = xm1 + 1.0
    qm = t * K
    qp = chi * t * K - np.sqrt(2.0 * xp1) * E
    return qm, qp


def legendre_Q_halves(chi):
    """Toroidal Legendre functions Q_{-1/2}(chi), Q_{1/2}(chi) for chi > 1."""
    chi = np.asarray(chi, dtype=float)
    if np.any(chi <= 1.0):
        raise DomainError("Legendre Q_{+-1/2} requires chi > 1 (coincident circles)")
    return legendre_Q_halves_xm1(chi - 1.0)


def legendre_Q_halves_derivs_xm1(xm1):
    """Values and chi-derivatives of Q_{-1/2}, Q_{1/2}.

    Returns ``(qm, qp, dqm, dqp)``.  The derivatives follow from the chain
    rule through the modulus t(chi) = sqrt(2/(1+chi)), dt/dchi = -t^3/4, with
    dK/dt and dE/dt in closed form.
    """
    xm1 = np.asarray(xm1, dtype=float)
    if np.any(xm1 <= 0.0):
        raise DomainError("Legendre Q_{+-1/2} requires chi > 1 (coincident circles)")
    xp1 = xm1 + 2.0
    chi = xm1 + 1.0
    t = np.sqrt(2.0 / xp1)
    kc = np.sqrt(xm1 / xp1)
    K, E = ellip_KE_comp(kc)
    kc2 = xm1 / xp1  # 1 - t^2
    dK = (E - kc2 * K) / (t * kc2)
    dE = (E - K) / t
    dt = -0.25 * t**3
    qm = t * K
    qp = chi * qm - (2.0 / t) * E
    dqm = (K + t * dK) * dt
    dqp = qm + chi * dqm - (2.0 / t) * dE * dt + (2.0 / (t * t)) * E * dt
    return qm, qp, dqm, dqp


def bessel_JY01(x):
    """J0, J1, Y0, Y1 at ``x``; Y requires x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("Bessel Y0/Y1 require x > 0")
    return special.j0(x), special.j1(x), special.y0(x), special.y1(x)
