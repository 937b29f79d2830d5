"""Azimuthal Fourier modes of the Helmholtz kernel exp(i lam R)/(4 pi R).

For a target circle (r, z) and a source circle (r', z') the modal kernel is

    g_k = (1/2pi) int_{-pi}^{pi} exp(i lam R)/(4 pi R) exp(-i k theta) dtheta
        = (1/pi)  int_0^pi     exp(i lam R)/(4 pi R) cos(k theta) dtheta,

with R(theta)^2 = (r - r')^2 + (z - z')^2 + 4 r r' sin^2(theta/2).  It is split
into a static part 1/(4 pi R), which is a toroidal Legendre function
Q_{k-1/2}(chi)/(4 pi^2 sqrt(r r')), and the bounded remainder
(exp(i lam R) - 1)/(4 pi R), integrated numerically.

The remainder is integrated with a fixed composite Gauss-Legendre rule on
panels graded dyadically toward theta = 0, the depth chosen from the distance
arccosh(chi) of the nearest complex singularity of R(theta).  Panels are also
capped in width so the oscillation exp(i lam R) stays resolved up to a
declared maximum lam.  The rule depends only on the geometry, so a
:class:`ModalKernelTable` precomputes it once and is re-evaluated cheaply for
many values of lam (resonance scans).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import AccuracyError, DomainError
from .specfun import legendre_Q_halves_derivs_xm1

__all__ = [
    "ModalKernelTable",
    "modal_g",
    "modal_trig",
    "modal_grad",
    "near_diagonal_smooth",
    "trig_from_modes",
    "static_modes",
]

_GL_NODES = 10
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_NODES)
_MAX_DEPTH = 60
_MAX_PHASE = 200.0
_STATIC_QUAD_CHI = 3.0
_SERIES_X = 0.5
_SERIES_TERMS = 22


def _depth(xm1):
    """Dyadic refinement depth for pairs with chi - 1 = ``xm1``."""
    theta_b = np.log1p(xm1 + np.sqrt(xm1 * (xm1 + 2.0)))  # arccosh(chi)
    k = np.ceil(np.log2(np.pi / theta_b)) + 2.0
    return np.clip(k, 0, _MAX_DEPTH).astype(int)


@lru_cache(maxsize=256)
def _theta_rule(depth, wmax):
    """Composite Gauss-Legendre nodes and weights on [0, pi]."""
    edges = [np.pi * 2.0 ** (-k) for k in range(depth + 1)] + [0.0]
    edges = np.array(edges[::-1])
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(1, int(np.ceil((b - a) / wmax)))
        sub = np.linspace(a, b, m + 1)
        for c, d in zip(sub[:-1], sub[1:]):
            hw = 0.5 * (d - c)
            xs.append(c + hw * (_GL_X + 1.0))
            ws.append(hw * _GL_W)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def near_diagonal_smooth(lam, R):
    """(exp(i lam R) - 1)/(4 pi R) by its Taylor series (intended for lam R < 0.1)."""
    lam = float(lam)
    x = lam * np.asarray(R, dtype=float)
    term = np.ones_like(x, dtype=complex)
    total = term.copy()
    k = 0
    while True:
        k += 1
        term = term * (1j * x) / (k + 1)
        total = total + term
        if np.all(np.abs(term) < 1e-16 * np.maximum(np.abs(total), 1e-300)) or k > 60:
            break
    return 1j * lam / (4.0 * np.pi) * total


def _smooth_and_deriv(lam, R):
    """E = (e^{i lam R} - 1)/(4 pi R) and dE/dR, both without cancellation."""
    x = lam * R
    sh = np.sin(0.5 * x)
    s = np.sin(x)
    c = np.cos(x)
    inv4piR = 1.0 / (4.0 * np.pi * R)
    E = (-2.0 * sh * sh + 1j * s) * inv4piR
    # dE/dR = (e^{ix}(ix - 1) + 1)/(4 pi R^2); the bracket is O(x^2)
    re = 1.0 - c - x * s
    im = x * c - s
    small = x < _SERIES_X
    if np.any(small):
        xs = x[small]
        # e^{ix}(ix-1)+1 = sum_{k>=2} (ix)^k (k-1)/k!
        acc = np.zeros_like(xs, dtype=complex)
        term = np.ones_like(xs, dtype=complex)
        ix = 1j * xs
        for k in range(1, _SERIES_TERMS + 1):
            term = term * ix / k
            if k >= 2:
                acc = acc + (k - 1) * term
        re = re.copy()
        im = im.copy()
        re[small] = acc.real
        im[small] = acc.imag
    dE = (re + 1j * im) * inv4piR / R
    return E, dE


def _legendre_Q_modes(xm1, kmax):
    """Q_{k-1/2}(chi) and d/dchi for k = 0..kmax by upward recurrence."""
    qm, qp, dqm, dqp = legendre_Q_halves_derivs_xm1(xm1)
    chi = xm1 + 1.0
    Q = [qm, qp]
    dQ = [dqm, dqp]
    for k in range(1, kmax):
        # (k + 1/2) Q_{k+1/2} = 2k chi Q_{k-1/2} - (k - 1/2) Q_{k-3/2}
        q = (2.0 * k * chi * Q[k] - (k - 0.5) * Q[k - 1]) / (k + 0.5)
        dq = (2.0 * k * (Q[k] + chi * dQ[k]) - (k - 0.5) * dQ[k - 1]) / (k + 0.5)
        Q.append(q)
        dQ.append(dq)
    return np.array(Q[:kmax + 1]), np.array(dQ[:kmax + 1])


def static_modes(r, z, rp, zp, kmax):
    """Modes of 1/(4 pi R) for k = 0..kmax and their target gradients.

    Returns ``(S, S_r, S_z)``, each of shape (kmax + 1, npairs).  For k >= 2
    the upward Legendre recurrence loses accuracy when chi is large; those
    pairs are integrated directly, the integrand being smooth there.
    """
    r, z, rp, zp = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (r, z, rp, zp))
    dz = z - zp
    xm1 = ((r - rp) ** 2 + dz * dz) / (2.0 * r * rp)
    Q, dQ = _legendre_Q_modes(xm1, max(kmax, 1))
    pref = 1.0 / (4.0 * np.pi**2 * np.sqrt(r * rp))
    chi_r = (r * r - rp * rp - dz * dz) / (2.0 * r * r * rp)
    chi_z = dz / (r * rp)
    S = pref * Q
    Sr = pref * (dQ * chi_r - Q / (2.0 * r))
    Sz = pref * dQ * chi_z
    if kmax >= 2:
        far = xm1 + 1.0 >= _STATIC_QUAD_CHI
        if np.any(far):
            x, w = _theta_rule(0, np.pi / 4)
            rf, rpf, dzf = r[far][:, None], rp[far][:, None], dz[far][:, None]
            s2 = np.sin(0.5 * x) ** 2
            R = np.sqrt((rf - rpf) ** 2 + dzf**2 + 4.0 * rf * rpf * s2)
            inv = 1.0 / (4.0 * np.pi * R)
            d = -inv / (R * R)
            for k in range(2, kmax + 1):
                wk = w * np.cos(k * x) / np.pi
                S[k, far] = inv @ wk
                Sr[k, far] = (d * (rf - rpf + 2.0 * rpf * s2)) @ wk
                Sz[k, far] = (d * dzf) @ wk
    return S[:kmax + 1], Sr[:kmax + 1], Sz[:kmax + 1]


class ModalKernelTable:
    """Modal kernels g_k, k = 0..kmax, for a fixed set of (target, source) pairs.

    Parameters
    ----------
    r, z : target coordinates, arrays of equal shape.
    rp, zp : source coordinates, same shape.
    kmax : highest mode computed.
    lam_max : largest lam the table will be evaluated at; sets panel widths.
    grad : also prepare target gradients.
    """

    def __init__(self, r, z, rp, zp, kmax, lam_max, grad=True, chunk=4_000_000):
        r, z, rp, zp = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, z, rp, zp)))
        self.shape = r.shape
        r, z, rp, zp = (a.ravel() for a in (r, z, rp, zp))
        if np.any(r <= 0.0) or np.any(rp <= 0.0):
            raise DomainError("modal kernels require r > 0 and r' > 0")
        dz = z - zp
        xm1 = ((r - rp) ** 2 + dz * dz) / (2.0 * r * rp)
        if np.any(~(xm1 > 1e-28)):
            raise DomainError("coincident source and target circles: use the singular-correction path")
        self.kmax = int(kmax)
        self.lam_max = float(lam_max)
        self.grad = bool(grad)
        self.npairs = r.size
        rmax = float(max(r.max(initial=0.0), rp.max(initial=0.0)))
        phase = self.lam_max * rmax * np.pi
        if phase > _MAX_PHASE * np.pi:
            raise AccuracyError(
                f"lam*r = {self.lam_max * rmax:.1f} exceeds the oscillation budget {_MAX_PHASE}")
        self.wmax = 4.0 / max(self.lam_max * rmax, 4.0 / np.pi)
        self.static = static_modes(r, z, rp, zp, self.kmax)
        depth = _depth(xm1)
        ks = np.arange(self.kmax + 1)
        self._buckets = []
        for d in np.unique(depth):
            idx = np.nonzero(depth == d)[0]
            x, w = _theta_rule(int(d), self.wmax)
            s2 = np.sin(0.5 * x) ** 2
            W = (w[:, None] * np.cos(np.outer(x, ks))) / np.pi
            cols = [W]
            if self.grad:
                cols.append(W * (2.0 * s2)[:, None])
            Wall = np.concatenate(cols, axis=1)
            step = max(1, chunk // x.size)
            for start in range(0, idx.size, step):
                sub = idx[start:start + step]
                R = np.sqrt((r[sub, None] - rp[sub, None]) ** 2 + dz[sub, None] ** 2
                            + 4.0 * (r[sub] * rp[sub])[:, None] * s2[None, :])
                self._buckets.append((sub, R, Wall))
        self._r, self._rp, self._dz = r, rp, dz

    def evaluate(self, lam):
        """Return (g, g_r, g_z); each (kmax+1,) + shape, complex.

        ``g_r`` and ``g_z`` are None when the table was built without gradients.
        """
        lam = float(lam)
        if lam < 0.0 or lam > self.lam_max * (1.0 + 1e-12):
            raise AccuracyError(f"lam={lam} outside the table's range [0, {self.lam_max}]")
        nk = self.kmax + 1
        S, Sr, Sz = self.static
        g = S.astype(complex)
        gr = Sr.astype(complex) if self.grad else None
        gz = Sz.astype(complex) if self.grad else None
        if lam > 0.0:
            for sub, R, Wall in self._buckets:
                if self.grad:
                    E, dE = _smooth_and_deriv(lam, R)
                    a = E @ Wall[:, :nk]
                    dER = dE / R
                    b = dER @ Wall
                    g[:, sub] += a.T
                    gz[:, sub] += (b[:, :nk] * self._dz[sub, None]).T
                    gr[:, sub] += (b[:, :nk] * (self._r - self._rp)[sub, None]
                                   + b[:, nk:] * self._rp[sub, None]).T
                else:
                    x = lam * R
                    sh = np.sin(0.5 * x)
                    E = (-2.0 * sh * sh + 1j * np.sin(x)) / (4.0 * np.pi * R)
                    g[:, sub] += (E @ Wall[:, :nk]).T
        shp = (nk,) + self.shape
        g = g.reshape(shp)
        if self.grad:
            gr = gr.reshape(shp)
            gz = gz.reshape(shp)
        return g, gr, gz


def trig_from_modes(gm1, g0, gp1):
    """g^cos = (g_{l+1} + g_{l-1})/2 and g^sin = (g_{l-1} - g_{l+1})/(2i)."""
    return 0.5 * (gp1 + gm1), (gm1 - gp1) / 2j


def _mode(arr, k):
    return arr[abs(k)]


def _table(r, z, rp, zp, lam, kmax, grad):
    lam = float(lam)
    if lam < 0.0:
        raise DomainError("lam must be non-negative")
    return ModalKernelTable(r, z, rp, zp, kmax, max(lam, 1e-3), grad=grad)


def modal_g(r, z, rp, zp, lam, ell=0):
    """Modal kernel g_ell between target (r, z) and source (rp, zp)."""
    ell = abs(int(ell))
    g, _, _ = _table(r, z, rp, zp, lam, ell, False).evaluate(lam)
    return g[ell]


def modal_trig(r, z, rp, zp, lam, ell=0):
    """(g_ell^cos, g_ell^sin); g_0^sin vanishes identically."""
    ell = int(ell)
    kmax = abs(ell) + 1
    g, _, _ = _table(r, z, rp, zp, lam, kmax, False).evaluate(lam)
    gc, gs = trig_from_modes(_mode(g, ell - 1), _mode(g, ell), _mode(g, ell + 1))
    if ell == 0:
        gs = np.zeros_like(gs)
    return gc, gs


def modal_grad(r, z, rp, zp, lam, ell=0):
    """Target gradients of g_ell, g_ell^cos and g_ell^sin.

    Returns a dict with keys ``g_r, g_z, cos_r, cos_z, sin_r, sin_z``.
    """
    ell = int(ell)
    kmax = abs(ell) + 1
    _, gr, gz = _table(r, z, rp, zp, lam, kmax, True).evaluate(lam)
    cr, sr = trig_from_modes(_mode(gr, ell - 1), _mode(gr, ell), _mode(gr, ell + 1))
    cz, sz = trig_from_modes(_mode(gz, ell - 1), _mode(gz, ell), _mode(gz, ell + 1))
    if ell == 0:
        sr = np.zeros_like(sr)
        sz = np.zeros_like(sz)
    return {"g_r": _mode(gr, ell), "g_z": _mode(gz, ell),
            "cos_r": cr, "cos_z": cz, "sin_r": sr, "sin_z": sz}
