"""Exact axisymmetric Taylor states built from Grad-Shafranov solutions.

The poloidal flux function

    psi = r J1(lam r) + c1 r Y1(lam r) + c2 r J1(k r) cos(c6 z) + c3 r Y1(k r) cos(c6 z)
          + c4 cos(lam sqrt(r^2 + z^2)) + c5 cos(lam z),      k = sqrt(lam^2 - c6^2),

solves r d/dr (psi_r / r) + psi_zz = -lam^2 psi, and

    B = lam (psi / r) phi_hat + (1/r) grad psi x phi_hat

is then an exact Beltrami field, tangent to every level set of psi.  The seven
unknowns (c1..c6, lam) are fixed by making psi = 0 pass through the outer,
inner and bottom points of a Miller-type target shape with matching
curvatures there.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import ConfigError, DomainError, GeometryError
from .geometry import LevelSetCurve, discretize_arclength
from .specfun import bessel_JY01

__all__ = [
    "AnalyticState",
    "psi_eval",
    "fit_shape_constraints",
    "shape_deviation",
    "constraint_residual",
    "exact_B",
    "exact_B_and_flux",
    "toroidal_flux",
    "trace_level_set",
    "magnetic_axis",
    "midplane_crossing",
    "PsiFunction",
]


@dataclass(frozen=True)
class AnalyticState:
    c: tuple
    lam: float
    eps: float
    kappa: float
    delta: float
    R0: float = 1.0
    residual: float = field(default=float("nan"), compare=False)

    @property
    def alpha(self):
        return float(np.arcsin(self.delta))

    @property
    def curvatures(self):
        a, e, k = self.alpha, self.eps, self.kappa
        return (-(1.0 + a) ** 2 / (e * k * k), (1.0 - a) ** 2 / (e * k * k),
                k / (e * np.cos(a) ** 2))

    @property
    def params(self):
        return np.array(list(self.c) + [self.lam])


def _bessel_pair(x):
    """(J0, J1, Y0, Y1) for real or complex arguments."""
    if np.iscomplexobj(x):
        return special.jv(0, x), special.jv(1, x), special.yv(0, x), special.yv(1, x)
    return bessel_JY01(x)


def _psi_terms(p, r, z):
    """psi and partials up to second order for parameters p = (c1..c6, lam).

    Accepts complex parameters (Bessel terms then use scipy).  Returns a dict of
    arrays keyed by '', 'r', 'z', 'rr', 'rz', 'zz'.
    """
    c1, c2, c3, c4, c5, c6, lam = p
    k2 = lam * lam - c6 * c6
    if not np.iscomplexobj(k2) and k2 <= 0.0:
        raise DomainError("need lam^2 > c6^2 for real Bessel arguments")
    k = np.sqrt(k2)
    out = {key: 0.0 for key in ("", "r", "z", "rr", "rz", "zz")}

    def radial(kk, which):
        J0, J1, Y0, Y1 = _bessel_pair(kk * r)
        B0, B1 = (J0, J1) if which == "J" else (Y0, Y1)
        f = r * B1
        fr = kk * r * B0
        frr = kk * B0 - kk * kk * r * B1
        return f, fr, frr

    f, fr, frr = radial(lam, "J")
    g, gr, grr = radial(lam, "Y")
    for coef, (a, ar, arr) in ((1.0, (f, fr, frr)), (c1, (g, gr, grr))):
        out[""] = out[""] + coef * a
        out["r"] = out["r"] + coef * ar
        out["rr"] = out["rr"] + coef * arr
    cz, sz = np.cos(c6 * z), np.sin(c6 * z)
    for coef, which in ((c2, "J"), (c3, "Y")):
        a, ar, arr = radial(k, which)
        out[""] = out[""] + coef * a * cz
        out["r"] = out["r"] + coef * ar * cz
        out["rr"] = out["rr"] + coef * arr * cz
        out["z"] = out["z"] - coef * a * c6 * sz
        out["rz"] = out["rz"] - coef * ar * c6 * sz
        out["zz"] = out["zz"] - coef * a * c6 * c6 * cz
    rho = np.sqrt(r * r + z * z)
    cr, sr = np.cos(lam * rho), np.sin(lam * rho)
    out[""] = out[""] + c4 * cr
    out["r"] = out["r"] - c4 * lam * sr * r / rho
    out["z"] = out["z"] - c4 * lam * sr * z / rho
    out["rr"] = out["rr"] + c4 * (-lam * lam * cr * r * r / rho**2 - lam * sr * (1.0 / rho - r * r / rho**3))
    out["rz"] = out["rz"] + c4 * (-lam * lam * cr * r * z / rho**2 + lam * sr * r * z / rho**3)
    out["zz"] = out["zz"] + c4 * (-lam * lam * cr * z * z / rho**2 - lam * sr * (1.0 / rho - z * z / rho**3))
    cl, sl = np.cos(lam * z), np.sin(lam * z)
    out[""] = out[""] + c5 * cl
    out["z"] = out["z"] - c5 * lam * sl
    out["zz"] = out["zz"] - c5 * lam * lam * cl
    return out


def psi_eval(state, r, z, order=0):
    """psi and its partials (dict keys '', 'r', 'z', 'rr', 'rz', 'zz')."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(r <= 0.0):
        raise DomainError("psi requires r > 0")
    out = _psi_terms(state.params, r, z)
    keys = {0: ("",), 1: ("", "r", "z"), 2: ("", "r", "z", "rr", "rz", "zz")}[min(int(order), 2)]
    return {key: np.asarray(out[key], dtype=float) + 0.0 * r for key in keys}


def _constraints(p, eps, kappa, delta, R0):
    a = np.arcsin(delta)
    N1 = -(1.0 + a) ** 2 / (eps * kappa * kappa)
    N2 = (1.0 - a) ** 2 / (eps * kappa * kappa)
    N3 = kappa / (eps * np.cos(a) ** 2)
    ro, ri = R0 + eps, R0 - eps
    rt, zt = R0 - delta * eps, -kappa * eps
    po = _psi_terms(p, np.array(ro), np.array(0.0))
    pi = _psi_terms(p, np.array(ri), np.array(0.0))
    pt = _psi_terms(p, np.array(rt), np.array(zt))
    return np.array([
        po[""], pi[""], pt[""], pt["r"],
        po["zz"] + N1 * po["r"],
        pi["zz"] + N2 * pi["r"],
        pt["rr"] + N3 * pt["z"],
    ])


def constraint_residual(state):
    return float(np.max(np.abs(_constraints(state.params, state.eps, state.kappa, state.delta, state.R0))))


def _jacobian(p, *args):
    """Central-difference Jacobian.

    A complex step would be exact for J, but Y of a complex argument is not
    resolved to the needed relative accuracy in its imaginary part.
    """
    J = np.empty((7, 7))
    for j in range(7):
        h = 1e-6 * max(1.0, abs(p[j]))
        q, m = p.copy(), p.copy()
        q[j] += h
        m[j] -= h
        J[:, j] = (_constraints(q, *args) - _constraints(m, *args)) / (2.0 * h)
    return J


def _linear_part(lam, c6, args):
    """Least-squares c1..c5 for fixed (lam, c6).

    Returns (c, residual) with the residual norm scaled by |psi(R0, 0)| so that
    near-trivial fits (psi close to zero everywhere) do not rank first.
    """
    base = np.array([0, 0, 0, 0, 0, c6, lam], dtype=float)
    f0 = _constraints(base, *args)
    A = np.empty((7, 5))
    for i in range(5):
        q = base.copy()
        q[i] = 1.0
        A[:, i] = _constraints(q, *args) - f0
    c, *_ = np.linalg.lstsq(A, -f0, rcond=None)
    res = A @ c + f0
    center = _psi_terms(np.concatenate([c, [c6, lam]]), np.array(args[3]), np.array(0.0))[""]
    return c, float(np.linalg.norm(res) / max(abs(center), 1e-300))


def _solve_full(p0, args):
    """Levenberg-Marquardt on the full 7x7 system; returns (p, max residual)."""
    def fun(p):
        try:
            return _constraints(p, *args)
        except DomainError:
            return np.full(7, 1e10)

    def jac(p):
        try:
            return _jacobian(p, *args)
        except DomainError:
            return np.eye(7)

    sol = optimize.least_squares(fun, p0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15,
                                 gtol=1e-15, max_nfev=400)
    return sol.x, float(np.max(np.abs(fun(sol.x))))


def _admissible(p, args):
    """Reject degenerate branches and states whose psi changes sign inside the shape."""
    eps, kappa, delta, R0 = args
    lam, c6 = p[6], p[5]
    if c6 < 1e-3 * lam or lam * lam - c6 * c6 < 1e-6 * lam * lam:
        return False
    t = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    a = np.arcsin(delta)
    frac = np.linspace(0.05, 0.9, 12)[:, None]
    r = R0 + frac * eps * np.cos(t + a * np.sin(t))
    z = frac * eps * kappa * np.sin(t)
    vals = _psi_terms(p, r, z)[""]
    center = _psi_terms(p, np.array(R0), np.array(0.0))[""]
    if not np.all(np.isfinite(vals)) or abs(center) < 1e-8:
        return False
    return bool(np.all(np.sign(vals) == np.sign(center)))


def shape_deviation(p, args, npts=256):
    """max |psi| on the target shape relative to max |psi| inside it."""
    eps, kappa, delta, R0 = args
    t = np.linspace(0.0, 2.0 * np.pi, npts, endpoint=False)
    a = np.arcsin(delta)
    frac = np.linspace(0.0, 1.0, 33)[:, None]
    r = R0 + frac * eps * np.cos(t + a * np.sin(t))
    z = frac * eps * kappa * np.sin(t)
    vals = np.abs(_psi_terms(p, r, z)[""])
    return float(np.max(vals[-1]) / np.max(vals))


def fit_shape_constraints(eps=0.95, kappa=2.0, delta=0.3, R0=1.0, initial=None,
                          lam_range=(0.5, 8.0), tol=1e-12):
    """Solve the seven shaping conditions for (c1..c6, lam).

    Without an initial guess, c1..c5 are eliminated by least squares for each
    (lam, c6) on a coarse grid (they enter linearly); the grid points with the
    smallest remaining residual (relative to |psi(R0, 0)|) seed a
    Levenberg-Marquardt solve of the full system.  The system has several
    roots; among the admissible ones, the one whose psi = 0 contour stays
    closest to the target shape is returned.
    """
    if initial is None:
        return _fit_cached(float(eps), float(kappa), float(delta), float(R0),
                           tuple(float(x) for x in lam_range), float(tol))
    return _fit(float(eps), float(kappa), float(delta), float(R0), initial, lam_range, tol)


@functools.lru_cache(maxsize=8)
def _fit_cached(eps, kappa, delta, R0, lam_range, tol):
    return _fit(eps, kappa, delta, R0, None, lam_range, tol)


def _fit(eps, kappa, delta, R0, initial, lam_range, tol):
    args = (eps, kappa, delta, R0)
    if not (0 < eps < R0) or kappa <= 0 or abs(delta) >= 1:
        raise ConfigError("invalid shaping parameters")
    seeds = []
    if initial is not None:
        seeds.append(np.asarray(initial, dtype=float))
    else:
        cand = []
        with np.errstate(all="ignore"):
            for lam in np.linspace(lam_range[0], lam_range[1], 76):
                for frac in np.linspace(0.04, 0.96, 47):
                    c6 = frac * lam
                    try:
                        c, res = _linear_part(lam, c6, args)
                    except (np.linalg.LinAlgError, FloatingPointError):
                        continue
                    if np.isfinite(res):
                        cand.append((res, lam, c6, c))
        cand.sort(key=lambda x: x[0])
        for res, lam, c6, c in cand[:40]:
            seeds.append(np.concatenate([c, [c6, lam]]))
    best, best_dev = None, np.inf
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for p0 in seeds:
            p, nf = _solve_full(p0, args)
            if not np.isfinite(nf) or nf > tol:
                continue
            p[5] = abs(p[5])
            if not _admissible(p, args):
                continue
            dev = shape_deviation(p, args)
            if dev < best_dev:
                best, best_dev = p, dev
    if best is None:
        raise GeometryError("shaping constraints did not converge from any starting point")
    st = AnalyticState(tuple(float(x) for x in best[:6]), float(best[6]), *args[:3], R0=args[3])
    return AnalyticState(st.c, st.lam, st.eps, st.kappa, st.delta, st.R0, constraint_residual(st))


def exact_B(state, r, z):
    """Exact field components (B_r, B_phi, B_z) at points (r, z)."""
    p = psi_eval(state, r, z, order=1)
    r = np.asarray(r, dtype=float)
    return -p["z"] / r, state.lam * p[""] / r, p["r"] / r


def exact_B_and_flux(state, targets, grids=None):
    """Exact field at targets (rows r, phi, z) and the toroidal flux over ``grids``."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    B = np.stack(exact_B(state, targets[:, 0], targets[:, 2]), axis=1)
    flux = None if grids is None else toroidal_flux(state, grids)
    return B, flux


def toroidal_flux(state, grids):
    """Flux of B_phi through the poloidal cross-section bounded by ``grids``.

    Uses -(1/lam) times the counter-clockwise circulation of B around the
    outer curve, plus the circulation around an inner curve if one is given.
    Both integrals are periodic trapezoidal sums.
    """
    total = 0.0
    for k, g in enumerate(grids):
        p = psi_eval(state, g.r, g.z, order=1)
        Btau = (p["r"] * g.zs - p["z"] * g.rs) / g.r
        circ = g.h * np.sum(Btau)
        total += circ if k == 0 else -circ
    return -total / state.lam


class PsiFunction:
    """Adapter exposing psi as value/grad/hess callables."""

    def __init__(self, state):
        self.state = state

    def value(self, r, z):
        return _psi_terms(self.state.params, np.asarray(r, float), np.asarray(z, float))[""]

    def grad(self, r, z):
        o = _psi_terms(self.state.params, np.asarray(r, float), np.asarray(z, float))
        return o["r"], o["z"]

    def hess(self, r, z):
        o = _psi_terms(self.state.params, np.asarray(r, float), np.asarray(z, float))
        return o["rr"], o["rz"], o["zz"]


def midplane_crossing(state, level, bracket):
    """Radius on z = 0 where psi = level inside ``bracket``."""
    f = lambda r: float(psi_eval(state, r, 0.0)[""]) - level
    return optimize.brentq(f, bracket[0], bracket[1], xtol=1e-15, rtol=1e-15, maxiter=200)


def magnetic_axis(state):
    """Location (r, 0) of the extremum of psi between the equatorial boundary points."""
    lo = state.R0 - state.eps
    hi = state.R0 + state.eps
    sgn = np.sign(psi_eval(state, 0.5 * (lo + hi), 0.0)[""])
    res = optimize.minimize_scalar(lambda r: -sgn * float(psi_eval(state, r, 0.0)[""]),
                                   bounds=(lo + 1e-6, hi - 1e-6), method="bounded",
                                   options={"xatol": 1e-12})
    return float(res.x), 0.0


def trace_level_set(state, level, n=None, rho_max=None):
    """Closed curve psi = level around the magnetic axis.

    Rays are cast from the magnetic axis and the first crossing on each is
    located by bracketing and Newton's method.  Returns the curve, or a
    CurveGrid with ``n`` arc-length nodes when ``n`` is given.
    """
    ra, za = magnetic_axis(state)
    if rho_max is None:
        rho_max = 2.0 * (state.eps * max(1.0, state.kappa))
    func = PsiFunction(state)
    curve = FirstCrossingCurve(func, level, (ra, za), rho_max)
    if n is None:
        return curve
    return discretize_arclength(curve, n)


class FirstCrossingCurve(LevelSetCurve):
    """Level set taken as the first crossing along each ray from the center."""

    def __init__(self, func, level, center, rho_max, nscan=400, tol=1e-14):
        super().__init__(func, level, center, rho_max, nscan=nscan, tol=tol)

    def _bracket(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c = np.cos(t)
        # stop each ray before it reaches the axis
        lim = np.where(c < 0.0, np.minimum(self.rho_max, 0.999 * self.center[0] / np.maximum(-c, 1e-300)),
                       self.rho_max)
        frac = np.linspace(0.0, 1.0, self.nscan + 1)[1:]
        rho = lim[:, None] * frac[None, :]
        vals = self._F(rho, t[:, None])
        v0 = self._F(np.zeros(1), t)
        crossed = np.sign(vals) != np.sign(v0)[:, None]
        if not np.all(crossed.any(axis=1)):
            raise GeometryError(f"level {self.level} not reached on every ray from {self.center}")
        idx = np.argmax(crossed, axis=1)
        lo = np.where(idx > 0, rho[np.arange(t.size), np.maximum(idx - 1, 0)], 0.0)
        hi = rho[np.arange(t.size), idx]
        return lo, hi

    def _check_topology(self):
        t = np.linspace(0.0, 2.0 * np.pi, 257)[:-1]
        rho = self.rho(t)
        # the traced radius must vary smoothly between neighbouring rays
        jump = np.abs(np.diff(np.append(rho, rho[0])))
        if np.max(jump) > 0.2 * np.max(rho):
            raise GeometryError("level set is not star-shaped about the magnetic axis")
