"""Generating curves in the (r, z) half-plane and their arc-length grids.

A generating curve is a closed 2*pi-periodic map t -> (r(t), z(t)).  The
Nystrom discretization needs nodes equispaced in arc length, so every curve
is paired with a spectral representation of s(t) that is inverted by Newton's
method.  Geometry at arbitrary arc length (needed by the singular quadrature
corrections) is always evaluated from the analytic curve, never interpolated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError

__all__ = [
    "GeneratingCurve",
    "MillerCurve",
    "FourierCurve",
    "LevelSetCurve",
    "ArcLengthMap",
    "CurveGrid",
    "CurvePoints",
    "Frame",
    "make_miller_curve",
    "curve_from_points",
    "load_points_file",
    "discretize_arclength",
    "frame_at",
    "signed_area",
]

TWO_PI = 2.0 * np.pi


class GeneratingCurve:
    """Base class.  Subclasses implement :meth:`eval`."""

    def eval(self, t):
        """Return ``(r, z, r', z', r'', z'')`` at parameter values ``t``."""
        raise NotImplementedError

    def point(self, t):
        r, z = self.eval(t)[:2]
        return r, z

    def speed(self, t):
        _, _, rt, zt = self.eval(t)[:4]
        return np.hypot(rt, zt)


class MillerCurve(GeneratingCurve):
    """r = R0 + eps cos(t + a sin t), z = eps kappa sin t with a = arcsin(delta)."""

    def __init__(self, R0, eps, kappa, delta):
        self.R0 = float(R0)
        self.eps = float(eps)
        self.kappa = float(kappa)
        self.delta = float(delta)
        self.alpha = float(np.arcsin(self.delta))

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        a, e, k = self.alpha, self.eps, self.kappa
        u = t + a * np.sin(t)
        ut = 1.0 + a * np.cos(t)
        utt = -a * np.sin(t)
        cu, su = np.cos(u), np.sin(u)
        r = self.R0 + e * cu
        rt = -e * su * ut
        rtt = -e * (cu * ut * ut + su * utt)
        st, ct = np.sin(t), np.cos(t)
        return r, e * k * st, rt, e * k * ct, rtt, -e * k * st

    def __repr__(self):
        return (f"MillerCurve(R0={self.R0!r}, eps={self.eps!r}, "
                f"kappa={self.kappa!r}, delta={self.delta!r})")


def make_miller_curve(R0=1.0, eps=0.95, kappa=2.0, delta=0.3):
    """Validated constructor for a Miller-type boundary."""
    R0, eps, kappa, delta = (float(x) for x in (R0, eps, kappa, delta))
    if not all(np.isfinite([R0, eps, kappa, delta])):
        raise ConfigError("shape parameters must be finite")
    if eps <= 0.0:
        raise ConfigError("eps must be positive")
    if kappa <= 0.0:
        raise ConfigError("kappa must be positive")
    if abs(delta) >= 1.0:
        raise ConfigError("|delta| must be < 1")
    if R0 <= eps:
        raise GeometryError(f"R0={R0} <= eps={eps}: the curve reaches the axis r=0")
    return MillerCurve(R0, eps, kappa, delta)


class FourierCurve(GeneratingCurve):
    """Trigonometric interpolant through points sampled at equispaced t."""

    def __init__(self, r_pts, z_pts):
        r_pts = np.asarray(r_pts, dtype=float)
        z_pts = np.asarray(z_pts, dtype=float)
        if r_pts.ndim != 1 or r_pts.shape != z_pts.shape or r_pts.size < 8:
            raise ConfigError("need at least 8 points (r, z) describing one closed curve")
        if signed_area(r_pts, z_pts) < 0.0:
            r_pts, z_pts = r_pts[::-1].copy(), z_pts[::-1].copy()
        self.npts = r_pts.size
        self._cr = np.fft.fft(r_pts) / self.npts
        self._cz = np.fft.fft(z_pts) / self.npts
        k = np.fft.fftfreq(self.npts, 1.0 / self.npts)
        if self.npts % 2 == 0:
            # split the Nyquist mode symmetrically so the interpolant is real
            nyq = self.npts // 2
            k = np.append(k, nyq).astype(float)
            k[nyq] = -nyq
            self._cr = np.append(self._cr, 0.5 * self._cr[nyq])
            self._cr[nyq] *= 0.5
            self._cz = np.append(self._cz, 0.5 * self._cz[nyq])
            self._cz[nyq] *= 0.5
        self._k = k

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        ph = np.exp(1j * np.multiply.outer(t, self._k))
        k = self._k
        out = []
        for c in (self._cr, self._cz):
            out.append((ph @ c).real)
        for c in (self._cr, self._cz):
            out.append((ph @ (1j * k * c)).real)
        for c in (self._cr, self._cz):
            out.append((ph @ (-k * k * c)).real)
        r, z, rt, zt, rtt, ztt = out
        return r, z, rt, zt, rtt, ztt


def curve_from_points(r_pts, z_pts):
    return FourierCurve(r_pts, z_pts)


def load_points_file(path):
    """Read a two-column (r z) text file describing one closed curve."""
    try:
        data = np.loadtxt(path, dtype=float, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"points_file: cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"points_file: malformed numeric data in {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise ConfigError(f"points_file: expected two columns (r z), got {data.shape[1]}")
    if np.allclose(data[0], data[-1]):
        data = data[:-1]
    return FourierCurve(data[:, 0], data[:, 1])


class LevelSetCurve(GeneratingCurve):
    """Closed level set ``f(r, z) = level`` traced along rays from a center.

    ``func`` must provide ``value(r, z)``, ``grad(r, z)`` -> (f_r, f_z) and
    ``hess(r, z)`` -> (f_rr, f_rz, f_zz).  The level set must be star-shaped
    with respect to ``center``; each ray t meets it exactly once, at radius
    rho(t).  Derivatives of rho follow from implicit differentiation.
    """

    def __init__(self, func, level, center, rho_max, nscan=64, tol=1e-14):
        self.func = func
        self.level = float(level)
        self.center = (float(center[0]), float(center[1]))
        self.rho_max = float(rho_max)
        self.nscan = int(nscan)
        self.tol = float(tol)
        self._check_topology()

    def _F(self, rho, t):
        c, s = np.cos(t), np.sin(t)
        return self.func.value(self.center[0] + rho * c, self.center[1] + rho * s) - self.level

    def _bracket(self, t):
        """Locate the single crossing on each ray; return (lo, hi) brackets."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rho = np.linspace(0.0, self.rho_max, self.nscan + 1)[1:]
        vals = self._F(rho[None, :], t[:, None])
        sgn = np.sign(vals)
        changes = sgn[:, 1:] * sgn[:, :-1] < 0
        ncross = changes.sum(axis=1)
        first_inside = self._F(np.zeros(1), t)  # value at the center
        inside_sign = np.sign(first_inside)
        if np.any(ncross != 1) or np.any(inside_sign * sgn[:, 0] <= 0):
            raise GeometryError(
                f"level set f={self.level} is not a single closed curve star-shaped "
                f"about center {self.center} within radius {self.rho_max}")
        idx = np.argmax(changes, axis=1)
        return rho[idx], rho[idx + 1]

    def _check_topology(self):
        self._bracket(np.linspace(0.0, TWO_PI, 257)[:-1])

    _GUESS_SAMPLES = 256

    def _guess(self, t):
        """Trigonometric interpolant of rho through a cached set of rays."""
        cache = getattr(self, "_rho_coef", None)
        if cache is None:
            ts = TWO_PI * np.arange(self._GUESS_SAMPLES) / self._GUESS_SAMPLES
            lo, hi = self._bracket(ts)
            cache = self._rho_coef = np.fft.rfft(self._newton(ts, lo, hi)) / self._GUESS_SAMPLES
        k = np.arange(cache.size)
        w = np.where((k == 0) | (2 * k == self._GUESS_SAMPLES), 1.0, 2.0)
        return (np.exp(1j * np.outer(t, k)) @ (w * cache)).real

    def _fast_bracket(self, t):
        x0 = self._guess(t)
        d = 1e-4 * self.rho_max
        lo, hi = np.maximum(x0 - d, 0.0), np.minimum(x0 + d, self.rho_max)
        ok = self._F(lo, t) * self._F(hi, t) < 0.0
        if not np.all(ok):
            blo, bhi = self._bracket(t[~ok])
            lo[~ok], hi[~ok] = blo, bhi
        return lo, hi

    def rho(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self._fast_bracket(t)
        return self._newton(t, lo, hi)

    def _newton(self, t, lo, hi):
        flo = self._F(lo, t)
        x = 0.5 * (lo + hi)
        c, s = np.cos(t), np.sin(t)
        for _ in range(100):
            r = self.center[0] + x * c
            z = self.center[1] + x * s
            f = self.func.value(r, z) - self.level
            fr, fz = self.func.grad(r, z)
            d = fr * c + fz * s
            same = np.sign(f) == np.sign(flo)
            lo = np.where(same, x, lo)
            hi = np.where(same, hi, x)
            xn = x - f / d
            bad = ~np.isfinite(xn) | (xn <= np.minimum(lo, hi)) | (xn >= np.maximum(lo, hi))
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            step = np.abs(xn - x)
            x = xn
            if np.all(step <= self.tol * np.maximum(1.0, np.abs(x))):
                break
        else:
            raise GeometryError("level-set Newton iteration did not converge")
        return x

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        shape = t.shape
        t = t.ravel()
        rho = self.rho(t)
        e = np.array([np.cos(t), np.sin(t)])
        f = np.array([-np.sin(t), np.cos(t)])
        r = self.center[0] + rho * e[0]
        z = self.center[1] + rho * e[1]
        gr, gz = self.func.grad(r, z)
        hrr, hrz, hzz = self.func.hess(r, z)
        g = np.array([gr, gz])
        He = np.array([hrr * e[0] + hrz * e[1], hrz * e[0] + hzz * e[1]])
        Hf = np.array([hrr * f[0] + hrz * f[1], hrz * f[0] + hzz * f[1]])
        Frho = (g * e).sum(0)
        Ft = rho * (g * f).sum(0)
        Frr = (e * He).sum(0)
        Ftr = (g * f).sum(0) + rho * (He * f).sum(0)
        Ftt = rho * rho * (f * Hf).sum(0) - rho * (g * e).sum(0)
        rho_t = -Ft / Frho
        rho_tt = -(Ftt + 2.0 * Ftr * rho_t + Frr * rho_t**2) / Frho
        p_t = rho_t * e + rho * f
        p_tt = rho_tt * e + 2.0 * rho_t * f - rho * e
        out = (r, z, p_t[0], p_t[1], p_tt[0], p_tt[1])
        return tuple(np.reshape(a, shape) for a in out)


class ArcLengthMap:
    """Spectral representation of s(t) and its Newton inverse."""

    def __init__(self, curve, tol=1e-15, max_samples=1 << 16):
        self.curve = curve
        m = 256
        while True:
            t = TWO_PI * np.arange(m) / m
            sp = curve.speed(t)
            if np.any(~np.isfinite(sp)) or np.any(sp <= 0.0):
                raise GeometryError("curve has a vanishing or undefined tangent")
            c = np.fft.rfft(sp) / m
            tail = np.abs(c[-max(4, m // 16):]).max()
            if tail <= tol * abs(c[0]) or m >= max_samples:
                break
            m *= 2
        if tail > 1e-13 * abs(c[0]):
            raise GeometryError(
                f"arc-length map unresolved with {m} samples (tail {tail / abs(c[0]):.1e})")
        keep = np.nonzero(np.abs(c) > 1e-18 * abs(c[0]))[0]
        kmax = int(keep.max()) if keep.size else 0
        self.nsamples = m
        self.c0 = float(c[0].real)
        self.L = TWO_PI * self.c0
        k = np.arange(1, kmax + 1)
        ck = c[1:kmax + 1]
        # speed(t) = c0 + 2 Re sum c_k e^{ikt}; integrate termwise from 0
        self._k = k.astype(float)
        self._ck = 2.0 * ck / (1j * k)

    def s_of_t(self, t):
        t = np.asarray(t, dtype=float)
        if self._k.size == 0:
            return self.c0 * t
        ph = np.exp(1j * np.multiply.outer(t, self._k))
        per = ((ph - 1.0) @ self._ck).real
        return self.c0 * t + per

    def t_of_s(self, s, tol=1e-14, maxiter=50):
        s = np.asarray(s, dtype=float)
        # reduce to one period, keep the winding offset
        wraps = np.floor(s / self.L)
        sr = s - wraps * self.L
        t = TWO_PI * sr / self.L
        for _ in range(maxiter):
            res = self.s_of_t(t) - sr
            dt = res / self.curve.speed(t)
            t = t - dt
            if np.all(np.abs(res) <= tol * self.L):
                break
        res = np.max(np.abs(self.s_of_t(t) - sr), initial=0.0)
        if res > 1e-12 * self.L:
            raise GeometryError(f"arc-length inversion did not converge (max residual {res:.2e})")
        return t + TWO_PI * wraps


@dataclass(frozen=True)
class CurvePoints:
    """Geometry at a set of arc-length positions (derivatives are d/ds)."""

    s: np.ndarray
    t: np.ndarray
    r: np.ndarray
    z: np.ndarray
    rs: np.ndarray
    zs: np.ndarray
    rss: np.ndarray
    zss: np.ndarray

    @property
    def normal(self):
        return self.zs, -self.rs

    @property
    def curvature(self):
        return self.rs * self.zss - self.zs * self.rss


def _points_at(curve, amap, s):
    s = np.asarray(s, dtype=float)
    t = amap.t_of_s(s)
    r, z, rt, zt, rtt, ztt = curve.eval(t)
    sp2 = rt * rt + zt * zt
    sp = np.sqrt(sp2)
    dot = rt * rtt + zt * ztt
    rs = rt / sp
    zs = zt / sp
    rss = (rtt * sp2 - rt * dot) / (sp2 * sp2)
    zss = (ztt * sp2 - zt * dot) / (sp2 * sp2)
    return CurvePoints(s, t, r, z, rs, zs, rss, zss)


@dataclass(frozen=True)
class Frame:
    tau: tuple
    normal: tuple


class CurveGrid:
    """Nodes equispaced in arc length, with the trapezoidal weight h = L/n."""

    def __init__(self, curve, n, amap=None):
        self.curve = curve
        self.amap = amap if amap is not None else ArcLengthMap(curve)
        self.n = int(n)
        self.L = self.amap.L
        self.h = self.L / self.n
        self.s = self.h * np.arange(self.n)
        p = _points_at(curve, self.amap, self.s)
        self.t = p.t
        self.r, self.z = p.r, p.z
        self.rs, self.zs = p.rs, p.zs
        self.rss, self.zss = p.rss, p.zss
        self.weights = np.full(self.n, self.h)
        for a in (self.s, self.t, self.r, self.z, self.rs, self.zs, self.rss, self.zss,
                  self.weights):
            a.setflags(write=False)

    @property
    def nr(self):
        return self.zs

    @property
    def nz(self):
        return -self.rs

    def at(self, s):
        """Exact geometry at arbitrary arc-length positions."""
        return _points_at(self.curve, self.amap, s)

    def points(self):
        return CurvePoints(self.s, self.t, self.r, self.z, self.rs, self.zs, self.rss, self.zss)

    def refine(self, factor):
        """Grid with ``factor`` times as many nodes on the same curve."""
        return CurveGrid(self.curve, self.n * int(factor), amap=self.amap)

    def __repr__(self):
        return f"CurveGrid(n={self.n}, L={self.L:.15g}, curve={self.curve!r})"


def signed_area(r, z):
    """Shoelace area of a closed polygon; positive for counter-clockwise."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    return 0.5 * float(np.sum(r * np.roll(z, -1) - np.roll(r, -1) * z))


def _self_intersects(r, z):
    n = r.size
    p = np.stack([r, z], axis=1)
    q = np.roll(p, -1, axis=0)
    d = q - p

    def cross(a, b):
        return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]

    rel = p[None, :, :] - p[:, None, :]
    den = cross(d[:, None, :], d[None, :, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = cross(rel, d[None, :, :]) / den
        tb = cross(rel, d[:, None, :]) / den
    hit = (ta > 0) & (ta < 1) & (tb > 0) & (tb < 1)
    i, j = np.nonzero(hit)
    near = (np.abs(i - j) <= 1) | (np.abs(i - j) == n - 1)
    return bool(np.any(~near))


def discretize_arclength(curve, n, amap=None):
    """Equispaced arc-length grid with ``n`` nodes on ``curve``."""
    if int(n) != n or n < 8:
        raise ConfigError(f"n={n}: need an integer node count >= 8")
    grid = CurveGrid(curve, int(n), amap=amap)
    if np.any(grid.r <= 0.0):
        raise GeometryError("curve touches or crosses the axis r=0")
    fine = grid.at(np.linspace(0.0, grid.L, max(4 * grid.n, 512), endpoint=False))
    if np.any(fine.r <= 0.0):
        raise GeometryError("curve touches or crosses the axis r=0")
    if signed_area(fine.r, fine.z) <= 0.0:
        raise GeometryError("curve must be counter-clockwise in the (r, z) plane")
    if _self_intersects(fine.r, fine.z):
        raise GeometryError("curve is self-intersecting")
    kmax = float(np.max(np.abs(fine.curvature)))
    if grid.n < 8.0 * kmax * grid.L / TWO_PI:
        warnings.warn(
            f"n={grid.n} may under-resolve the curve (max curvature {kmax:.3g}, "
            f"length {grid.L:.3g})", RuntimeWarning, stacklevel=2)
    return grid


def frame_at(grid, j):
    """Unit tangent and outward normal at node ``j`` in (r, z) components."""
    rs, zs = float(grid.rs[j]), float(grid.zs[j])
    return Frame(tau=(rs, zs), normal=(zs, -rs))
