"""Evaluation of Beltrami fields B = i lam A - grad v + i curl A inside the domain.

For a target off the boundary the layer potentials are smooth periodic
integrals in arc length, so the trapezoid rule on a mildly oversampled copy of
each generating curve (densities carried over by trigonometric interpolation)
is spectrally accurate.  Targets closer than two spacings of that oversampled
quadrature (2 h / q) to a boundary are refused.  With a mode factor exp(i l phi) the cylindrical curl is

    (curl A)_r   = (i l / r) A_z - d_z A_phi
    (curl A)_phi = d_z A_r - d_r A_z
    (curl A)_z   = d_r A_phi + A_phi / r - (i l / r) A_r.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .beltrami_solver import _inside, _interp_matrix, flux_row_toroidal, solution_traces
from .errors import ConfigError, DomainError, ProximityError
from .geometry import signed_area
from .modal_kernels import ModalKernelTable, trig_from_modes
from .surface_calculus import harmonic_sign

__all__ = [
    "FieldSample",
    "eval_B",
    "eval_B_array",
    "boundary_distance",
    "check_targets",
    "admissible_mask",
    "verify_field",
    "recompute_fluxes",
    "fd_curl_div",
    "write_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("r", "phi", "z", "Br_re", "Br_im", "Bphi_re", "Bphi_im", "Bz_re", "Bz_im")
EXCLUSION = 2.0
DEFAULT_Q = 4


@dataclass(frozen=True)
class FieldSample:
    """Complex cylindrical components at (r, phi, z); the full field is B exp(i l phi)."""

    r: float
    phi: float
    z: float
    Br: complex
    Bphi: complex
    Bz: complex
    ell: int = 0

    @property
    def B(self):
        return np.array([self.Br, self.Bphi, self.Bz])


def _as_targets(targets):
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1:
        t = t[None, :]
    if t.ndim != 2 or t.shape[1] != 3:
        raise ConfigError("targets must be rows of (r, phi, z)")
    if not np.all(np.isfinite(t)):
        raise ConfigError("targets must be finite")
    return t


def boundary_distance(grid, r, z, oversample=8):
    """Distance from points to a generating curve (dense polyline plus local refinement)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    m = oversample * grid.n
    s = np.linspace(0.0, grid.L, m, endpoint=False)
    pts = grid.at(s)
    d2 = (r[:, None] - pts.r[None, :]) ** 2 + (z[:, None] - pts.z[None, :]) ** 2
    j = np.argmin(d2, axis=1)
    best = np.sqrt(d2[np.arange(r.size), j])
    # refine around the closest sample
    ds = grid.L / m
    fine = s[j][:, None] + np.linspace(-ds, ds, 41)[None, :]
    p = grid.at(fine.ravel() % grid.L)
    d = np.sqrt((r[:, None] - p.r.reshape(fine.shape)) ** 2 + (z[:, None] - p.z.reshape(fine.shape)) ** 2)
    return np.minimum(best, d.min(axis=1))


def check_targets(solution, targets, exclusion=EXCLUSION, q=DEFAULT_Q):
    """Raise unless every target is inside the domain and at least exclusion * h / q from its boundary."""
    t = _as_targets(targets)
    r, z = t[:, 0], t[:, 2]
    if np.any(r <= 0.0):
        raise DomainError("targets need r > 0")
    for k, g in enumerate(solution.grids):
        dense = g.at(np.linspace(0.0, g.L, 4 * g.n, endpoint=False))
        inside = _inside(dense.r, dense.z, r, z)
        want = solution.kinds[k] == "outer"
        bad = np.nonzero(inside != want)[0]
        if bad.size:
            i = bad[0]
            raise ProximityError(f"target ({r[i]}, {t[i, 1]}, {z[i]}) lies outside the domain")
        d = boundary_distance(g, r, z)
        lim = exclusion * g.h / q
        close = np.nonzero(d <= lim)[0]
        if close.size:
            i = close[0]
            raise ProximityError(f"target ({r[i]}, {t[i, 1]}, {z[i]}) is {d[i]:.3e} from the boundary, "
                                 f"inside the exclusion zone {exclusion} h/{q} = {lim:.3e}")
    return t


def admissible_mask(solution, targets, exclusion=EXCLUSION, q=DEFAULT_Q):
    """Boolean mask of targets that lie in the domain outside the exclusion zone."""
    t = _as_targets(targets)
    r, z = t[:, 0], t[:, 2]
    ok = r > 0.0
    for k, g in enumerate(solution.grids):
        dense = g.at(np.linspace(0.0, g.L, 4 * g.n, endpoint=False))
        ok &= _inside(dense.r, dense.z, r, z) == (solution.kinds[k] == "outer")
        ok &= boundary_distance(g, r, z) > exclusion * g.h / q
    return ok


def _potentials(solution, r, z, q):
    """A, v and their r, z derivatives at points (r, z); each a length-m complex array."""
    ell = abs(solution.ell)
    names = ("Ar", "Ap", "Az", "v")
    out = {k + d: 0.0 for k in names for d in ("", "_r", "_z")}
    for g, kind, sig, mt in zip(solution.grids, solution.kinds, solution.sigma, solution.mtau):
        qq = int(q)
        fine = g.refine(qq) if qq > 1 else g
        P = _interp_matrix(g.n, qq)
        sf = P @ sig
        mtf = P @ mt
        mpf = harmonic_sign(kind) * 1j * mtf
        m = r.size
        nf = fine.n
        tab = ModalKernelTable(np.repeat(r, nf), np.repeat(z, nf), np.tile(fine.r, m), np.tile(fine.z, m),
                               ell + 1, solution.lam, grad=True)
        gg, gr, gz = tab.evaluate(solution.lam)
        w = 2.0 * np.pi * fine.h * fine.r
        for tag, arr in (("", gg), ("_r", gr), ("_z", gz)):
            arr = arr.reshape(arr.shape[0], m, nf)
            g0 = arr[ell]
            gc, gs = trig_from_modes(arr[abs(ell - 1)], g0, arr[ell + 1])
            if ell == 0:
                gs = np.zeros_like(gs)
            out["Ar" + tag] = out["Ar" + tag] + (gc * w) @ (fine.rs * mtf) + (gs * w) @ mpf
            out["Ap" + tag] = out["Ap" + tag] - (gs * w) @ (fine.rs * mtf) + (gc * w) @ mpf
            out["Az" + tag] = out["Az" + tag] + (g0 * w) @ (fine.zs * mtf)
            out["v" + tag] = out["v" + tag] + (g0 * w) @ sf
    return out


def _field_from_potentials(p, lam, ell, r):
    il = 1j * ell / r
    curl_r = il * p["Az"] - p["Ap_z"]
    curl_p = p["Ar_z"] - p["Az_r"]
    curl_z = p["Ap_r"] + p["Ap"] / r - il * p["Ar"]
    Br = 1j * lam * p["Ar"] - p["v_r"] + 1j * curl_r
    Bp = 1j * lam * p["Ap"] - il * p["v"] + 1j * curl_p
    Bz = 1j * lam * p["Az"] - p["v_z"] + 1j * curl_z
    return np.stack([Br, Bp, Bz], axis=1)


def eval_B_array(solution, targets, q=None, check=True, batch=64):
    """Complex (m, 3) array of (B_r, B_phi, B_z) at targets (rows r, phi, z)."""
    q = DEFAULT_Q if q is None else int(q)
    if q < 1:
        raise ConfigError("oversampling factor must be >= 1")
    t = check_targets(solution, targets, q=q) if check else _as_targets(targets)
    r, z = t[:, 0], t[:, 2]
    out = np.empty((r.size, 3), dtype=complex)
    for start in range(0, r.size, batch):
        sl = slice(start, start + batch)
        p = _potentials(solution, r[sl], z[sl], q)
        out[sl] = _field_from_potentials(p, solution.lam, solution.ell, r[sl])
    return out


def eval_B(solution, targets, q=None, check=True):
    """List of FieldSample at targets given as rows (r, phi, z)."""
    t = _as_targets(targets)
    B = eval_B_array(solution, t, q=q, check=check)
    return [FieldSample(float(a[0]), float(a[1]), float(a[2]), complex(b[0]), complex(b[1]), complex(b[2]),
                        solution.ell) for a, b in zip(t, B)]


_FD = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_FD_OFF = np.array([-2.0, -1.0, 1.0, 2.0])


def fd_curl_div(field, lam, ell, points, h=1e-3):
    """Relative curl and divergence residuals of ``field`` by 4th-order differences.

    ``field(pts)`` returns an (m, 3) complex array at rows (r, phi, z).  Returns
    arrays |curl B - lam B| / |lam B| and |div B| / |lam B| per point.
    """
    pts = _as_targets(points)
    m = pts.shape[0]
    stencil = [pts]
    for axis in (0, 2):
        for o in _FD_OFF:
            q = pts.copy()
            q[:, axis] += o * h
            stencil.append(q)
    F = field(np.concatenate(stencil, axis=0)).reshape(len(stencil), m, 3)
    B = F[0]
    dr = np.tensordot(_FD, F[1:5], axes=(0, 0)) / h
    dz = np.tensordot(_FD, F[5:9], axes=(0, 0)) / h
    r = pts[:, 0]
    il = 1j * ell / r
    curl = np.stack([il * B[:, 2] - dz[:, 1],
                     dz[:, 0] - dr[:, 2],
                     dr[:, 1] + B[:, 1] / r - il * B[:, 0]], axis=1)
    div = dr[:, 0] + B[:, 0] / r + il * B[:, 1] + dz[:, 2]
    scale = np.linalg.norm(lam * B, axis=1)
    return np.linalg.norm(curl - lam * B, axis=1) / scale, np.abs(div) / scale


def recompute_fluxes(solution, q=2, nphi=16):
    """Fluxes recomputed from boundary traces of the solved field on refined grids.

    The toroidal flux is the clockwise circulation of B around the cross-section
    over lam (including the gradient term); the poloidal flux is the
    circulation of B_phi exp(i l phi) around the outboard midplane circles of
    the boundary curves (outer minus inner, only the outer for a torus) over lam.
    Returns (flux_tor, flux_pol, field_scale, traces).
    """
    ops, tr = solution_traces(solution, q=q)
    tor = complex((flux_row_toroidal(ops, tr, include_gradient=True) @ np.ones(1)))
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    ring = np.mean(np.exp(1j * solution.ell * phi))
    pol = 0.0
    for k, g in enumerate(ops.grids):
        c = 2.0 * np.pi * g.r[0] * tr.Bphi[k][0, 0] * ring / solution.lam
        pol = pol + (c if k == 0 else -c)
    bmax = max(float(np.max(np.abs(np.concatenate([tr.Bn[k][:, 0], tr.Btau[k][:, 0], tr.Bphi[k][:, 0]]))))
               for k in range(len(ops.grids)))
    area = abs(signed_area(solution.grids[0].r, solution.grids[0].z))
    return tor, complex(pol), bmax * area, (ops, tr)


def verify_field(solution, points, h=1e-3, q=2):
    """Curl, divergence, boundary-normal and flux residuals of a solved field.

    ``points`` are interior sample locations (rows r, phi, z); the stencils
    around them must respect the exclusion zone.  Boundary-normal residuals are
    taken at the midpoints between collocation nodes.
    """
    pts = _as_targets(points)
    offs = [pts]
    for axis in (0, 2):
        for o in (-2.0, 2.0):
            p = pts.copy()
            p[:, axis] += o * h
            offs.append(p)
    check_targets(solution, np.concatenate(offs))
    curl, div = fd_curl_div(lambda x: eval_B_array(solution, x, check=False), solution.lam,
                            solution.ell, pts, h=h)
    tor, pol, scale, (ops, tr) = recompute_fluxes(solution, q=q)
    bn = 0.0
    for k in range(len(ops.grids)):
        bt = np.abs(np.concatenate([tr.Btau[k][:, 0], tr.Bphi[k][:, 0]]))
        bn = max(bn, float(np.max(np.abs(tr.Bn[k][1::q, 0])) / np.max(bt)))
    rep = {
        "curl_residual": float(np.max(curl)),
        "div_residual": float(np.max(div)),
        "normal_residual": bn,
        "flux_tor_recomputed": tor,
        "flux_pol_recomputed": pol,
        "field_flux_scale": scale,
    }
    if solution.ell == 0:
        rep["flux_tor_error"] = abs(tor - solution.flux_tor) / max(abs(solution.flux_tor), 1e-300)
        if solution.flux_pol is not None:
            rep["flux_pol_error"] = abs(pol - solution.flux_pol) / max(abs(solution.flux_pol), 1e-300)
    return rep


def _fmt(x):
    return format(float(x), ".17g")


def write_csv(samples, path=None):
    """Write samples with the fixed header at 17 significant digits; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in samples:
        w.writerow([_fmt(s.r), _fmt(s.phi), _fmt(s.z), _fmt(s.Br.real), _fmt(s.Br.imag),
                    _fmt(s.Bphi.real), _fmt(s.Bphi.imag), _fmt(s.Bz.real), _fmt(s.Bz.imag)])
    text = buf.getvalue()
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return text
