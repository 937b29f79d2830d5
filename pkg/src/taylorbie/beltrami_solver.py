"""Nystrom discretization of the Debye-source Beltrami integral equations.

Fields are represented as

    B = i lam A - grad v + i curl A,    A = S[m],   v = S[sigma],

with S the Helmholtz single layer on the boundary and m a tangential surface
current built from sigma and the harmonic fields.  Every quantity carries one
azimuthal factor exp(i l phi), so all operators act on nodal values along the
generating curves.  Writing m = m^tau tau + m^phi phi_hat, the cylindrical
components of A follow from the modal kernels by

    A_r   = 2 pi int (m^tau r_s' g^cos + m^phi g^sin) r' ds'
    A_phi = 2 pi int (-m^tau r_s' g^sin + m^phi g^cos) r' ds'
    A_z   = 2 pi int  m^tau z_s' g_l r' ds'.

On each boundary the current obeys m^phi = p i m^tau (p = +1 outer, -1 inner),
so only m^tau is stored.  Self-interaction integrals have a logarithmic
singularity and use the hybrid Gauss-trapezoidal rules; interactions between
different curves use the periodic trapezoid rule on an oversampled grid.

The boundary rows of the system are -B.n taken from inside the domain.  The
normal derivative of a single layer jumps by +-f/2 across the surface, so these
rows carry +sigma/2 on the outer surface and -sigma/2 on an inner one.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import AccuracyError, ConfigError, GeometryError, ResonanceError
from .modal_kernels import ModalKernelTable, trig_from_modes
from .quadrature import alpert_correction, periodic_interp_weights, select_rule
from .surface_calculus import build_spectral_ops, fourier_diff_matrix, harmonic_sign, m_density_matrices

__all__ = [
    "NystromOperators",
    "DebyeSolution",
    "LinearSystem",
    "ResonanceWarning",
    "alpert_correction",
    "assemble_operators",
    "surface_traces",
    "traces_from_maps",
    "solution_traces",
    "flux_row_toroidal",
    "flux_row_poloidal",
    "build_system_genus1",
    "build_system_genus2",
    "build_eigen_operator",
    "solve_taylor_state",
    "solve_genus1",
    "solve_genus2",
    "eigen_scan",
    "null_vector",
    "eigenfield",
    "polish_resonance",
    "check_nested",
]

log = logging.getLogger(__name__)

COND_WARN = 1e8
DEFAULT_UPSAMPLE = 4
MIN_FLUX_LAM = 1e-3
# kernel names: (modal kernel, source factor); m^tau sources carry r' r_s' or r' z_s'
_KERNELS = ("g", "g_zs", "c", "c_rs", "s", "s_rs")


class ResonanceWarning(RuntimeWarning):
    """The system is close to singular (lam near an interior resonance)."""


def _oversample(tgt, src):
    """Oversampling factor making the trapezoid rule accurate for a cross block."""
    dr = tgt.r[:, None] - src.r[None, :]
    dz = tgt.z[:, None] - src.z[None, :]
    d = float(np.sqrt(np.min(dr * dr + dz * dz)))
    if d <= 0.0:
        raise GeometryError("boundary curves touch")
    # trapezoid error for a near-singular kernel decays like exp(-2 pi d q / h)
    return int(np.clip(np.ceil(6.0 * src.h / d), 1, 32))


def _interp_matrix(n, q):
    """Trigonometric interpolation from n nodes to n*q nodes on the same curve."""
    if q == 1:
        return np.eye(n)
    delta = np.arange(n * q) / q
    return periodic_interp_weights(n, delta)


class _BlockKernels:
    """Modal kernel samples for one (target curve, source curve) pair.

    The geometry is fixed at construction; :meth:`matrices` evaluates the
    kernels at a given lam and returns the quadrature matrices acting on nodal
    source values.
    """

    def __init__(self, tgt, src, same, ell, lam_max, rule=None, q=None):
        self.tgt, self.src, self.same, self.ell = tgt, src, bool(same), int(ell)
        nt, ns = tgt.n, src.n
        if self.same:
            a = rule.a
            self.rule = rule
            off = np.arange(a, ns - a + 1)
            I = np.repeat(np.arange(ns), off.size)
            J = (I + np.tile(off, ns)) % ns
            self._trap = (I, J)
            delta = np.concatenate([rule.nodes, -rule.nodes])
            self._alp_w = src.h * np.concatenate([rule.weights, rule.weights])
            P = periodic_interp_weights(ns, delta)
            cols = (np.arange(ns)[None, :] - np.arange(ns)[:, None]) % ns
            self._Pshift = P[:, cols].transpose(1, 0, 2)
            sp = src.at((src.s[:, None] + delta[None, :] * src.h).ravel() % src.L)
            rp = np.concatenate([src.r[J], sp.r])
            zp = np.concatenate([src.z[J], sp.z])
            rsp = np.concatenate([src.rs[J], sp.rs])
            zsp = np.concatenate([src.zs[J], sp.zs])
            ti = np.concatenate([I, np.repeat(np.arange(ns), delta.size)])
            self.q = 1
        else:
            self.q = _oversample(tgt, src) if q is None else int(q)
            fine = src.refine(self.q) if self.q > 1 else src
            self._P = _interp_matrix(ns, self.q)
            self._hf = fine.h
            nf = fine.n
            ti = np.repeat(np.arange(nt), nf)
            rp, zp = np.tile(fine.r, nt), np.tile(fine.z, nt)
            rsp, zsp = np.tile(fine.rs, nt), np.tile(fine.zs, nt)
        self._ti = ti
        self._fac = {"r": rp, "rs": rp * rsp, "zs": rp * zsp}
        self.table = ModalKernelTable(tgt.r[ti], tgt.z[ti], rp, zp, abs(self.ell) + 1, lam_max, grad=True)

    def _samples(self, lam):
        ell = abs(self.ell)
        g, gr, gz = self.table.evaluate(lam)
        nr = self.tgt.nr[self._ti]
        nz = self.tgt.nz[self._ti]
        dn = nr * gr + nz * gz

        def trio(arr):
            g0 = arr[ell]
            gc, gs = trig_from_modes(arr[abs(ell - 1)], g0, arr[ell + 1])
            if ell == 0:
                gs = np.zeros_like(gs)
            return g0, gc, gs

        out = {}
        for tag, arr in (("", g), ("n", dn)):
            g0, gc, gs = trio(arr)
            f = self._fac
            out["g" + tag] = g0 * f["r"]
            out["g_zs" + tag] = g0 * f["zs"]
            out["c" + tag] = gc * f["r"]
            out["c_rs" + tag] = gc * f["rs"]
            out["s" + tag] = gs * f["r"]
            out["s_rs" + tag] = gs * f["rs"]
        return out

    def matrices(self, lam):
        """Dict of (n_tgt, n_src) quadrature matrices including the 2 pi factor."""
        samples = self._samples(lam)
        nt, ns = self.tgt.n, self.src.n
        mats = {}
        for key, val in samples.items():
            val = 2.0 * np.pi * val
            if self.same:
                I, J = self._trap
                ntrap = I.size
                M = np.zeros((nt, ns), dtype=complex)
                M[I, J] = self.src.h * val[:ntrap]
                alp = val[ntrap:].reshape(ns, -1) * self._alp_w[None, :]
                M += np.einsum("im,imj->ij", alp, self._Pshift)
            else:
                M = (val.reshape(nt, -1) * self._hf) @ self._P
            mats[key] = M
        return mats


@dataclass
class NystromOperators:
    """Discretized layer potentials for fixed curves, lam and mode l.

    ``blocks[(t, s)]`` holds the matrices mapping nodal values on curve ``s`` to
    values on curve ``t``: ``g`` (scalar single layer, i.e. S), ``gn`` (its
    principal-value normal derivative, S'), and the pieces of the vector single
    layer and its normal derivative used to build S_vec and Curl_vec.
    """

    grids: tuple
    lam: float
    ell: int
    blocks: dict
    spectral: tuple
    kinds: tuple
    order: int
    quad_grids: tuple = ()
    interp: tuple = ()
    Dq: tuple = ()
    upsample: int = 1

    @property
    def S(self):
        return self.blocks[(0, 0)]["g"]

    @property
    def Sp(self):
        return self.blocks[(0, 0)]["gn"]

    def S_vec(self, t, s, mtau):
        """Cylindrical (A_r, A_phi, A_z) on curve t from m^tau on curve s."""
        b = self.blocks[(t, s)]
        p = harmonic_sign(self.kinds[s])
        Ar = (b["c_rs"] + p * 1j * b["s"]) @ mtau
        Ap = (-b["s_rs"] + p * 1j * b["c"]) @ mtau
        Az = b["g_zs"] @ mtau
        return Ar, Ap, Az


class _Geometry:
    """Kernel tables for all curve pairs, reusable across lam.

    With ``upsample`` = q > 1 the integrals are computed on grids q times finer
    than the collocation grids, densities being carried over by trigonometric
    interpolation; the unknowns and collocation points are unchanged.
    """

    def __init__(self, grids, ell, lam_max, order=None, kinds=None, upsample=1):
        self.grids = tuple(grids)
        self.ell = int(ell)
        self.kinds = tuple(kinds) if kinds is not None else ("outer", "inner")[:len(self.grids)]
        self.upsample = q = int(upsample)
        if q < 1:
            raise ConfigError("upsampling factor must be >= 1")
        self.quad_grids = tuple(g.refine(q) if q > 1 else g for g in self.grids)
        self.interp = tuple(_interp_matrix(g.n, q) for g in self.grids)
        self.Dq = tuple(fourier_diff_matrix(g.n, g.L) for g in self.quad_grids)
        rules = [select_rule(g.n, order) for g in self.quad_grids]
        self.order = min(r.order for r in rules)
        self.blocks = {}
        for t, gt in enumerate(self.quad_grids):
            for s, gs in enumerate(self.quad_grids):
                self.blocks[(t, s)] = _BlockKernels(gt, gs, t == s, self.ell, lam_max,
                                                    rule=rules[s] if t == s else None)
        self.spectral = tuple(build_spectral_ops(g, self.ell) for g in self.grids)
        self.lam_max = float(lam_max)

    def operators(self, lam):
        blocks = {k: b.matrices(lam) for k, b in self.blocks.items()}
        return NystromOperators(self.grids, float(lam), self.ell, blocks, self.spectral,
                                self.kinds, self.order, self.quad_grids, self.interp, self.Dq,
                                self.upsample)


def _validate_lam(lam):
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0.0:
        raise ConfigError(f"lam must be positive and finite, got {lam}")
    return lam


def assemble_operators(grids, lam, ell=0, order=None, upsample=DEFAULT_UPSAMPLE):
    """Nystrom operators on one curve (torus) or two nested curves (shell)."""
    lam = _validate_lam(lam)
    grids = _as_grid_tuple(grids)
    if len(grids) == 2:
        check_nested(grids[0], grids[1])
    return _Geometry(grids, ell, lam, order=order, upsample=upsample).operators(lam)


def _as_grid_tuple(grids):
    if hasattr(grids, "r") and hasattr(grids, "n"):
        return (grids,)
    grids = tuple(grids)
    if len(grids) not in (1, 2):
        raise ConfigError("expected one (torus) or two (shell) boundary curves")
    return grids


def _inside(r, z, pr, pz):
    """Winding-number containment of points (pr, pz) in the closed polygon (r, z)."""
    dr = r[None, :] - pr[:, None]
    dz = z[None, :] - pz[:, None]
    ang = np.arctan2(dz, dr)
    d = np.diff(np.concatenate([ang, ang[:, :1]], axis=1), axis=1)
    d = (d + np.pi) % (2.0 * np.pi) - np.pi
    return np.abs(d.sum(axis=1)) > np.pi


def check_nested(outer, inner):
    """Raise GeometryError unless ``inner`` lies strictly inside ``outer``."""
    ro = outer.at(np.linspace(0.0, outer.L, 4 * outer.n, endpoint=False))
    ri = inner.at(np.linspace(0.0, inner.L, 4 * inner.n, endpoint=False))
    if not np.all(_inside(ro.r, ro.z, ri.r, ri.z)):
        raise GeometryError("inner boundary is not contained in the outer boundary")
    if np.any(_inside(ri.r, ri.z, ro.r, ro.z)):
        raise GeometryError("boundary curves intersect")


@dataclass
class _Layout:
    sizes: tuple
    harmonic: bool

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def N(self):
        return int(sum(self.sizes)) + (len(self.sizes) if self.harmonic else 0)

    def select(self, k):
        off = self.offsets
        M = np.zeros((self.sizes[k], self.N))
        M[:, off[k]:off[k + 1]] = np.eye(self.sizes[k])
        return M

    def coeff_index(self, k):
        return int(sum(self.sizes)) + k


def _density_maps(ops, layout):
    """Matrices x -> sigma_k and x -> m^tau_k for every curve."""
    Sel, Tm = [], []
    for k, (g, sp) in enumerate(zip(ops.grids, ops.spectral)):
        Sk = layout.select(k)
        Mtau, htau, _ = m_density_matrices(sp, ops.lam, ops.kinds[k])
        T = Mtau @ Sk
        if layout.harmonic:
            if htau is None:
                raise ConfigError("harmonic coefficients only exist for the axisymmetric mode")
            T[:, layout.coeff_index(k)] += htau
        Sel.append(Sk)
        Tm.append(T)
    return Sel, Tm


@dataclass
class SurfaceTraces:
    """Matrices giving boundary traces (inside the domain) of B from the unknowns."""

    Bn: list
    Btau: list
    Bphi: list
    grad_tau: list


def surface_traces(ops, layout):
    """B.n, B.tau (without the -dv/ds term, kept separately) and B_phi on every curve."""
    Sel, Tm = _density_maps(ops, layout)
    return traces_from_maps(ops, Sel, Tm)


def traces_from_maps(ops, Sel, Tm):
    """Boundary traces given matrices (or column vectors) producing sigma and m^tau per curve."""
    lam, ell = ops.lam, ops.ell
    q = ops.upsample
    if q > 1:
        Sel = [P @ S for P, S in zip(ops.interp, Sel)]
        Tm = [P @ T for P, T in zip(ops.interp, Tm)]
    Bn, Btau, Bphi, gtau = [], [], [], []
    for t, gt in enumerate(ops.quad_grids):
        eps_t = harmonic_sign(ops.kinds[t])
        p_t = eps_t
        r, rs, zs = gt.r[:, None], gt.rs[:, None], gt.zs[:, None]
        D = ops.Dq[t]
        Ar = Ap = Az = v = vn = Arn = Apn = Azn = 0.0
        for s in range(len(ops.grids)):
            b = ops.blocks[(t, s)]
            p = harmonic_sign(ops.kinds[s])
            Ar = Ar + (b["c_rs"] + p * 1j * b["s"]) @ Tm[s]
            Ap = Ap + (-b["s_rs"] + p * 1j * b["c"]) @ Tm[s]
            Az = Az + b["g_zs"] @ Tm[s]
            Arn = Arn + (b["c_rsn"] + p * 1j * b["sn"]) @ Tm[s]
            Apn = Apn + (-b["s_rsn"] + p * 1j * b["cn"]) @ Tm[s]
            Azn = Azn + b["g_zsn"] @ Tm[s]
            v = v + b["g"] @ Sel[s]
            vn = vn + b["gn"] @ Sel[s]
        # one-sided limits from inside the domain
        vn = vn + 0.5 * eps_t * Sel[t]
        Arn = Arn + 0.5 * eps_t * rs * Tm[t]
        Apn = Apn + 0.5 * eps_t * p_t * 1j * Tm[t]
        Azn = Azn + 0.5 * eps_t * zs * Tm[t]
        nr, nz = zs, -rs
        A_tau = rs * Ar + zs * Az
        A_n = zs * Ar - rs * Az
        n_curl = (1j * ell / r) * A_tau - (D @ (r * Ap)) / r
        tau_curl = -(1j * ell / r) * A_n + Apn + (zs / r) * Ap
        phi_curl = zs * (D @ Ar) - rs * Arn - rs * (D @ Az) - zs * Azn
        Bn.append(1j * lam * (nr * Ar + nz * Az) - vn + 1j * n_curl)
        Btau.append(1j * lam * A_tau + 1j * tau_curl)
        gtau.append(-(D @ v))
        Bphi.append(1j * lam * Ap - (1j * ell / r) * v + 1j * phi_curl)
    if q > 1:
        Bn, Btau, Bphi, gtau = ([a[::q] for a in x] for x in (Bn, Btau, Bphi, gtau))
    return SurfaceTraces(Bn, Btau, Bphi, gtau)


def _check_flux_lam(lam):
    if abs(lam) < MIN_FLUX_LAM:
        raise AccuracyError(f"|lam| = {abs(lam):.2e} < {MIN_FLUX_LAM}: the circulation form of the "
                            "toroidal flux loses accuracy as lam -> 0")


def flux_row_toroidal(ops, traces, include_gradient=False):
    """Row vector giving the toroidal flux int_{S_t} B_phi dA.

    By Stokes' theorem lam * flux equals the circulation of B around the
    cross-section boundary, traversed clockwise in the (r, z) half-plane; the
    inner curve of a shell is traversed the other way.  The gradient term of B
    integrates to zero around closed curves and is dropped unless requested.
    """
    _check_flux_lam(ops.lam)
    row = 0.0
    for t, gt in enumerate(ops.grids):
        eps_t = harmonic_sign(ops.kinds[t])
        Bt = traces.Btau[t] + (traces.grad_tau[t] if include_gradient else 0.0)
        row = row + eps_t * gt.h * Bt.sum(axis=0)
    return -row / ops.lam


def flux_row_poloidal(ops, traces):
    """Row vector giving the poloidal flux through the z = 0 strip between the curves.

    Equals (2 pi / lam) (r B_phi at the outer curve's node 0 minus r B_phi at
    the inner curve's node 0); node 0 is the outboard midplane crossing.
    """
    if len(ops.grids) != 2:
        raise ConfigError("poloidal flux needs an inner and an outer boundary")
    _check_flux_lam(ops.lam)
    go, gi = ops.grids
    return (2.0 * np.pi / ops.lam) * (go.r[0] * traces.Bphi[0][0] - gi.r[0] * traces.Bphi[1][0])


@dataclass
class LinearSystem:
    A: np.ndarray
    b: np.ndarray
    ops: NystromOperators
    layout: _Layout
    traces: SurfaceTraces
    flux_tor: float = 0.0
    flux_pol: float | None = None


def build_system_genus1(ops, flux_tor):
    """(n+1) x (n+1) system for (sigma, alpha) on a torus."""
    if len(ops.grids) != 1:
        raise ConfigError("genus-1 system needs exactly one boundary curve")
    if ops.ell != 0:
        raise ConfigError("flux-driven systems use the axisymmetric mode l = 0")
    layout = _Layout((ops.grids[0].n,), True)
    tr = surface_traces(ops, layout)
    A = np.vstack([-tr.Bn[0], flux_row_toroidal(ops, tr)[None, :]])
    b = np.zeros(layout.N, dtype=complex)
    b[-1] = flux_tor
    return LinearSystem(A, b, ops, layout, tr, float(flux_tor))


def build_system_genus2(ops, flux_tor, flux_pol):
    """(n_out + n_in + 2) square system for (sigma_out, sigma_in, alpha, beta)."""
    if len(ops.grids) != 2:
        raise ConfigError("genus-2 system needs an outer and an inner boundary curve")
    if ops.ell != 0:
        raise ConfigError("flux-driven systems use the axisymmetric mode l = 0")
    layout = _Layout((ops.grids[0].n, ops.grids[1].n), True)
    tr = surface_traces(ops, layout)
    A = np.vstack([-tr.Bn[0], -tr.Bn[1], flux_row_toroidal(ops, tr)[None, :],
                   flux_row_poloidal(ops, tr)[None, :]])
    b = np.zeros(layout.N, dtype=complex)
    b[-2] = flux_tor
    b[-1] = flux_pol
    return LinearSystem(A, b, ops, layout, tr, float(flux_tor), float(flux_pol))


def build_eigen_operator(ops):
    """Square boundary operator on sigma alone (no harmonic part), any mode."""
    layout = _Layout(tuple(g.n for g in ops.grids), False)
    tr = surface_traces(ops, layout)
    return np.vstack([-B for B in tr.Bn]), layout, tr


@dataclass
class DebyeSolution:
    """Solved densities and everything needed to evaluate the field."""

    lam: float
    ell: int
    grids: tuple
    kinds: tuple
    sigma: tuple
    mtau: tuple
    coeffs: tuple
    flux_tor: float
    flux_pol: float | None
    cond: float = float("nan")
    residual: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def alpha(self):
        return self.coeffs[0] if self.coeffs else 0.0

    @property
    def beta(self):
        return self.coeffs[1] if len(self.coeffs) > 1 else None

    def scaled(self, c):
        """Solution for c times the prescribed fluxes (the system is linear)."""
        return DebyeSolution(self.lam, self.ell, self.grids, self.kinds,
                             tuple(c * s for s in self.sigma), tuple(c * m for m in self.mtau),
                             tuple(c * a for a in self.coeffs), c * self.flux_tor,
                             None if self.flux_pol is None else c * self.flux_pol,
                             self.cond, self.residual, dict(self.diagnostics))


def _unpack(system, x):
    ops, layout = system.ops, system.layout
    Sel, Tm = _density_maps(ops, layout)
    sig = tuple(S @ x for S in Sel)
    mt = tuple(T @ x for T in Tm)
    coeffs = tuple(x[layout.coeff_index(k)] for k in range(len(layout.sizes))) if layout.harmonic else ()
    return sig, mt, coeffs


def solve_taylor_state(system, mean_tol=1e-8):
    """Dense LU solve; returns a DebyeSolution with condition estimate and residual."""
    A, b = system.A, system.b
    if not np.all(np.isfinite(A)):
        raise AccuracyError("system matrix has non-finite entries")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            lu = linalg.lu_factor(A)
    except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError) as exc:
        raise ResonanceError(f"system is singular at lam = {system.ops.lam!r}: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) == 0.0:
        raise ResonanceError(f"system is singular at lam = {system.ops.lam!r}")
    x = linalg.lu_solve(lu, b)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if not np.isfinite(cond) or cond > 1e15:
        raise ResonanceError(f"system is numerically singular at lam = {system.ops.lam!r} (cond {cond:.2e})")
    if cond > COND_WARN:
        warnings.warn(f"condition number {cond:.2e} at lam = {system.ops.lam}: near an interior resonance",
                      ResonanceWarning, stacklevel=2)
    denom = sv[0] * np.linalg.norm(x) + np.linalg.norm(b)
    res = float(np.linalg.norm(A @ x - b) / denom) if denom > 0 else 0.0
    sig, mt, coeffs = _unpack(system, x)
    ops = system.ops
    diag = {"backward_error": res}
    bc = []
    for t, g in enumerate(ops.grids):
        bn = system.traces.Bn[t] @ x
        bc.append(float(np.max(np.abs(bn)) / max(np.max(np.abs(sig[t])), 1e-300)))
        w = 2.0 * np.pi * g.r * g.h
        mean = abs(w @ sig[t]) / (w.sum() * max(np.max(np.abs(sig[t])), 1e-300))
        diag[f"sigma_mean_{t}"] = float(mean)
        if mean > mean_tol:
            log.warning("density on curve %d has relative mean %.2e", t, mean)
    diag["bc_residual"] = max(bc)
    diag["flux_tor_achieved"] = complex(flux_row_toroidal(ops, system.traces) @ x)
    if len(ops.grids) == 2:
        diag["flux_pol_achieved"] = complex(flux_row_poloidal(ops, system.traces) @ x)
    return DebyeSolution(ops.lam, ops.ell, ops.grids, ops.kinds, sig, mt, coeffs,
                         system.flux_tor, system.flux_pol, cond, res, diag)


def solution_traces(solution, q=2, order=None, upsample=2):
    """Boundary traces of a solved field on grids refined ``q`` times.

    Densities are carried to the finer grids by trigonometric interpolation, so
    nodes with odd index (for q = 2) are not collocation points of the solve.
    Returns (fine grids, SurfaceTraces with one column each).
    """
    fine = tuple(g.refine(q) if q > 1 else g for g in solution.grids)
    geom = _Geometry(fine, solution.ell, solution.lam, order=order, kinds=solution.kinds,
                     upsample=upsample)
    ops = geom.operators(solution.lam)
    Sel, Tm = [], []
    for g, sig, mt in zip(solution.grids, solution.sigma, solution.mtau):
        P = _interp_matrix(g.n, q)
        Sel.append((P @ sig)[:, None])
        Tm.append((P @ mt)[:, None])
    return ops, traces_from_maps(ops, Sel, Tm)


def solve_genus1(grid, lam, flux_tor, order=None, upsample=DEFAULT_UPSAMPLE):
    ops = assemble_operators((grid,), lam, 0, order=order, upsample=upsample)
    return solve_taylor_state(build_system_genus1(ops, flux_tor))


def solve_genus2(outer, inner, lam, flux_tor, flux_pol, order=None, upsample=DEFAULT_UPSAMPLE):
    ops = assemble_operators((outer, inner), lam, 0, order=order, upsample=upsample)
    return solve_taylor_state(build_system_genus2(ops, flux_tor, flux_pol))


# ---------------------------------------------------------------------------
# resonance scan


class _EigenFamily:
    """Boundary operator of mode l on one curve as a function of lam."""

    def __init__(self, grid, ell, lam_max, order=None, upsample=DEFAULT_UPSAMPLE):
        self.geom = _Geometry((grid,), ell, lam_max, order=order, upsample=upsample)
        self.grid = grid

    def matrix(self, lam):
        A, _, _ = build_eigen_operator(self.geom.operators(lam))
        return A

    def smin(self, lam):
        return float(np.linalg.svd(self.matrix(lam), compute_uv=False)[-1])


def eigen_scan(grid, ell=1, lam_range=(1.0, 8.0), resolution=0.02, order=None, accept=1e-5,
               xtol=1e-10, return_profile=False, upsample=1):
    """Values of lam where the mode-l boundary operator becomes singular.

    The smallest singular value is sampled on a grid of spacing ``resolution``;
    each local minimum is refined by bounded Brent minimization of its square
    (smooth and locally quadratic near a simple root).  Minima whose singular
    value, relative to the largest one, stays above ``accept`` are rejected as
    spurious.  Returns a list of (lam, error estimate), the estimate being the
    residual singular value divided by its local slope in lam.
    """
    ell = int(ell)
    lo, hi = (float(x) for x in lam_range)
    if ell < 1:
        raise ConfigError("resonance scans are for modes l >= 1")
    if not (0.0 < lo < hi):
        raise ConfigError(f"lam range must satisfy 0 < lo < hi, got {lam_range}")
    if resolution <= 0:
        raise ConfigError("resolution must be positive")
    fam = _EigenFamily(grid, ell, hi + resolution, order=order, upsample=upsample)
    m = int(np.ceil((hi - lo) / resolution)) + 1
    lams = np.linspace(lo, hi, m)
    prof = np.empty(m)
    scale = 0.0
    for k, lam in enumerate(lams):
        sv = np.linalg.svd(fam.matrix(lam), compute_uv=False)
        prof[k] = sv[-1]
        scale = max(scale, sv[0])
    roots = []
    for k in range(m):
        left = prof[k - 1] if k > 0 else np.inf
        right = prof[k + 1] if k < m - 1 else np.inf
        if not (prof[k] < left and prof[k] <= right):
            continue
        a, b = lams[max(k - 1, 0)], lams[min(k + 1, m - 1)]
        res = optimize.minimize_scalar(lambda x: fam.smin(x) ** 2, bounds=(a, b), method="bounded",
                                       options={"xatol": xtol, "maxiter": 500})
        lam_star = float(res.x)
        smin = fam.smin(lam_star)
        if smin > accept * scale:
            continue
        if lam_star - a < 1e-9 or b - lam_star < 1e-9:
            # minimum sits on the bracket edge: only keep it at the ends of the range
            if not (lam_star - lo < 1e-9 or hi - lam_star < 1e-9):
                continue
        d = max(1e-4, 10.0 * abs(lam_star) * 1e-6)
        slope = 0.5 * (fam.smin(lam_star + d) + fam.smin(lam_star - d)) / d
        err = smin / slope if slope > 0 else np.inf
        if roots and abs(lam_star - roots[-1][0]) < 10 * max(err, xtol):
            warnings.warn(f"unresolved roots near lam = {lam_star:.6f}; bracket [{a}, {b}]",
                          ResonanceWarning, stacklevel=2)
            continue
        roots.append((lam_star, float(err)))
    if return_profile:
        return roots, (lams, prof, scale)
    return roots


def null_vector(A, grid=None, rng=None, tol=1e-6):
    """Null vector of a numerically rank-one deficient matrix.

    With random r, r1, r2, solve (A + r1 r2^T) x = A r and return z = x - r,
    normalized so that int |z|^2 ds = 1 over ``grid`` (or the plain 2-norm
    when no grid is given).
    """
    A = np.asarray(A)
    n = A.shape[0]
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] > tol * sv[0]:
        raise ResonanceError(f"matrix is not rank deficient (smallest singular value {sv[-1]:.2e})")
    if n > 1 and sv[-2] < tol * sv[0]:
        raise ResonanceError("null space has dimension greater than one")
    rng = np.random.default_rng(rng)
    r = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    r1 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    r2 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x = linalg.solve(A + np.outer(r1, r2), A @ r)
    z = x - r
    # one inverse-iteration step on A^H A pulls z onto the smallest right
    # singular vector; the bordered solve alone leaves a residual of a few smin
    lu = linalg.lu_factor(A, check_finite=False)
    z = linalg.lu_solve(lu, linalg.lu_solve(lu, z, trans=2), trans=0)
    h = grid.h if grid is not None else 1.0
    z = z / np.sqrt(h * np.sum(np.abs(z) ** 2))
    # fix the phase so the largest entry is real and positive
    j = int(np.argmax(np.abs(z)))
    z = z * (abs(z[j]) / z[j])
    nz = np.linalg.norm(A @ z) / np.linalg.norm(z)
    if nz > 10.0 * sv[-1] + 1e-14 * sv[0]:
        raise AccuracyError(f"null vector residual {nz:.2e} exceeds 10x the smallest singular value")
    return z


def polish_resonance(family, lam, delta=1e-5, steps=2):
    """Refine a resonance estimate on the discretization of ``family``.

    Near a simple root the squared smallest singular value is quadratic in
    lam, so each step fits a parabola through lam and lam +- delta and moves
    to its vertex; the next step uses a spacing comparable to the move.
    """
    lam = float(lam)
    for _ in range(steps):
        f0, fm, fp = (family.smin(x) ** 2 for x in (lam, lam - delta, lam + delta))
        curv = fp - 2.0 * f0 + fm
        if curv <= 0.0:
            break
        step = -0.5 * delta * (fp - fm) / curv
        if abs(step) > 1e-3:
            raise ResonanceError(f"no resonance within 1e-3 of lam = {lam!r}")
        lam += step
        delta = max(abs(step), 1e-8)
    return lam


def eigenfield(grid, lam, ell=1, order=None, upsample=2, rng=None, tol=1e-6, polish=True):
    """Null-mode solution of mode ``ell`` at a resonance ``lam``.

    With ``polish`` the resonance is first refined on the extraction
    discretization (which may be finer than the one used for scanning).  The
    density is the null vector of the boundary operator, normalized to unit
    L2 norm along the generating curve; the fluxes are zero by construction.
    """
    fam = _EigenFamily(grid, ell, float(lam) + 0.01, order=order, upsample=upsample)
    if polish:
        lam = polish_resonance(fam, lam)
    ops = fam.geom.operators(lam)
    A, layout, _ = build_eigen_operator(ops)
    z = null_vector(A, grid=grid, rng=rng, tol=tol)
    Sel, Tm = _density_maps(ops, layout)
    sv = np.linalg.svd(A, compute_uv=False)
    diag = {"smin": float(sv[-1]), "smin2": float(sv[-2]),
            "null_residual": float(np.linalg.norm(A @ z) / np.linalg.norm(z))}
    return DebyeSolution(ops.lam, ops.ell, ops.grids, ops.kinds, (Sel[0] @ z,), (Tm[0] @ z,), (),
                         0.0, None, float(sv[0] / sv[-1]), diag["null_residual"], diag)
