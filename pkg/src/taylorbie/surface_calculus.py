"""Spectral surface calculus on a surface of revolution, one azimuthal mode at a time.

A scalar on the surface is f(s) exp(i l phi); a tangential field is
u = u^tau tau + u^phi phi_hat with both components carrying the same factor.
With D the Fourier differentiation matrix in arc length,

    grad_G f   = (D f) tau + (i l / r) f phi_hat
    div_G u    = (1/r) D(r u^tau) + (i l / r) u^phi
    Lap_G f    = (1/r) (r f_s)_s - (l^2 / r^2) f = f_ss + (r_s / r) f_s - (l^2 / r^2) f

The Laplacian is assembled as the discrete divergence of the discrete
gradient, (1/r) D (r D), so that div_G grad_G = Lap holds exactly at the
matrix level.  For even n, D annihilates the Nyquist mode and (1/r) D r D is
singular on it; the term D2 - D D (nonzero only on that mode, D2 the spectral
second derivative) restores it.  For l = 0 the mean-zero inverse comes from
the rank-one corrected matrix Lap + 1 w^T with w = 2 pi r h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import AccuracyError, ConfigError, GeometryError

__all__ = [
    "SpectralOperators",
    "TangentialField",
    "fourier_diff_matrix",
    "build_spectral_ops",
    "invert_laplace_beltrami",
    "surface_gradient",
    "surface_divergence",
    "n_cross",
    "harmonic_field",
    "harmonic_sign",
    "build_m_density",
    "m_density_matrices",
]


def fourier_diff_matrix(n, L, order=1):
    """Derivative matrix for n equispaced samples of an L-periodic function.

    For even n the Nyquist mode is dropped from odd-order derivatives and kept
    in even-order ones.
    """
    k = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0 and order % 2:
        k[n // 2] = 0.0
    col = np.fft.ifft((1j * k[:, None]) ** order * np.fft.fft(np.eye(n), axis=0), axis=0).real
    return (2.0 * np.pi / L) ** order * col


@dataclass(frozen=True)
class TangentialField:
    """Nodal (tau, phi) components of a tangential field of azimuthal mode ``ell``."""

    tau: np.ndarray
    phi: np.ndarray
    ell: int = 0

    def __add__(self, other):
        return TangentialField(self.tau + other.tau, self.phi + other.phi, self.ell)

    def scale(self, c):
        return TangentialField(c * self.tau, c * self.phi, self.ell)


@dataclass(frozen=True)
class SpectralOperators:
    D: np.ndarray
    Lap: np.ndarray
    Lap0: np.ndarray
    w: np.ndarray
    lu: tuple
    r: np.ndarray
    ell: int


def build_spectral_ops(grid, ell=0):
    n = grid.n
    D = fourier_diff_matrix(n, grid.L)
    r = np.asarray(grid.r)
    Lap = (D @ (r[:, None] * D)) / r[:, None] + (fourier_diff_matrix(n, grid.L, 2) - D @ D)
    if ell:
        Lap = Lap - np.diag((ell / r) ** 2)
    w = grid.h * 2.0 * np.pi * r
    Lap0 = Lap + np.outer(np.ones(n), w) if ell == 0 else Lap.copy()
    try:
        lu = linalg.lu_factor(Lap0, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise GeometryError(f"surface Laplacian factorization failed: {exc}") from exc
    if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0.0:
        raise GeometryError("surface Laplacian factorization is singular")
    for a in (D, Lap, Lap0, w):
        a.setflags(write=False)
    return SpectralOperators(D, Lap, Lap0, w, lu, r, int(ell))


def _mean_check(ops, f, tol):
    if ops.ell != 0:
        return f
    wf = ops.w @ f
    scale = ops.w.sum() * max(np.max(np.abs(f), initial=0.0), 1e-300)
    if abs(wf) > tol * scale:
        raise AccuracyError(f"input is not mean-zero over the surface (relative mean {abs(wf) / scale:.2e})")
    return f - wf / ops.w.sum()


def invert_laplace_beltrami(ops, f, tol=1e-8):
    """Mean-zero solution of Lap rho = f for mean-zero f (mode 0) or any f (mode != 0)."""
    f = np.asarray(f)
    f = _mean_check(ops, f, tol)
    return linalg.lu_solve(ops.lu, f)


def surface_gradient(ops, f):
    f = np.asarray(f)
    return TangentialField(ops.D @ f, (1j * ops.ell / ops.r) * f, ops.ell)


def surface_divergence(ops, u):
    return (ops.D @ (ops.r * u.tau)) / ops.r + (1j * ops.ell / ops.r) * u.phi


def n_cross(u):
    """n x u using n x tau = -phi_hat and n x phi_hat = tau."""
    return TangentialField(u.phi, -u.tau, u.ell)


def harmonic_sign(which):
    if which == "outer":
        return 1
    if which == "inner":
        return -1
    raise ConfigError(f"surface type must be 'outer' or 'inner', got {which!r}")


def harmonic_field(grid, which="outer"):
    """m_H = tau/r + (+-i) phi_hat/r, satisfying n x m_H = (+-i) m_H."""
    sgn = harmonic_sign(which)
    r = np.asarray(grid.r)
    return TangentialField((1.0 / r).astype(complex), sgn * 1j / r, 0)


def m_density_matrices(ops, lam, which="outer"):
    """Matrices mapping (sigma, coeff) to the tau component of m.

    Returns ``(Mtau, htau, psign)`` with m^tau = Mtau @ sigma + coeff * htau and
    m^phi = psign * 1j * m^tau.  ``htau`` is None for modes l != 0.
    """
    sgn = harmonic_sign(which)
    Linv = linalg.lu_solve(ops.lu, np.eye(ops.D.shape[0]))
    G = ops.D + np.diag(sgn * ops.ell / ops.r)
    Mtau = 1j * lam * (G @ Linv)
    htau = (1.0 / ops.r).astype(complex) if ops.ell == 0 else None
    return Mtau, htau, sgn


def build_m_density(ops, grid, sigma, lam, coeff=0.0, which="outer", tol=1e-8):
    """m = i lam (grad b -+ i n x grad b) + coeff m_H with b = Lap^{-1} sigma.

    The minus sign holds on outer surfaces and the plus sign on inner ones.
    """
    sgn = harmonic_sign(which)
    b = invert_laplace_beltrami(ops, np.asarray(sigma, dtype=complex), tol=tol)
    tau = 1j * lam * (ops.D @ b + (sgn * ops.ell / ops.r) * b)
    if ops.ell == 0:
        tau = tau + coeff / ops.r
    elif coeff:
        raise ConfigError("harmonic coefficient only applies to the axisymmetric mode")
    return TangentialField(tau, sgn * 1j * tau, ops.ell)
