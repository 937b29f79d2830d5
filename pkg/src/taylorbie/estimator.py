"""Estimator-style wrappers around the Taylor-state solver.

``fit`` receives the geometry (a generating curve, a discretized grid, or an
(outer, inner) pair of either) instead of a data matrix; ``predict`` maps an
(m, 3) array of (r, phi, z) targets to the complex field components.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import beltrami_solver as bs
from . import field_eval as fe
from .errors import ConfigError
from .geometry import CurveGrid, GeneratingCurve, discretize_arclength

__all__ = ["TaylorStateSolver", "ResonanceScanner"]


def _to_grid(obj, n):
    if isinstance(obj, CurveGrid):
        return obj
    if isinstance(obj, GeneratingCurve):
        return discretize_arclength(obj, n)
    raise ConfigError(f"expected a GeneratingCurve or CurveGrid, got {type(obj).__name__}")


def _to_grids(X, n):
    if isinstance(X, (tuple, list)):
        if not 1 <= len(X) <= 2:
            raise ConfigError("geometry must be one curve or an (outer, inner) pair")
        return tuple(_to_grid(x, n) for x in X)
    return (_to_grid(X, n),)


class TaylorStateSolver(BaseEstimator):
    """Flux-driven axisymmetric Taylor state in a torus or toroidal shell.

    Parameters
    ----------
    lam : float
        Beltrami parameter (curl B = lam B).
    flux_tor : float
        Prescribed toroidal flux.
    flux_pol : float or None
        Prescribed poloidal flux; required for a shell, ignored for a torus.
    n : int
        Nodes per curve when ``fit`` receives curves rather than grids.
    order, upsample : passed to the Nystrom assembly.
    """

    def __init__(self, lam=1.0, flux_tor=1.0, flux_pol=None, n=100, order=None,
                 upsample=bs.DEFAULT_UPSAMPLE):
        self.lam = lam
        self.flux_tor = flux_tor
        self.flux_pol = flux_pol
        self.n = n
        self.order = order
        self.upsample = upsample

    def fit(self, X, y=None):
        grids = _to_grids(X, int(self.n))
        if len(grids) == 1:
            sol = bs.solve_genus1(grids[0], self.lam, self.flux_tor, order=self.order,
                                  upsample=self.upsample)
        else:
            if self.flux_pol is None:
                raise ConfigError("flux_pol is required for a toroidal shell")
            sol = bs.solve_genus2(grids[0], grids[1], self.lam, self.flux_tor, self.flux_pol,
                                  order=self.order, upsample=self.upsample)
        self.solution_ = sol
        self.grids_ = grids
        self.cond_ = sol.cond
        return self

    def predict(self, X):
        """Complex (B_r, B_phi, B_z) at rows (r, phi, z) of X, shape (m, 3)."""
        check_is_fitted(self, "solution_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 3:
            raise ConfigError(f"targets must have 3 columns (r, phi, z), got {X.shape[1]}")
        return fe.eval_B_array(self.solution_, X)

    def verify(self, X, h=1e-3):
        check_is_fitted(self, "solution_")
        return fe.verify_field(self.solution_, check_array(X, dtype=float), h=h)


class ResonanceScanner(BaseEstimator):
    """Interior Beltrami resonances of azimuthal mode ``ell`` for one torus."""

    def __init__(self, ell=1, lam_min=1.0, lam_max=8.0, resolution=0.02, n=100, order=None,
                 upsample=1, field_upsample=2):
        self.ell = ell
        self.lam_min = lam_min
        self.lam_max = lam_max
        self.resolution = resolution
        self.n = n
        self.order = order
        self.upsample = upsample
        self.field_upsample = field_upsample

    def fit(self, X, y=None):
        grids = _to_grids(X, int(self.n))
        if len(grids) != 1:
            raise ConfigError("resonance scans take a single boundary curve")
        roots = bs.eigen_scan(grids[0], self.ell, (self.lam_min, self.lam_max), self.resolution,
                              order=self.order, upsample=self.upsample)
        self.grid_ = grids[0]
        self.eigenvalues_ = np.array([r for r, _ in roots])
        self.errors_ = np.array([e for _, e in roots])
        return self

    def eigenfield(self, k, rng=None):
        """Null-mode solution at the k-th resonance found by ``fit``.

        The resonance is re-polished with ``field_upsample`` before extraction.
        """
        check_is_fitted(self, "eigenvalues_")
        return bs.eigenfield(self.grid_, float(self.eigenvalues_[k]), self.ell, order=self.order,
                             upsample=self.field_upsample, rng=rng)
