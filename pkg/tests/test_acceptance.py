"""Acceptance criteria 1-7, each reported as one PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s``; the lines are
also written to the terminal when output capture is on.  The resonance scan
(criterion 3) and the eigenfield extraction (criterion 7) take about
three and five minutes.
"""

import time

import numpy as np
import pytest

from taylorbie import analytic_reference as ar
from taylorbie import beltrami_solver as bs
from taylorbie import field_eval as fe
from taylorbie import modal_kernels as mk
from taylorbie import quadrature as quad
from taylorbie import specfun
from taylorbie import surface_calculus as sc
from taylorbie.geometry import discretize_arclength, make_miller_curve

from test_field_eval import random_solution
from test_modal_kernels import _LAMS, _S, _T, direct
from test_quadrature import _log_problem
from test_specfun import agm_oracle
from test_surface_calculus import band_limited, drop_nyquist

pytestmark = pytest.mark.slow

TORUS_POINT = (1.2, 0.0, 0.25)
SHELL_POINT = (0.5, 0.0, -1.5)
REFERENCE_RESONANCES = (2.81618429764383, 3.22821787079846, 4.01342328856135, 4.45732687692555,
          4.75909602398894, 4.80160935115718, 5.52819229381708, 5.56546068190407,
          6.13551340937516, 6.34490415618171, 6.55792492108800, 6.63664744243683,
          7.07387937977634, 7.14679867372582, 7.44941373173176, 7.81008353287565,
          7.88508920256358)


def report(request, k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
        print("\n" + line)
    assert ok, line


def relerr(B, E):
    return float(np.linalg.norm(B - E) / np.linalg.norm(E))


def exact(state, P):
    return np.array(ar.exact_B(state, P[0], P[2]), dtype=complex)


@pytest.fixture(scope="module")
def genus1(state):
    """Genus-one errors at n = 25, 50, 100 and the n = 100 solution with its wall time."""
    errs, sol, wall = {}, None, None
    for n in (25, 50, 100):
        t0 = time.perf_counter()
        grid = ar.trace_level_set(state, 0.0, n=n)
        tor = ar.toroidal_flux(state, [grid])
        sol = bs.solve_genus1(grid, state.lam, tor)
        B = fe.eval_B_array(sol, [TORUS_POINT])[0]
        wall = time.perf_counter() - t0
        errs[n] = relerr(B, exact(state, TORUS_POINT))
    return errs, sol, wall


@pytest.fixture(scope="module")
def scan(example3_curve):
    t0 = time.perf_counter()
    grid = discretize_arclength(example3_curve, 100)
    roots = bs.eigen_scan(grid, 1, (1.0, 8.0), 0.02)
    return grid, roots, time.perf_counter() - t0


def test_criterion_1_torus_convergence(request, genus1):
    errs, _, wall = genus1
    drop = np.log10(errs[25] / errs[100])
    ok = errs[100] <= 1e-6 and drop >= 4.0 and wall <= 60.0
    report(request, 1, ok, f"errors n=25/50/100 = {errs[25]:.2e}/{errs[50]:.2e}/{errs[100]:.2e} "
                           f"(drop {drop:.1f} orders), n=100 solve+eval {wall:.1f} s")


def test_criterion_2_shell(request, state, genus1):
    go = ar.trace_level_set(state, 0.0, n=100)
    gi = ar.trace_level_set(state, 0.5, n=100)
    tor = ar.toroidal_flux(state, [go, gi])
    sol = bs.solve_genus2(go, gi, state.lam, tor, -np.pi)
    err = relerr(fe.eval_B_array(sol, [SHELL_POINT])[0], exact(state, SHELL_POINT))
    # shared points: inside the shell and admissible for both solutions
    g1 = genus1[1]
    rng = np.random.default_rng(3)
    cand = np.column_stack([rng.uniform(0.1, 2.0, 400), np.zeros(400), rng.uniform(-2.0, 2.0, 400)])
    cand = cand[fe.admissible_mask(sol, cand) & fe.admissible_mask(g1, cand)][:10]
    shared = max(relerr(a, b) for a, b in zip(fe.eval_B_array(sol, cand), fe.eval_B_array(g1, cand)))
    ok = err <= 1e-4 and len(cand) == 10 and shared <= 1e-4
    report(request, 2, ok, f"n=100 error at (0.5, 0, -1.5) = {err:.2e}; "
                           f"max shell/torus mismatch at {len(cand)} shared points = {shared:.2e}")


def test_criterion_3_resonances(request, scan):
    _, roots, wall = scan
    found = np.array([r for r, _ in roots])
    matched = [np.min(np.abs(found - t)) if found.size else np.inf for t in REFERENCE_RESONANCES]
    spurious = [f for f in found if np.min(np.abs(np.array(REFERENCE_RESONANCES) - f)) > 1e-4]
    ok = len(found) == len(REFERENCE_RESONANCES) and max(matched) <= 1e-4 and not spurious and wall <= 600.0
    report(request, 3, ok, f"{len(found)} roots, max deviation {max(matched):.2e}, "
                           f"{len(spurious)} spurious, scan {wall:.0f} s")


def test_criterion_4_kernel_oracles(request):
    t0 = time.perf_counter()
    worst = 0.0
    ncase = 0
    for lam in _LAMS:
        for r, z in _T:
            for rp, zp in _S:
                ref = direct(r, z, rp, zp, lam, 2)
                ncase += 1
                for ell in (0, 1):
                    lo, hi = ref[:, abs(ell - 1)], ref[:, ell + 1]
                    gc, gs = mk.modal_trig(r, z, rp, zp, lam, ell)
                    gr = mk.modal_grad(r, z, rp, zp, lam, ell)
                    errs = [mk.modal_g(r, z, rp, zp, lam, ell) - ref[0, ell],
                            gc - 0.5 * (lo[0] + hi[0]),
                            gr["g_r"] - ref[1, ell], gr["g_z"] - ref[2, ell]]
                    if ell:
                        errs += [gs - (lo[0] - hi[0]) / 2j, gr["sin_r"] - (lo[1] - hi[1]) / 2j,
                                 gr["sin_z"] - (lo[2] - hi[2]) / 2j]
                    worst = max(worst, max(abs(complex(e)) for e in errs))
    # elliptic integrals against extended-precision AGM, Bessel Wronskian and power series
    ts = np.array([0.1, 0.5, 0.9, 0.999, 1 - 1e-9])
    K, E = specfun.ellip_KE(ts)
    ref = np.array([agm_oracle(t) for t in ts])
    e_agm = float(np.max(np.abs(np.column_stack([K, E]) - ref) / ref))
    xs = np.array([0.5, 3.0, 20.0])
    J0, J1, Y0, Y1 = specfun.bessel_JY01(xs)
    e_wr = float(np.max(np.abs(J1 * Y0 - J0 * Y1 - 2 / (np.pi * xs))))
    from math import factorial
    j1 = sum((-1) ** k / (factorial(k) * factorial(k + 1) * 2 ** (2 * k + 1)) for k in range(20))
    e_ser = abs(specfun.bessel_JY01(1.0)[1] - j1) / j1
    wall = time.perf_counter() - t0
    ok = ncase == 300 and worst <= 1e-10 and e_agm <= 1e-13 and e_wr <= 1e-12 and e_ser <= 1e-13 \
        and wall <= 60.0
    report(request, 4, ok, f"{ncase} cases max abs error {worst:.2e}; AGM {e_agm:.1e}, "
                           f"Wronskian {e_wr:.1e}, series {e_ser:.1e}; {wall:.1f} s")


def test_criterion_5_representation_pde(request, state):
    rng = np.random.default_rng(5)
    curve = make_miller_curve(1.0, 0.95, 2.0, 0.3)
    outer = discretize_arclength(curve, 64)
    inner = discretize_arclength(make_miller_curve(1.0, 0.5, 1.6, 0.2), 64)
    worst_c = worst_d = 0.0
    cases = (((outer,), 0), ((outer,), 1), ((outer,), 3), ((outer, inner), 0))
    for grids, ell in cases:
        sol = random_solution(grids, state.lam, ell, rng)
        m = 2000
        pts = np.column_stack([rng.uniform(outer.r.min(), outer.r.max(), m), rng.uniform(0, 2 * np.pi, m),
                               rng.uniform(outer.z.min(), outer.z.max(), m)])
        # a margin over the exclusion zone keeps the whole difference stencil admissible
        pts = pts[fe.admissible_mask(sol, pts, exclusion=3.0)][:50]
        assert len(pts) == 50
        curl, div = fe.fd_curl_div(lambda x: fe.eval_B_array(sol, x, check=False), sol.lam, ell,
                                   pts, h=1e-3)
        worst_c, worst_d = max(worst_c, np.max(curl)), max(worst_d, np.max(div))
    ok = worst_c <= 1e-5 and worst_d <= 1e-5
    report(request, 5, ok, f"random densities, 4 configurations x 50 points: "
                           f"max curl residual {worst_c:.2e}, max div residual {worst_d:.2e}")


def test_criterion_6_operator_properties(request, state):
    rng = np.random.default_rng(6)
    g = discretize_arclength(make_miller_curve(1.0, 0.95, 2.0, 0.3), 100)
    ops = sc.build_spectral_ops(g)
    # n x m_H = +-i m_H
    e_h = 0.0
    for which in ("outer", "inner"):
        mh = sc.harmonic_field(g, which)
        nx = sc.n_cross(mh)
        s = sc.harmonic_sign(which)
        e_h = max(e_h, np.max(np.abs(nx.tau - s * 1j * mh.tau)), np.max(np.abs(nx.phi - s * 1j * mh.phi)))
    # surface divergence of the m density
    lam = state.lam
    e_div = 0.0
    for which in ("outer", "inner"):
        sig = band_limited(rng, g, 25)
        sig = sig - (ops.w @ sig) / ops.w.sum()
        m = sc.build_m_density(ops, g, sig, lam, coeff=0.4 + 0.3j, which=which)
        err = drop_nyquist(sc.surface_divergence(ops, m) - 1j * lam * sig)
        e_div = max(e_div, np.max(np.abs(err)) / np.max(np.abs(lam * sig)))
    # Laplace-Beltrami round trip on a mean-zero function
    f = np.exp(np.cos(2 * np.pi * g.s / g.L)) + 0.3 * np.sin(4 * np.pi * g.s / g.L + 1)
    f = f - (ops.w @ f) / ops.w.sum()
    e_lap = float(np.max(np.abs(sc.invert_laplace_beltrami(ops, ops.Lap @ f) - f)))
    # Alpert order on the log-kernel closed form, log h factor removed
    fk, exact_val = _log_problem()
    n1, n2 = 32, 192
    e1 = abs(quad.log_singular_quadrature(fk, 2 * np.pi, n1, 8) - exact_val)
    e2 = abs(quad.log_singular_quadrature(fk, 2 * np.pi, n2, 8) - exact_val)
    h1, h2 = 2 * np.pi / n1, 2 * np.pi / n2
    order = np.log((e1 / abs(np.log(h1))) / (e2 / abs(np.log(h2)))) / np.log(h1 / h2)
    # zero-flux genus-two solve off resonance
    go = ar.trace_level_set(state, 0.0, n=50)
    gi = ar.trace_level_set(state, 0.5, n=50)
    zero = bs.solve_genus2(go, gi, state.lam, 0.0, 0.0)
    e_zero = max(max(np.max(np.abs(s)) for s in zero.sigma), max(abs(c) for c in zero.coeffs))
    ok = e_h <= 1e-14 and e_div <= 1e-7 and e_lap <= 1e-8 and order >= 8.0 and e_zero <= 1e-10
    report(request, 6, ok, f"n x m_H {e_h:.1e}; div m - i lam sigma {e_div:.1e}; Laplacian round trip "
                           f"{e_lap:.1e}; Alpert order {order:.2f}; zero-flux genus-2 {e_zero:.1e}")


def test_criterion_7_null_modes(request, scan):
    grid, roots, _ = scan
    worst_flux = worst_norm = 0.0
    polished = []
    for k, (lam, _) in enumerate(roots):
        # extraction re-polishes the resonance on a 2x upsampled quadrature
        sol = bs.eigenfield(grid, lam, 1, rng=k)
        polished.append(sol.lam)
        tor, pol, scale, _ = fe.recompute_fluxes(sol)
        worst_flux = max(worst_flux, abs(tor) / scale, abs(pol) / scale)
        worst_norm = max(worst_norm, abs(grid.h * np.sum(np.abs(sol.sigma[0]) ** 2) - 1.0))
    dev = np.abs(np.array(polished) - np.array(REFERENCE_RESONANCES[:len(polished)]))
    ok = len(roots) > 0 and worst_flux <= 1e-8 and worst_norm <= 1e-12
    report(request, 7, ok, f"{len(roots)} eigenfields: max flux / field scale {worst_flux:.2e}, "
                           f"max | int |sigma|^2 ds - 1 | {worst_norm:.1e}; {np.sum(dev < 1e-7)} of {dev.size} "
                           f"polished resonances within 1e-7 of the reference, max deviation {dev.max():.1e}")
