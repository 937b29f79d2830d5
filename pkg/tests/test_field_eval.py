import csv
import io

import numpy as np
import pytest

from taylorbie import beltrami_solver as bs
from taylorbie import field_eval as fe
from taylorbie.errors import DomainError, ProximityError
from taylorbie.geometry import discretize_arclength, make_miller_curve


def band_limited(rng, n, kmax=8):
    s = np.arange(n) / n
    k = np.arange(1, kmax + 1)[:, None]
    c = (rng.standard_normal((2, kmax, 1)) + 1j * rng.standard_normal((2, kmax, 1))) / k ** 2
    return (c[0] * np.cos(2 * np.pi * k * s) + c[1] * np.sin(2 * np.pi * k * s)).sum(axis=0)


def random_solution(grids, lam, ell, rng):
    """Unsolved densities: random sigma, m derived from it by the surface calculus."""
    ops = bs.assemble_operators(grids, lam, ell, upsample=1)
    lay = bs._Layout(tuple(g.n for g in grids), ell == 0)
    x = np.zeros(lay.N, dtype=complex)
    for k, g in enumerate(grids):
        sig = band_limited(rng, g.n)
        if ell == 0:
            # div m = i lam sigma is solvable only for sigma of zero surface mean
            w = g.r * g.h
            sig = sig - (w @ sig) / w.sum()
        x[lay.offsets[k]:lay.offsets[k + 1]] = sig
        if ell == 0:
            x[lay.coeff_index(k)] = rng.standard_normal() + 1j * rng.standard_normal()
    Sel, Tm = bs._density_maps(ops, lay)
    coeffs = tuple(x[lay.coeff_index(k)] for k in range(len(grids))) if ell == 0 else ()
    return bs.DebyeSolution(lam, ell, ops.grids, ops.kinds, tuple(S @ x for S in Sel),
                            tuple(T @ x for T in Tm), coeffs, 1.0, None)


def interior_points(grid, rng, m=50, center=(1.0, 0.0)):
    idx = rng.integers(0, grid.n, m)
    t = rng.uniform(0.1, 0.7, m)
    r = center[0] + t * (grid.r[idx] - center[0])
    z = center[1] + t * (grid.z[idx] - center[1])
    return np.column_stack([r, rng.uniform(0, 2 * np.pi, m), z])


@pytest.fixture(scope="module")
def torus():
    return discretize_arclength(make_miller_curve(1.0, 0.5, 1.5, 0.2), 40)


@pytest.mark.parametrize("ell", [0, 2])
def test_random_densities_satisfy_beltrami(torus, ell):
    rng = np.random.default_rng(7 + ell)
    sol = random_solution((torus,), 1.7, ell, rng)
    pts = interior_points(torus, rng)
    curl, div = fe.fd_curl_div(lambda x: fe.eval_B_array(sol, x, check=False), sol.lam, ell, pts, h=1e-3)
    assert np.max(curl) <= 1e-5
    assert np.max(div) <= 1e-5


def test_field_is_linear_in_densities(torus, rng):
    a = random_solution((torus,), 1.7, 0, rng)
    b = random_solution((torus,), 1.7, 0, rng)
    c = bs.DebyeSolution(a.lam, 0, a.grids, a.kinds,
                         tuple(x + 2 * y for x, y in zip(a.sigma, b.sigma)),
                         tuple(x + 2 * y for x, y in zip(a.mtau, b.mtau)),
                         tuple(x + 2 * y for x, y in zip(a.coeffs, b.coeffs)), 1.0, None)
    pts = interior_points(torus, rng, m=5)
    Ba, Bb, Bc = (fe.eval_B_array(s, pts) for s in (a, b, c))
    assert np.allclose(Bc, Ba + 2 * Bb, rtol=1e-12, atol=1e-12 * np.max(np.abs(Bc)))


def test_axisymmetric_field_independent_of_phi(torus, rng):
    sol = random_solution((torus,), 1.7, 0, rng)
    pts = interior_points(torus, rng, m=3)
    other = pts.copy()
    other[:, 1] += 1.0
    assert np.allclose(fe.eval_B_array(sol, pts), fe.eval_B_array(sol, other), rtol=0, atol=1e-14)


def test_targets_outside_or_too_close_are_refused(torus, rng):
    sol = random_solution((torus,), 1.7, 0, rng)
    with pytest.raises(ProximityError):
        fe.eval_B(sol, [[3.0, 0.0, 0.0]])
    near = [[torus.r[0] - 1e-4, 0.0, torus.z[0]]]
    with pytest.raises(ProximityError, match="exclusion zone"):
        fe.eval_B(sol, near)
    with pytest.raises(DomainError):
        fe.eval_B(sol, [[-1.0, 0.0, 0.0]])
    mask = fe.admissible_mask(sol, [[1.0, 0.0, 0.0], [3.0, 0.0, 0.0], near[0]])
    assert mask.tolist() == [True, False, False]


def test_boundary_distance(torus):
    d = fe.boundary_distance(torus, np.array([1.0, torus.r[5]]), np.array([0.0, torus.z[5]]))
    assert d[1] < 1e-12
    assert 0.3 < d[0] < 0.55


def test_csv_format(torus, rng):
    sol = random_solution((torus,), 1.7, 0, rng)
    samples = fe.eval_B(sol, [[1.0, 0.5, 0.1], [1.1, 0.0, -0.2]])
    text = fe.write_csv(samples)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == fe.CSV_HEADER
    assert len(rows) == 3
    back = np.array(rows[1], dtype=float)
    s = samples[0]
    assert np.array_equal(back[3:], [s.Br.real, s.Br.imag, s.Bphi.real, s.Bphi.imag, s.Bz.real, s.Bz.imag])


def test_verify_field_on_solved_state(torus):
    sol = bs.solve_genus1(torus, 1.3, 1.0, upsample=2)
    rep = fe.verify_field(sol, [[1.0, 0.0, 0.0], [1.2, 0.0, 0.3]])
    assert rep["curl_residual"] < 1e-5 and rep["div_residual"] < 1e-5
    assert rep["flux_tor_error"] < 1e-6
    assert rep["normal_residual"] < 1e-4
