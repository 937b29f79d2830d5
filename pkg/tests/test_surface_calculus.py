import numpy as np
import pytest

from taylorbie import surface_calculus as sc
from taylorbie.errors import AccuracyError, ConfigError
from taylorbie.geometry import discretize_arclength, make_miller_curve


@pytest.fixture(scope="module")
def torus():
    g = discretize_arclength(make_miller_curve(3.0, 1.0, 1.0, 0.0), 64)
    return g, sc.build_spectral_ops(g)


@pytest.fixture(scope="module")
def shaped():
    g = discretize_arclength(make_miller_curve(1.0, 0.95, 2.0, 0.3), 100)
    return g, sc.build_spectral_ops(g)


def _mean_zero(f, ops):
    return f - (ops.w @ f) / ops.w.sum()


def drop_nyquist(x):
    alt = (-1.0) ** np.arange(x.size)
    return x - alt * (alt @ x) / x.size if x.size % 2 == 0 else x


def band_limited(rng, g, kmax, complex_=True):
    """Random density with Fourier content up to mode kmax."""
    x = 2 * np.pi * g.s / g.L
    k = np.arange(1, kmax + 1)
    a = rng.standard_normal(kmax) + (1j * rng.standard_normal(kmax) if complex_ else 0)
    b = rng.standard_normal(kmax) + (1j * rng.standard_normal(kmax) if complex_ else 0)
    return np.cos(np.outer(x, k)) @ a + np.sin(np.outer(x, k)) @ b


def test_fourier_derivative(torus):
    g, ops = torus
    x = 2 * np.pi * g.s / g.L
    np.testing.assert_allclose(ops.D @ np.sin(x), 2 * np.pi / g.L * np.cos(x), atol=1e-12)


@pytest.mark.parametrize("n", [15, 16])
def test_second_derivative_matrix(n):
    x = 2 * np.pi * np.arange(n) / n
    D2 = sc.fourier_diff_matrix(n, 2 * np.pi, 2)
    np.testing.assert_allclose(D2 @ np.cos(3 * x), -9 * np.cos(3 * x), atol=1e-11)


def test_laplacian_annihilates_constants(shaped):
    _, ops = shaped
    assert np.max(np.abs(ops.Lap @ np.ones(ops.Lap.shape[0]))) < 1e-10


def test_laplacian_analytic(torus):
    g, ops = torus
    s = g.s
    r, rs = 3 + np.cos(s), -np.sin(s)
    np.testing.assert_allclose(ops.Lap @ np.cos(s), -np.cos(s) + rs / r * (-np.sin(s)), atol=1e-10)


def test_corrected_laplacian_round_trip(shaped, rng):
    g, ops = shaped
    f = np.exp(np.cos(2 * np.pi * g.s / g.L)) + 0.3 * np.sin(4 * np.pi * g.s / g.L + 1)
    rhs = ops.Lap @ f + np.ones(f.size) * (ops.w @ f)
    x = np.linalg.solve(ops.Lap0, rhs)
    np.testing.assert_allclose(x, f, atol=1e-8)
    g0 = _mean_zero(f, ops)
    np.testing.assert_allclose(sc.invert_laplace_beltrami(ops, ops.Lap @ g0), g0, atol=1e-8)


def test_inverse_residual_random(torus, rng):
    g, ops = torus
    f = _mean_zero(rng.standard_normal(g.n), ops)
    rho = sc.invert_laplace_beltrami(ops, f)
    assert np.linalg.norm(ops.Lap @ rho - f) / np.linalg.norm(f) < 1e-8
    assert abs(ops.w @ rho) < 1e-10 * np.linalg.norm(rho)
    assert np.all(sc.invert_laplace_beltrami(ops, np.zeros(g.n)) == 0)


def test_inverse_rejects_nonzero_mean(torus):
    g, ops = torus
    with pytest.raises(AccuracyError):
        sc.invert_laplace_beltrami(ops, np.ones(g.n))


def test_even_n_nyquist_invertible():
    g = discretize_arclength(make_miller_curve(1.0, 0.95, 2.0, 0.3), 50)
    ops = sc.build_spectral_ops(g)
    assert np.linalg.cond(ops.Lap0) < 1e8


def test_harmonic_field_identities(shaped):
    g, ops = shaped
    for which, sgn in (("outer", 1), ("inner", -1)):
        mh = sc.harmonic_field(g, which)
        nx = sc.n_cross(mh)
        np.testing.assert_allclose(nx.tau, sgn * 1j * mh.tau, atol=1e-15)
        np.testing.assert_allclose(nx.phi, sgn * 1j * mh.phi, atol=1e-15)
        np.testing.assert_allclose(np.hypot(np.abs(mh.tau), np.abs(mh.phi)), np.sqrt(2) / g.r, rtol=1e-15)
    # m_H1 = tau / r is divergence free
    u = sc.TangentialField(1 / g.r, np.zeros(g.n))
    assert np.max(np.abs(sc.surface_divergence(ops, u))) < 1e-12


def test_bad_surface_type():
    with pytest.raises(ConfigError):
        sc.harmonic_sign("middle")


def test_m_density_divergence_exact_for_odd_n(rng):
    g = discretize_arclength(make_miller_curve(1.0, 0.95, 2.0, 0.3), 101)
    ops = sc.build_spectral_ops(g)
    sigma = _mean_zero(rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n), ops)
    m = sc.build_m_density(ops, g, sigma, 2.0, coeff=1.0)
    div = sc.surface_divergence(ops, m)
    assert np.max(np.abs(div - 2j * sigma)) < 1e-10 * np.max(np.abs(sigma))


@pytest.mark.parametrize("which", ["outer", "inner"])
def test_m_density_divergence(shaped, rng, which):
    g, ops = shaped
    lam = 2.3
    # on an even grid the Nyquist mode has no first derivative; compare the rest
    for sigma in (band_limited(rng, g, g.n // 4), rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n)):
        sigma = _mean_zero(sigma, ops)
        m = sc.build_m_density(ops, g, sigma, lam, coeff=0.7 - 0.2j, which=which)
        div = sc.surface_divergence(ops, m)
        err = drop_nyquist(div - 1j * lam * sigma)
        assert np.max(np.abs(err)) < 1e-7 * np.max(np.abs(lam * sigma))


def test_m_density_special_cases(shaped):
    g, ops = shaped
    m = sc.build_m_density(ops, g, np.zeros(g.n), 1.5, coeff=1.0)
    mh = sc.harmonic_field(g, "outer")
    np.testing.assert_allclose(m.tau, mh.tau, atol=1e-15)
    np.testing.assert_allclose(m.phi, mh.phi, atol=1e-15)
    f = _mean_zero(np.sin(2 * np.pi * g.s / g.L) ** 3, ops)
    m = sc.build_m_density(ops, g, ops.Lap @ f, 1.5)
    np.testing.assert_allclose(m.tau, 1.5j * (ops.D @ f), atol=1e-8)


def test_m_density_matrices_agree(shaped, rng):
    g, ops = shaped
    sigma = _mean_zero(rng.standard_normal(g.n), ops)
    Mtau, htau, p = sc.m_density_matrices(ops, 2.0, "inner")
    m = sc.build_m_density(ops, g, sigma, 2.0, coeff=0.5, which="inner")
    np.testing.assert_allclose(Mtau @ sigma + 0.5 * htau, m.tau, atol=1e-12)
    np.testing.assert_allclose(p * 1j * m.tau, m.phi, atol=1e-12)


def test_divergence_product_rule(torus):
    g, ops = torus
    f = np.cos(2 * np.pi * g.s / g.L) + 0.5 * np.sin(6 * np.pi * g.s / g.L)
    u = sc.TangentialField(f, np.zeros(g.n))
    prod = ops.D @ f + g.rs / g.r * f
    np.testing.assert_allclose(sc.surface_divergence(ops, u), prod, atol=1e-11)


def test_differentiation_commutes_with_shift(shaped):
    g, ops = shaped
    f = np.exp(np.sin(2 * np.pi * g.s / g.L))
    np.testing.assert_allclose(ops.D @ np.roll(f, 3), np.roll(ops.D @ f, 3), atol=1e-12)


def test_mode_l_laplacian(torus):
    g, _ = torus
    ops = sc.build_spectral_ops(g, ell=1)
    f = np.cos(g.s)
    r = 3 + np.cos(g.s)
    expect = -np.cos(g.s) + (-np.sin(g.s)) / r * (-np.sin(g.s)) - f / r ** 2
    np.testing.assert_allclose(ops.Lap @ f, expect, atol=1e-10)
    # any f is admissible for l != 0
    np.testing.assert_allclose(ops.Lap @ sc.invert_laplace_beltrami(ops, f), f, atol=1e-10)
