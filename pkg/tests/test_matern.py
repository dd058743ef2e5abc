import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracmatern.matern import (
    MaternParams,
    bessel_k,
    folded_matern_cov,
    kappa_from_range,
    matern_cov,
    matern_spectral_density,
    matern_tau,
    range_from_kappa,
    spectral_constant,
)

BENCH = MaternParams(sigma=2.0, nu=0.8, kappa=16.8655)


def test_bessel_half_integer_examples():
    assert bessel_k(0.5, 1.0) == pytest.approx(math.sqrt(math.pi / 2) * math.exp(-1), rel=1e-14)
    expected = math.sqrt(math.pi / 4) * math.exp(-2) * 1.5
    assert bessel_k(1.5, 2.0) == pytest.approx(expected, rel=1e-14)
    assert bessel_k(1.5, 2.0) == pytest.approx(0.179907, abs=1e-6)


def test_bessel_against_mpmath():
    with mpmath.workdps(40):
        ref = float(mpmath.besselk(0.8, 0.3))
    assert bessel_k(0.8, 0.3) == pytest.approx(ref, rel=1e-13)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 5.0), st.floats(1e-6, 50.0))
def test_bessel_accuracy_property(nu, x):
    with mpmath.workdps(30):
        ref = float(mpmath.besselk(nu, x))
    assert bessel_k(nu, x) == pytest.approx(ref, rel=1e-10)


def test_bessel_symmetric_order_and_vectorized():
    x = np.array([0.1, 1.0, 7.5])
    np.testing.assert_array_equal(bessel_k(-1.3, x), bessel_k(1.3, x))
    assert bessel_k(2.0, x).shape == (3,)


def test_bessel_domain_and_overflow():
    with pytest.raises(ValueError):
        bessel_k(0.5, 0.0)
    with pytest.raises(ValueError):
        bessel_k(0.5, -1.0)
    val = bessel_k(4.9, 1e-300)
    assert val == math.inf


@pytest.mark.parametrize("nu, closed", [
    (0.5, lambda z: np.exp(-z)),
    (1.5, lambda z: (1 + z) * np.exp(-z)),
    (2.5, lambda z: (1 + z + z ** 2 / 3) * np.exp(-z)),
])
def test_matern_half_integer_closed_forms(nu, closed):
    p = MaternParams(sigma=1.7, nu=nu, kappa=3.0)
    h = np.linspace(1e-3, 5 / p.kappa, 200)
    np.testing.assert_allclose(matern_cov(h, p), 1.7 ** 2 * closed(p.kappa * h), rtol=1e-12)


def test_matern_examples():
    assert matern_cov(0.0, MaternParams(2.0, 0.8, 5.0)) == 4.0
    assert matern_cov(1.0, MaternParams(1.0, 0.5, 1.0)) == pytest.approx(math.exp(-1), rel=1e-14)
    assert matern_cov(0.5, MaternParams(1.0, 1.5, 2.0)) == pytest.approx(2 * math.exp(-1), rel=1e-14)


def test_matern_monotone_positive():
    for nu in (0.3, 0.8, 1.7, 4.0):
        p = MaternParams(1.0, nu, 4.0)
        c = matern_cov(np.linspace(0, 3, 500), p)
        assert np.all(c > 0)
        assert np.all(np.diff(c) <= 1e-15)


def test_matern_rejects_negative_lag():
    with pytest.raises(ValueError):
        matern_cov(-0.1, BENCH)


def test_params_validation_and_roundtrips():
    with pytest.raises(ValueError):
        MaternParams(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MaternParams(1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        MaternParams(1.0, 1.0, 1.0, d=0)
    p = MaternParams(2.0, 0.8, 16.8655, d=2)
    assert p.alpha == 0.8 + 1.0
    lhs = p.tau ** 2 * p.sigma ** 2 * math.gamma(p.alpha) * (4 * math.pi) ** (p.d / 2) * p.kappa ** (2 * p.nu)
    assert lhs == pytest.approx(math.gamma(p.nu), rel=1e-12)
    assert kappa_from_range(range_from_kappa(7.3, 1.4), 1.4) == pytest.approx(7.3, rel=1e-12)
    q = MaternParams.from_range(2.0, 0.8, 0.15)
    assert q.range == pytest.approx(0.15, rel=1e-12)
    r = MaternParams.from_tau(q.tau, q.nu, q.kappa)
    assert r.sigma == pytest.approx(2.0, rel=1e-12)
    assert matern_tau(2.0, 0.8, q.kappa) == pytest.approx(q.tau)


def _folded_direct(s, t, p, L=1.0, K=100):
    ks = np.arange(-K, K + 1)
    return float(sum(matern_cov(abs(s - t + 2 * k * L), p) + matern_cov(abs(s + t + 2 * k * L), p) for k in ks))


def test_folded_against_direct_sum():
    val = folded_matern_cov(0.5, 0.5, BENCH)
    assert val == pytest.approx(_folded_direct(0.5, 0.5, BENCH), rel=1e-13)
    assert 4.0 < val < 4.0 + 1e-4
    p = MaternParams(1.0, 1.3, 2.0)
    for s, t in [(0.0, 0.0), (0.1, 0.9), (1.0, 0.3)]:
        assert folded_matern_cov(s, t, p) == pytest.approx(_folded_direct(s, t, p), rel=1e-12)


def test_folded_symmetry_and_dominance():
    rng = np.random.default_rng(0)
    p = MaternParams(1.0, 1.1, 3.0)
    s, t = rng.uniform(0, 1, 20), rng.uniform(0, 1, 20)
    np.testing.assert_allclose(folded_matern_cov(s, t, p), folded_matern_cov(t, s, p), rtol=1e-14)
    assert np.all(folded_matern_cov(s, t, p) >= matern_cov(np.abs(s - t), p))


def test_folded_large_kappa_limit_and_domain():
    p = MaternParams(1.3, 0.8, 100.0)
    assert folded_matern_cov(0.5, 0.5, p) == pytest.approx(matern_cov(0.0, p), abs=1e-12)
    with pytest.raises(ValueError, match="outside"):
        folded_matern_cov(1.5, 0.2, p)
    with pytest.raises(ValueError):
        folded_matern_cov(0.2, 0.2, p, L=-1)


def test_spectral_density_integrates_to_variance():
    for p in (BENCH, MaternParams(1.0, 0.3, 2.0), MaternParams(0.5, 2.2, 7.0)):
        total = 2 * integrate.quad(lambda w: matern_spectral_density(w, p), 0, np.inf, epsabs=0, epsrel=1e-12)[0]
        assert total == pytest.approx(p.sigma ** 2, rel=1e-6)


def test_spectral_density_even_and_constant():
    w = np.random.default_rng(1).normal(0, 30, 10)
    np.testing.assert_array_equal(matern_spectral_density(w, BENCH), matern_spectral_density(-w, BENCH))
    p = BENCH
    a = (1 / (2 * math.pi)) * math.gamma(p.alpha) * math.sqrt(4 * math.pi) * p.kappa ** (2 * p.nu) / math.gamma(p.nu)
    assert spectral_constant(p) == pytest.approx(a, rel=1e-14)
    assert matern_spectral_density(0.0, p) == pytest.approx(a * p.sigma ** 2 * p.kappa ** (-2 * p.alpha), rel=1e-13)
    with pytest.raises(ValueError):
        matern_spectral_density(0.0, MaternParams(1, 1, 1, d=2))


@pytest.mark.parametrize("h", [0.0, 0.05, 0.1])
def test_fourier_consistency(h):
    p = BENCH
    f = lambda w: matern_spectral_density(w, p)  # noqa: E731
    if h == 0:
        val = 2 * integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12)[0]
    else:
        val = 2 * integrate.quad(f, 0, np.inf, weight="cos", wvar=h)[0]
    assert val == pytest.approx(matern_cov(h, p), rel=1e-5)
