import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as P

from fracmatern.rational import (
    RationalApprox,
    RationalApproxError,
    brasil_coeffs,
    chebyshev_pade_coeffs,
    eval_partial_fractions,
    eval_rational,
    partial_fractions,
    rational_approx,
    sup_error,
)

PHIS = (0.3, 0.5, 0.8)


def _pf_points(ra):
    lo = ra.lb if ra.lb > 0 else 1e-6
    return np.linspace(lo, 1.0, 64)


def test_manufactured_partial_fraction():
    # g(t) = (t + 2)/(t + 1) written in x = 1/t is 2 (x + 1/2)/(x + 1)
    k, r, p = partial_fractions([-0.5], [-1.0], 2.0)
    assert k == pytest.approx(1.0)
    np.testing.assert_allclose(r, [1.0])
    np.testing.assert_allclose(p, [-1.0])


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.01, 5.0),
    st.lists(st.tuples(st.floats(0.01, 10.0), st.floats(-50.0, -0.01)), min_size=1, max_size=4),
)
def test_partial_fraction_roundtrip(k, terms):
    poles = np.array([p for _, p in terms])
    if len(poles) > 1 and np.min(np.abs(np.subtract.outer(poles, poles))[~np.eye(len(poles), dtype=bool)]) < 1e-2:
        return
    res = np.array([r for r, _ in terms])
    # rebuild the rational in x from k + sum r/(1/x - p) = k + sum r x/(1 - p x)
    num = np.array([k])
    den = np.array([1.0])
    for r, p in zip(res, poles):
        f = np.array([1.0, -p])
        num = P.polyadd(P.polymul(num, f), P.polymul(den, [0.0, r]))
        den = P.polymul(den, f)
    ra = RationalApprox.from_dict({"phi": 0.5, "m": len(res), "lb": 0.0, "numer": num, "denom": den})
    order = np.argsort(poles)[::-1]
    assert ra.k == pytest.approx(k, rel=1e-9)
    np.testing.assert_allclose(ra.poles, poles[order], rtol=1e-9)
    np.testing.assert_allclose(ra.residues, res[order], rtol=1e-8)


@pytest.mark.parametrize("method", ["chebfunLB", "chebfun", "brasil"])
@pytest.mark.parametrize("phi", PHIS)
@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_identity_and_signs(method, phi, m):
    ra = rational_approx(phi, m, method=method, lb=0.01)
    x = _pf_points(ra)
    assert np.max(np.abs(eval_rational(ra, x) - eval_partial_fractions(ra, x))) < 1e-10
    assert ra.k > 0
    assert np.all(ra.residues > 0)
    assert np.all(ra.poles < 0)
    # poles in x are real, distinct and outside the interval
    assert np.all(ra.poles_x < ra.lb)
    assert len(np.unique(ra.poles_x)) == m


@pytest.mark.parametrize("phi", PHIS)
def test_sup_error_decreasing_and_small(phi):
    errs = [sup_error(chebyshev_pade_coeffs(phi, m, 0.01)) for m in range(1, 5)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3


def test_geometric_decay_phi_half():
    errs = [sup_error(chebyshev_pade_coeffs(0.5, m, 0.01)) for m in range(1, 5)]
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.all(ratios < 0.5)


def test_chebyshev_pade_examples():
    e1 = sup_error(chebyshev_pade_coeffs(0.3, 1, 0.01))
    e2 = sup_error(chebyshev_pade_coeffs(0.3, 2, 0.01))
    assert e2 < e1
    ra = chebyshev_pade_coeffs(0.5, 3, 0.01)
    assert abs(eval_rational(ra, 1.0) - 1.0) <= sup_error(ra) * (1 + 1e-9)
    assert ra.method == "chebfunLB"
    assert chebyshev_pade_coeffs(0.5, 3, 0.0).method == "chebfun"


def test_operator_form_degrees():
    ra = chebyshev_pade_coeffs(-0.35, 2, 1e-3, form="operator")
    assert len(ra.numer) == 3 and len(ra.denom) == 4
    # the target is singular at 0, so compare relative errors
    x = np.geomspace(1e-3, 1, 20_000)
    rel = [np.max(np.abs(x ** -0.35 - chebyshev_pade_coeffs(-0.35, m, 1e-3, form="operator")(x)) * x ** 0.35)
           for m in (1, 2, 3, 4)]
    assert all(b < a for a, b in zip(rel, rel[1:]))
    assert rel[-1] < 0.02


def test_brasil_near_best():
    b = brasil_coeffs(0.5, 3, 0.01)
    c = chebyshev_pade_coeffs(0.5, 3, 0.01)
    assert sup_error(b) <= sup_error(c)


def _extrema(ra, n=200_000):
    x = np.geomspace(ra.lb, 1.0, n)
    err = x ** ra.phi - eval_rational(ra, x)
    # interior local extrema plus the endpoints
    idx = np.flatnonzero((np.diff(np.sign(np.diff(err))) != 0)) + 1
    idx = np.concatenate([[0], idx, [n - 1]])
    return err[idx]


@pytest.mark.parametrize("phi, m", [(0.3, 2), (0.8, 3)])
def test_brasil_equioscillation(phi, m):
    ra = brasil_coeffs(phi, m, 0.01)
    ext = _extrema(ra)
    assert len(ext) == 2 * m + 2
    assert np.all(np.sign(ext[1:]) != np.sign(ext[:-1]))
    mags = np.abs(ext)
    assert mags.max() / mags.min() - 1 < 0.05


def test_brasil_nonconvergence_reports_defect():
    with pytest.raises(RationalApproxError, match="defect"):
        brasil_coeffs(0.3, 4, 1e-3, maxiter=1)


def test_input_validation():
    with pytest.raises(ValueError):
        chebyshev_pade_coeffs(1.2, 2, 0.01)
    with pytest.raises(ValueError):
        chebyshev_pade_coeffs(0.3, 0, 0.01)
    with pytest.raises(ValueError):
        chebyshev_pade_coeffs(0.3, 9, 0.01)
    with pytest.raises(ValueError):
        chebyshev_pade_coeffs(0.3, 2, 1.0)
    with pytest.raises(ValueError):
        rational_approx(0.3, 2, method="brasil", lb=0.0)
    with pytest.raises(ValueError):
        rational_approx(0.3, 2, method="nope")


def test_partial_fraction_errors():
    with pytest.raises(RationalApproxError, match="repeated"):
        partial_fractions([], [-1.0, -1.0], 1.0)
    with pytest.raises(RationalApproxError, match="complex"):
        RationalApprox.from_dict({"phi": 0.5, "m": 2, "lb": 0.0, "numer": [1.0], "denom": [1.0, 0.0, 1.0]})


def test_dict_roundtrip_and_determinism():
    ra = chebyshev_pade_coeffs(0.3, 3, 0.01)
    back = RationalApprox.from_dict(ra.to_dict())
    x = np.linspace(0.01, 1, 64)
    np.testing.assert_allclose(back(x), ra(x), rtol=1e-12)
    again = chebyshev_pade_coeffs(0.3, 3, 0.01)
    assert np.array_equal(again.numer, ra.numer) and np.array_equal(again.poles, ra.poles)
