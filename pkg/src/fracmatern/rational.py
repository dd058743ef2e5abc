"""Rational approximation of ``x**phi`` on ``[lb, 1]``.

Two constructions are provided: the Clenshaw-Lord Chebyshev-Padé approximant
(with ``lb = 0`` for ``"chebfun"`` or a positive lower bound for
``"chebfunLB"``) and a near-best approximant computed by barycentric
iterative rescaling of interpolation nodes (``"brasil"``).

Every approximant ``R(x) = p(x) / q(x)`` is also stored in partial-fraction
form with respect to the reciprocal variable ``t = 1 / x``::

    R(x) = k + sum_i r_i / (t - p_i),    t = 1 / x.

``t`` plays the role of an (scaled) operator eigenvalue, so the fractions map
directly onto shifted operators ``(L - p_i C)^{-1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import polynomial as nppoly
from scipy.fft import dct
from scipy.optimize import minimize_scalar

__all__ = [
    "RationalApprox",
    "RationalApproxError",
    "METHODS",
    "rational_approx",
    "chebyshev_pade_coeffs",
    "brasil_coeffs",
    "partial_fractions",
    "eval_rational",
    "eval_partial_fractions",
    "sup_error",
]

METHODS = ("chebfunLB", "chebfun", "brasil")

# number of Chebyshev samples used to resolve x**phi; coefficients kept <= 512
_CHEB_SAMPLES = 1 << 16
_CHEB_KEEP = 512


class RationalApproxError(RuntimeError):
    """Raised when a rational approximation cannot be constructed."""


@dataclass(frozen=True, eq=False)
class RationalApprox:
    """Degree-``m`` rational approximation of ``x**phi`` on ``[lb, 1]``.

    ``numer`` and ``denom`` hold ascending monomial coefficients in ``x``;
    the denominator has degree ``m`` (covariance form) or ``m + 1``
    (operator form).  ``zeros``, ``poles_x`` and ``scale`` give the factored
    form ``scale * prod(x - zeros) / prod(x - poles_x)``.
    """

    phi: float
    m: int
    lb: float
    method: str
    form: str
    numer: np.ndarray
    denom: np.ndarray
    zeros: np.ndarray
    poles_x: np.ndarray
    scale: float
    k: float
    residues: np.ndarray
    poles: np.ndarray
    info: dict = field(default_factory=dict)

    def __call__(self, x):
        return eval_rational(self, x)

    def to_dict(self):
        return {
            "phi": float(self.phi),
            "m": int(self.m),
            "lb": float(self.lb),
            "method": self.method,
            "form": self.form,
            "numer": [float(v) for v in self.numer],
            "denom": [float(v) for v in self.denom],
            "k": float(self.k),
            "residues": [float(v) for v in self.residues],
            "poles": [float(v) for v in self.poles],
        }

    @classmethod
    def from_dict(cls, d):
        numer = np.asarray(d["numer"], dtype=float)
        denom = np.asarray(d["denom"], dtype=float)
        return _from_polynomials(
            numer, denom, phi=d["phi"], m=d["m"], lb=d["lb"],
            method=d.get("method", "chebfunLB"), form=d.get("form", "covariance"),
        )


def _poly_from_roots(roots, scale):
    coeffs = np.real(nppoly.polyfromroots(roots)) if len(roots) else np.array([1.0])
    return scale * coeffs


def _real_roots(roots, what, tol=1e-8):
    roots = np.asarray(roots)
    if roots.size and np.max(np.abs(roots.imag)) > tol * max(1.0, np.max(np.abs(roots))):
        raise RationalApproxError(f"{what} has complex roots: {roots}")
    return np.sort(roots.real)


def partial_fractions(zeros, poles_x, scale):
    """Partial fractions of ``scale * prod(x - zeros) / prod(x - poles_x)`` in ``t = 1/x``.

    Returns ``(k, residues, poles)`` with ``k = R(0)``, ``poles = 1 / poles_x``
    and ``residues_i = -Res_x(R, q_i) / q_i**2``.

    Raises
    ------
    RationalApproxError
        If the poles are repeated, zero or not real.
    """
    zeros = np.asarray(zeros, dtype=float)
    q = np.asarray(poles_x, dtype=float)
    if len(zeros) > len(q):
        raise RationalApproxError("numerator degree exceeds denominator degree")
    if np.any(q == 0):
        raise RationalApproxError("pole at x = 0 has no image in t = 1/x")
    if len(q) > 1:
        gaps = np.abs(np.subtract.outer(q, q))[~np.eye(len(q), dtype=bool)]
        if np.min(gaps) < 1e-12 * max(1.0, np.max(np.abs(q))):
            raise RationalApproxError(f"repeated poles: {q}")
    k = scale * np.prod(-zeros) / np.prod(-q)
    res = np.empty(len(q))
    for i, qi in enumerate(q):
        others = np.delete(q, i)
        res_x = scale * np.prod(qi - zeros) / np.prod(qi - others)
        res[i] = -res_x / qi ** 2
    return float(k), res, 1.0 / q


def _from_factored(zeros, poles_x, scale, *, phi, m, lb, method, form, info=None):
    zeros = _real_roots(zeros, "numerator")
    poles_x = _real_roots(poles_x, "denominator")
    k, res, poles = partial_fractions(zeros, poles_x, scale)
    order = np.argsort(poles)[::-1]
    denom = _poly_from_roots(poles_x, 1.0)
    numer = _poly_from_roots(zeros, scale)
    # normalise so the denominator has unit constant term
    c0 = denom[0]
    return RationalApprox(
        phi=float(phi), m=int(m), lb=float(lb), method=method, form=form,
        numer=numer / c0, denom=denom / c0, zeros=zeros, poles_x=poles_x,
        scale=float(scale), k=k, residues=res[order], poles=poles[order],
        info=dict(info or {}),
    )


def _from_polynomials(numer, denom, *, phi, m, lb, method, form):
    numer = np.trim_zeros(np.asarray(numer, dtype=float), "b")
    denom = np.trim_zeros(np.asarray(denom, dtype=float), "b")
    zeros = nppoly.polyroots(numer) if len(numer) > 1 else np.array([])
    poles_x = nppoly.polyroots(denom)
    scale = numer[-1] / denom[-1]
    return _from_factored(zeros, poles_x, scale, phi=phi, m=m, lb=lb, method=method, form=form)


def eval_rational(ra: RationalApprox, x):
    """Evaluate ``p(x) / q(x)`` with Horner's rule on both polynomials."""
    x = np.asarray(x, dtype=float)
    return nppoly.polyval(x, ra.numer) / nppoly.polyval(x, ra.denom)


def eval_partial_fractions(ra: RationalApprox, x):
    """Evaluate ``k + sum r_i / (1/x - p_i)``."""
    x = np.asarray(x, dtype=float)
    t = 1.0 / x
    out = np.full(np.shape(t), ra.k, dtype=float)
    for r, p in zip(ra.residues, ra.poles):
        out = out + r / (t - p)
    return out


def sup_error(ra: RationalApprox, n=10_000, lb=None):
    """Max of ``|x**phi - R(x)|`` on a grid of ``[lb, 1]`` (log-spaced plus uniform)."""
    lb = ra.lb if lb is None else lb
    lo = max(lb, 1e-300)
    x = np.unique(np.concatenate([np.geomspace(lo, 1.0, n // 2), np.linspace(lb, 1.0, n - n // 2)]))
    x = x[x > 0] if ra.phi < 0 else x
    return float(np.max(np.abs(x ** ra.phi - eval_rational(ra, x))))


def _target_exponent(phi, form):
    if form == "covariance" and not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0, 1), got {phi!r}")
    if form == "operator" and not -1.0 < phi < 1.0:
        raise ValueError(f"operator-form exponent must lie in (-1, 1), got {phi!r}")
    if form not in ("covariance", "operator"):
        raise ValueError(f"unknown form {form!r}")


def _check_order(m):
    if int(m) != m or not 1 <= m <= 8:
        raise ValueError(f"rational order m must be an integer in [1, 8], got {m!r}")


# ---------------------------------------------------------------------------
# Clenshaw-Lord Chebyshev-Padé
# ---------------------------------------------------------------------------

def _cheb_coeffs(phi, lb, keep=_CHEB_KEEP, samples=_CHEB_SAMPLES):
    """Chebyshev coefficients of ``x**phi`` mapped from ``[lb, 1]`` to ``[-1, 1]``."""
    j = np.arange(samples)
    y = np.cos(np.pi * (j + 0.5) / samples)
    x = lb + (1.0 - lb) * (y + 1.0) / 2.0
    coeffs = dct(x ** phi, type=2) / samples
    coeffs[0] /= 2.0
    return coeffs[:keep]


def chebyshev_pade_coeffs(phi, m, lb=0.0, form="covariance", method=None):
    """Clenshaw-Lord Chebyshev-Padé approximant of ``x**phi`` on ``[lb, 1]``.

    The covariance form has type ``[m/m]``, the operator form ``[m/(m+1)]``.
    The denominator comes from the Hankel system built on the Chebyshev
    coefficients; the approximant is the real part of the associated
    Laurent-Padé approximant on the unit circle, truncated to numerator
    degree ``m``.
    """
    _check_order(m)
    _target_exponent(phi, form)
    if not 0.0 <= lb < 1.0:
        raise ValueError(f"lb must lie in [0, 1), got {lb!r}")
    if phi < 0 and lb == 0:
        raise ValueError("a negative exponent needs a positive lower bound")
    if method is None:
        method = "chebfun" if lb == 0 else "chebfunLB"
    n = m if form == "covariance" else m + 1
    a = _cheb_coeffs(phi, lb)
    c = a.copy()
    c[0] *= 2.0
    rows = np.arange(m + 1, m + n + 1)
    cols = np.arange(1, n + 1)
    H = c[np.abs(rows[:, None] - cols[None, :])]
    rhs = -c[rows]
    if np.linalg.cond(H) > 1e14:
        raise RationalApproxError(
            f"singular Chebyshev-Padé system for phi={phi}, m={m}, lb={lb}"
        )
    beta = np.concatenate([[1.0], np.linalg.solve(H, rhs)])
    ell = max(m, n)
    g = a[: ell + 1]
    alpha = np.array([sum(beta[j] * g[kk - j] for j in range(min(kk, n) + 1)) for kk in range(ell + 1)])
    num = np.zeros(ell + n + 1)
    for kk in range(ell + 1):
        for j in range(n + 1):
            num[abs(kk - j)] += alpha[kk] * beta[j]
    num = num[: m + 1]
    den = np.zeros(n + 1)
    for j in range(n + 1):
        for jj in range(n + 1):
            den[abs(j - jj)] += beta[j] * beta[jj]
    num_cheb = npcheb.Chebyshev(num, domain=[lb, 1.0])
    den_cheb = npcheb.Chebyshev(den, domain=[lb, 1.0])
    zeros = num_cheb.roots()
    poles_x = den_cheb.roots()
    x0 = 1.0
    scale = num_cheb(x0) / den_cheb(x0) * np.prod(x0 - poles_x).real / np.prod(x0 - zeros).real
    return _from_factored(zeros, poles_x, float(np.real(scale)), phi=phi, m=m, lb=lb,
                          method=method, form=form)


# ---------------------------------------------------------------------------
# BRASIL: best rational approximation by barycentric interpolation
# ---------------------------------------------------------------------------

def _bary_interpolant(nodes, fvals, m, n):
    """Type ``(m, n)`` barycentric interpolant through ``m + n + 1`` nodes (``n >= m``)."""
    idx = np.arange(len(nodes))
    sup = idx[::2][: n + 1]
    if len(sup) < n + 1:
        sup = np.concatenate([sup, idx[-(n + 1 - len(sup)):]])
    sup = np.unique(sup)
    test = np.setdiff1d(idx, sup)
    xs, fs = nodes[sup], fvals[sup]
    xt, ft = nodes[test], fvals[test]
    rows = [(ft[:, None] - fs[None, :]) / (xt[:, None] - xs[None, :])]
    for p in range(n - m):
        rows.append((fs * xs ** p)[None, :])
    A = np.vstack(rows)
    scal = np.max(np.abs(A), axis=1, keepdims=True)
    _, _, vt = np.linalg.svd(A / scal)
    w = vt[-1]
    return xs, fs, w


def _bary_eval(xs, fs, w, x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        C = 1.0 / np.subtract.outer(x, xs)
        r = (C @ (w * fs)) / (C @ w)
    hit = np.isclose(np.subtract.outer(x, xs), 0.0, atol=0.0, rtol=0.0)
    if np.any(hit):
        ii, jj = np.nonzero(hit)
        r[ii] = fs[jj]
    return r


def _bary_poles_zeros(xs, fs, w):
    N = len(xs)
    B = np.eye(N + 1)
    B[0, 0] = 0.0
    E = np.zeros((N + 1, N + 1))
    E[0, 1:] = w
    E[1:, 0] = 1.0
    np.fill_diagonal(E[1:, 1:], xs)
    from scipy.linalg import eigvals

    poles = eigvals(E, B)
    poles = poles[np.isfinite(poles)]
    E[0, 1:] = w * fs
    zeros = eigvals(E, B)
    zeros = zeros[np.isfinite(zeros)]
    return zeros, poles


def _local_max_abs(err, a, b, npts=40):
    """Local maximum of ``|err|`` on ``[a, b]`` in the log variable."""
    s = np.linspace(a, b, npts)
    vals = np.abs(err(np.exp(s)))
    i = int(np.argmax(vals))
    lo, hi = s[max(i - 1, 0)], s[min(i + 1, npts - 1)]
    if hi > lo:
        res = minimize_scalar(lambda u: -abs(err(np.exp(np.array([u])))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12 * max(1.0, abs(lo))})
        if -res.fun > vals[i]:
            return float(-res.fun), float(res.x)
    return float(vals[i]), float(s[i])


def brasil_coeffs(phi, m, lb, form="covariance", tol=1e-3, maxiter=200, init=None):
    """Near-best rational approximant of ``x**phi`` on ``[lb, 1]``.

    Interpolation nodes are moved so that the local error maxima between them
    equalise; at convergence the error equioscillates at ``m + n + 2`` points.
    Node placement works in ``log x``.

    Raises
    ------
    RationalApproxError
        If the extrema do not agree within ``tol`` after ``maxiter`` steps.
    """
    _check_order(m)
    _target_exponent(phi, form)
    if not 0.0 < lb < 1.0:
        raise ValueError(f"brasil needs 0 < lb < 1, got {lb!r}")
    n = m if form == "covariance" else m + 1
    nn = m + n + 1
    a, b = math.log(lb), 0.0
    f = lambda x: x ** phi  # noqa: E731
    if init is None:
        # Chebyshev-distributed nodes in log x
        u = np.cos(np.pi * (np.arange(nn)[::-1] + 0.5) / nn)
        s = a + (b - a) * (u + 1.0) / 2.0
    else:
        s = np.log(np.asarray(init, dtype=float))
    step = 0.25
    prev = None
    deviation = math.inf
    for it in range(maxiter):
        nodes = np.exp(s)
        xs, fs, w = _bary_interpolant(nodes, f(nodes), m, n)
        err = lambda x: f(x) - _bary_eval(xs, fs, w, x)  # noqa: E731
        edges = np.concatenate([[a], s, [b]])
        maxima = np.array([_local_max_abs(err, edges[i], edges[i + 1])[0] for i in range(nn + 1)])
        deviation = maxima.max() / maxima.min() - 1.0
        if deviation < tol:
            break
        if prev is not None and deviation > prev[0]:
            # overshoot: go back and take a shorter step
            step *= 0.5
            deviation, s, maxima = prev
        else:
            step = min(step * 1.2, 1.0)
        prev = (deviation, s, maxima)
        edges = np.concatenate([[a], s, [b]])
        lengths = np.diff(edges)
        factor = (maxima / np.exp(np.mean(np.log(maxima)))) ** (-step)
        lengths = lengths * np.clip(factor, 0.5, 2.0)
        lengths *= (b - a) / lengths.sum()
        s = a + np.cumsum(lengths)[:-1]
    else:
        raise RationalApproxError(
            f"brasil did not converge for phi={phi}, m={m}, lb={lb}: "
            f"equioscillation defect {deviation:.3e}"
        )
    zeros, poles_x = _bary_poles_zeros(xs, fs, w)
    zeros = _real_roots(zeros, "numerator", tol=1e-6)
    poles_x = _real_roots(poles_x, "denominator", tol=1e-6)
    if len(zeros) > m:
        # spurious numerator root from a vanishing leading coefficient
        zeros = zeros[np.argsort(np.abs(zeros))[:m]]
    x0 = 1.0
    scale = _bary_eval(xs, fs, w, np.array([x0]))[0] * np.prod(x0 - poles_x) / np.prod(x0 - zeros)
    return _from_factored(zeros, poles_x, scale, phi=phi, m=m, lb=lb, method="brasil", form=form,
                          info={"iterations": it + 1, "equioscillation_defect": float(deviation)})


def rational_approx(phi, m, method="chebfunLB", lb=None, form="covariance"):
    """Dispatch on ``method``; ``lb`` is ignored for ``"chebfun"`` (which uses 0)."""
    if method not in METHODS:
        raise ValueError(f"unknown rational method {method!r}; expected one of {METHODS}")
    if method == "chebfun":
        lb_used = 0.0 if phi > 0 else lb
        return chebyshev_pade_coeffs(phi, m, lb_used, form=form, method="chebfun")
    if lb is None or not lb > 0:
        raise ValueError(f"method {method!r} needs a positive lower bound")
    if method == "chebfunLB":
        return chebyshev_pade_coeffs(phi, m, lb, form=form, method="chebfunLB")
    return brasil_coeffs(phi, m, lb, form=form)
