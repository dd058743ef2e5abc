"""Exact Matérn reference quantities.

Covariance, folded (Neumann-reflected) covariance on an interval, spectral
density, parameter conversions and a self-contained modified Bessel function
of the second kind for real order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "MaternParams",
    "bessel_k",
    "matern_cov",
    "folded_matern_cov",
    "matern_spectral_density",
    "matern_tau",
    "kappa_from_range",
    "range_from_kappa",
]

# Taylor coefficients of 1/Gamma(z) (Abramowitz & Stegun 6.1.34), c[0] is the
# coefficient of z**1.
_RGAMMA_COEFFS = (
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
)

_EPS = 1e-16
_MAXIT = 10000


def kappa_from_range(rho, nu):
    """Inverse length scale from the practical correlation range."""
    return math.sqrt(8.0 * nu) / rho


def range_from_kappa(kappa, nu):
    """Practical correlation range ``sqrt(8 nu) / kappa``."""
    return math.sqrt(8.0 * nu) / kappa


def matern_tau(sigma, nu, kappa, d=1):
    """SPDE noise scaling tau giving marginal standard deviation sigma."""
    alpha = nu + d / 2.0
    log_tau2 = (
        -2.0 * math.log(sigma)
        + math.lgamma(nu)
        - math.lgamma(alpha)
        - (d / 2.0) * math.log(4.0 * math.pi)
        - 2.0 * nu * math.log(kappa)
    )
    return math.exp(0.5 * log_tau2)


def sigma_from_tau(tau, nu, kappa, d=1):
    """Marginal standard deviation implied by (tau, nu, kappa)."""
    return matern_tau(1.0, nu, kappa, d) / tau


@dataclass(frozen=True)
class MaternParams:
    """Parameters of a Matérn field.

    Parameters
    ----------
    sigma : float
        Marginal standard deviation.
    nu : float
        Smoothness.
    kappa : float
        Inverse length scale.
    d : int
        Spatial dimension.
    """

    sigma: float
    nu: float
    kappa: float
    d: int = 1

    def __post_init__(self):
        for name in ("sigma", "nu", "kappa"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")

    @classmethod
    def from_range(cls, sigma, nu, rho, d=1):
        if not rho > 0:
            raise ValueError(f"range must be positive, got {rho!r}")
        return cls(sigma=sigma, nu=nu, kappa=kappa_from_range(rho, nu), d=d)

    @classmethod
    def from_tau(cls, tau, nu, kappa, d=1):
        if not tau > 0:
            raise ValueError(f"tau must be positive, got {tau!r}")
        return cls(sigma=sigma_from_tau(tau, nu, kappa, d), nu=nu, kappa=kappa, d=d)

    @property
    def alpha(self):
        return self.nu + self.d / 2.0

    @property
    def range(self):
        return range_from_kappa(self.kappa, self.nu)

    @property
    def tau(self):
        return matern_tau(self.sigma, self.nu, self.kappa, self.d)


def _temme_gammas(mu):
    """Return (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)) for |mu| <= 1/2."""
    # 1/Gamma(1+z) = sum_j c[j] z**j
    gp = 0.0
    gm = 0.0
    for c in reversed(_RGAMMA_COEFFS):
        gp = gp * mu + c
        gm = gm * (-mu) + c
    # split into even/odd parts so gam1 has no cancellation at small mu
    odd = sum(_RGAMMA_COEFFS[j] * mu ** (j - 1) for j in range(1, len(_RGAMMA_COEFFS), 2))
    even = sum(_RGAMMA_COEFFS[j] * mu ** j for j in range(0, len(_RGAMMA_COEFFS), 2))
    return -odd, even, gp, gm


def _bessel_k_scalar(nu, x):
    """K_nu(x) for real nu and x > 0 (Temme series / Steed continued fraction)."""
    if not x > 0:
        raise ValueError(f"bessel_k requires x > 0, got {x!r}")
    nu = abs(nu)
    nl = int(nu + 0.5)
    mu = nu - nl
    mu2 = mu * mu
    xi2 = 2.0 / x
    if x < 2.0:
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = mu * d
        fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _temme_gammas(mu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, _MAXIT):
            ff = (i * ff + p + q) / (i * i - mu2)
            c *= d / i
            p /= i - mu
            q /= i + mu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        k_mu = total
        k_mu1 = total1 * xi2
    else:
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = delh = d
        q1, q2 = 0.0, 1.0
        a1 = 0.25 - mu2
        q = c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT):
            a -= 2 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1, q2 = q2, qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _EPS:
                break
        h = a1 * h
        k_mu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
        k_mu1 = k_mu * (mu + x + 0.5 - h) / x
    for i in range(1, nl + 1):
        k_mu, k_mu1 = k_mu1, (mu + i) * xi2 * k_mu1 + k_mu
    if math.isnan(k_mu):
        return math.inf
    return k_mu


_bessel_k_ufunc = np.frompyfunc(_bessel_k_scalar, 2, 1)


def bessel_k(nu, x):
    """Modified Bessel function of the second kind, K_nu(x), for real order.

    Uses Temme's series for ``x < 2`` and Steed's continued fraction
    otherwise, followed by forward recurrence in the order.  Overflow for tiny
    ``x`` yields ``inf``.

    Parameters
    ----------
    nu : float or array_like
        Order (sign is irrelevant, ``K_nu = K_{-nu}``).
    x : float or array_like
        Argument, must be strictly positive.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise ValueError("bessel_k requires x > 0")
    with np.errstate(over="ignore"):
        out = _bessel_k_ufunc(np.asarray(nu, dtype=float), x_arr)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def matern_cov(h, p: MaternParams):
    """Matérn covariance ``sigma^2 / (2^(nu-1) Gamma(nu)) (kappa h)^nu K_nu(kappa h)``."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("distances must be nonnegative")
    var = p.sigma ** 2
    out = np.full(h.shape, var, dtype=float)
    kh = p.kappa * h
    pos = kh > 0
    if np.any(pos):
        z = kh[pos]
        log_const = (1.0 - p.nu) * math.log(2.0) - math.lgamma(p.nu)
        kv = np.atleast_1d(bessel_k(p.nu, z))
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            val = var * np.exp(log_const + p.nu * np.log(z)) * kv
        # (kappa h)^nu K_nu -> 2^(nu-1) Gamma(nu) as h -> 0
        val = np.where(np.isfinite(val), val, var)
        out[pos] = np.minimum(val, var)
    return float(out) if out.ndim == 0 else out


def folded_matern_cov(s, t, p: MaternParams, L=1.0, tol=1e-14, max_terms=10_000):
    """Covariance of the Neumann-boundary Matérn field on ``[0, L]``.

    Sums reflected Matérn covariances ``r(|s - t + 2kL|) + r(|s + t + 2kL|)``
    over ``k = -K..K``, growing ``K`` until the newly added terms fall below
    ``tol * sigma^2``.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if not L > 0:
        raise ValueError("L must be positive")
    eps = 1e-12 * L
    for name, v in (("s", s), ("t", t)):
        if np.any(v < -eps) or np.any(v > L + eps):
            bad = v[(v < -eps) | (v > L + eps)].ravel()[0]
            raise ValueError(f"{name}={bad!r} lies outside [0, {L}]")
    s, t = np.broadcast_arrays(s, t)
    total = matern_cov(np.abs(s - t), p) + matern_cov(np.abs(s + t), p)
    thresh = tol * p.sigma ** 2
    for k in range(1, max_terms + 1):
        add = 0.0
        for sign in (1.0, -1.0):
            shift = 2.0 * k * L * sign
            add = add + matern_cov(np.abs(s - t + shift), p) + matern_cov(np.abs(s + t + shift), p)
        total = total + add
        if np.max(np.abs(add)) < thresh:
            break
    return float(total) if np.ndim(total) == 0 else total


def matern_spectral_density(w, p: MaternParams):
    """Spectral density ``A sigma^2 (kappa^2 + w^2)^(-alpha)`` of the 1-d Matérn process."""
    if p.d != 1:
        raise ValueError("spectral density implemented for d = 1 only")
    w = np.asarray(w, dtype=float)
    log_a = (
        -math.log(2.0 * math.pi)
        + math.lgamma(p.alpha)
        + 0.5 * math.log(4.0 * math.pi)
        + 2.0 * p.nu * math.log(p.kappa)
        - math.lgamma(p.nu)
    )
    out = p.sigma ** 2 * np.exp(log_a - p.alpha * np.log(p.kappa ** 2 + w ** 2))
    return float(out) if out.ndim == 0 else out


def spectral_constant(p: MaternParams):
    """The constant ``A`` of the 1-d spectral density."""
    return math.exp(
        -math.log(2.0 * math.pi)
        + math.lgamma(p.alpha)
        + 0.5 * math.log(4.0 * math.pi)
        + 2.0 * p.nu * math.log(p.kappa)
        - math.lgamma(p.nu)
    )
