"""FEM-free rational Markov approximation of stationary Matérn processes on intervals.

With ``t = 1 + w^2 / kappa^2`` the Matérn spectral density is
``A sigma^2 kappa^(-2 alpha) t^(-alpha)``.  Writing ``t^(-alpha) =
t^(-n) t^(-phi)`` (``n = floor(alpha)``) and replacing ``t^(-phi)`` by the
partial fractions ``k + sum r_i / (t - p_i)`` gives a sum of reciprocal
polynomial densities, each of which has a closed-form covariance built from
half-integer Matérn and exponential terms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .matern import MaternParams, spectral_constant
from .rational import RationalApprox, rational_approx

__all__ = [
    "MarkovRationalModel",
    "build_markov_rational",
    "markov_cov",
    "markov_component_covs",
    "covariance_curve",
    "spectral_density_m",
    "half_integer_matern_corr",
    "MARKOV_METHOD",
    "markov_lb",
]

MARKOV_METHOD = "brasil"


def markov_lb(m):
    """Default lower end of the approximation interval for ``x = 1/t``.

    The schedule ``10^(-(m+5)/2)`` reproduces the reference error table for
    the Markov scheme to four digits when combined with BRASIL.
    """
    return 10.0 ** (-(m + 5) / 2.0)


def half_integer_matern_corr(j, z):
    """Matérn correlation with ``nu = j - 1/2`` (``j >= 1``) at scaled lag ``z = kappa h``."""
    z = np.asarray(z, dtype=float)
    n = j - 1
    # rho_{n+1/2}(z) = e^{-z} n!/(2n)! sum_{i=0}^n (n+i)!/(i!(n-i)!) (2z)^{n-i}
    total = np.zeros_like(z)
    for i in range(n + 1):
        coef = math.factorial(n + i) / (math.factorial(i) * math.factorial(n - i))
        total = total + coef * (2.0 * z) ** (n - i)
    return np.exp(-z) * math.factorial(n) / math.factorial(2 * n) * total


def _matern_block(j, kappa, h):
    """``int (1 + w^2/kappa^2)^(-j) e^{iwh} dw`` for integer ``j >= 1``."""
    c = kappa * math.sqrt(math.pi) * math.exp(math.lgamma(j - 0.5) - math.lgamma(j))
    return c * half_integer_matern_corr(j, kappa * h)


def _exp_block(p, kappa, h):
    """``int (t - p)^(-1) e^{iwh} dw`` with ``t = 1 + w^2/kappa^2``."""
    kp = kappa * math.sqrt(1.0 - p)
    return math.pi * kp / (1.0 - p) * np.exp(-kp * h)


@dataclass(frozen=True, eq=False)
class MarkovRationalModel:
    """Sum of independent Markov components approximating a Matérn process.

    Component 0 has weight ``k`` and shape ``floor(alpha)``; component ``i``
    has weight ``r_i``, pole ``p_i`` and shifted rate ``kappa sqrt(1 - p_i)``.
    """

    params: MaternParams
    m: int
    rational: RationalApprox | None

    @property
    def alpha(self):
        return self.params.alpha

    @property
    def n_int(self):
        return int(math.floor(self.alpha))

    @property
    def constant(self):
        p = self.params
        return spectral_constant(p) * p.sigma ** 2 * p.kappa ** (-2.0 * p.alpha)

    @property
    def k(self):
        return 1.0 if self.rational is None else self.rational.k

    @property
    def residues(self):
        return np.zeros(0) if self.rational is None else self.rational.residues

    @property
    def poles(self):
        return np.zeros(0) if self.rational is None else self.rational.poles

    @property
    def rates(self):
        return self.params.kappa * np.sqrt(1.0 - self.poles)

    def components(self):
        out = [{"weight": self.k, "shape": self.n_int, "rate": self.params.kappa}]
        for r, p, kp in zip(self.residues, self.poles, self.rates):
            out.append({"weight": float(r), "pole": float(p), "rate": float(kp), "shape": self.n_int})
        return out

    def covariance(self, h):
        return markov_cov(self, h)

    def to_json(self):
        p = self.params
        return json.dumps({
            "params": {"sigma": p.sigma, "nu": p.nu, "kappa": p.kappa, "d": p.d},
            "m": self.m,
            "constant": self.constant,
            "components": self.components(),
        }, indent=2)


def build_markov_rational(params: MaternParams, m=1, method=MARKOV_METHOD, lb=None):
    """Build the Markov rational approximation; exact when ``alpha`` is an integer.

    Parameters
    ----------
    params : MaternParams
        Field parameters, ``d`` must be 1.
    m : int
        Rational order.
    method : str
        Coefficient method, see :data:`fracmatern.rational.METHODS`.
    lb : float, optional
        Lower end of the interval for ``x = 1/t``; defaults to
        :func:`markov_lb` (ignored by ``chebfun``).
    """
    if params.d != 1:
        raise ValueError("Markov rational models are defined on intervals (d = 1)")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    phi = params.alpha - math.floor(params.alpha)
    if phi < 1e-12:
        return MarkovRationalModel(params, int(m), None)
    if lb is None:
        lb = markov_lb(m)
    ra = rational_approx(phi, m, method=method, lb=lb, form="covariance")
    return MarkovRationalModel(params, int(m), ra)


def markov_component_covs(model: MarkovRationalModel, h):
    """Covariance contribution of each component, shape ``(m + 1,) + h.shape``."""
    h = np.abs(np.asarray(h, dtype=float))
    kappa = model.params.kappa
    n = model.n_int
    const = model.constant
    out = []
    if n >= 1:
        out.append(const * model.k * _matern_block(n, kappa, h))
    else:
        out.append(np.zeros_like(h))
    for r, p in zip(model.residues, model.poles):
        # 1/(t^n (t-p)) = 1/(p^n (t-p)) - sum_{j=1}^n p^(j-n-1) / t^j
        term = _exp_block(p, kappa, h) / p ** n
        for j in range(1, n + 1):
            term = term - p ** (j - n - 1) * _matern_block(j, kappa, h)
        out.append(const * r * term)
    out = np.array(out)
    if n == 0:
        # white-noise component: point mass at lag 0 restoring the Matérn variance
        at0 = h == 0
        out[0] = np.where(at0, model.params.sigma ** 2 - out[1:].sum(axis=0), 0.0)
    return out


def markov_cov(model: MarkovRationalModel, h):
    """Covariance of the Markov rational approximation at lag(s) ``h``."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("lags must be nonnegative")
    out = markov_component_covs(model, h).sum(axis=0)
    return float(out) if out.ndim == 0 else out


def covariance_curve(model: MarkovRationalModel, locs, ind=0):
    """Covariance between ``locs[ind]`` and every location in ``locs``."""
    locs = np.asarray(locs, dtype=float)
    return markov_cov(model, np.abs(locs - locs[ind]))


def spectral_density_m(model: MarkovRationalModel, w):
    """Spectral density of the rational approximation."""
    w = np.asarray(w, dtype=float)
    t = 1.0 + (w / model.params.kappa) ** 2
    n = model.n_int
    inner = model.k + sum(r / (t - p) for r, p in zip(model.residues, model.poles))
    out = model.constant * inner / t ** n
    return float(out) if out.ndim == 0 else out
