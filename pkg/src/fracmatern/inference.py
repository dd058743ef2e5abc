"""Gaussian likelihood, maximum-likelihood fitting and kriging.

The observation model is ``y = X b + u(s) + eps`` with ``eps ~ N(0, sigma_e^2 I)``
and ``u`` one of the three approximations (covariance-based FEM,
operator-based FEM or the FEM-free Markov model).  Replicates are
independent realisations of ``u`` sharing the parameters.  Fixed effects are
profiled out by generalized least squares.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.optimize as opt
import scipy.sparse as sp

from .fem import Mesh1D, assemble_fem, observation_matrix
from .latent import OpLatentModel, build_cov_model, build_op_model
from .markov import build_markov_rational, markov_cov
from .matern import MaternParams, kappa_from_range, matern_tau
from .sparse import BandedQR, CholeskyError, SparseCholesky

__all__ = [
    "Dataset",
    "ModelTemplate",
    "FitResult",
    "log_likelihood",
    "fit_lme",
    "predict_kriging",
    "SCHEMES",
    "LOGLIK_PENALTY",
]

SCHEMES = ("fem-cov", "fem-op", "markov")
# returned instead of a likelihood when a factorization fails
LOGLIK_PENALTY = -1e100
BASE_PARAMS = ("sigma", "range", "nu", "sigma_e")


def _n_threads():
    val = int(os.environ.get("FRACMATERN_THREADS", "0") or 0)
    return val if val > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``y`` at ``locs`` with optional design ``X`` and replicate ids."""

    y: np.ndarray
    locs: np.ndarray
    X: np.ndarray | None = None
    repl: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        locs = np.asarray(self.locs, dtype=float).ravel()
        if y.size == 0:
            raise ValueError("dataset is empty")
        if locs.size != y.size:
            raise ValueError(f"y has {y.size} rows but locs has {locs.size}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(locs))):
            raise ValueError("y and locs must be finite")
        X = self.X
        if X is not None:
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            if X.shape[0] != y.size:
                raise ValueError(f"X has {X.shape[0]} rows but y has {y.size}")
            if X.shape[1] == 0:
                X = None
        repl = np.zeros(y.size, dtype=int) if self.repl is None else np.asarray(self.repl).ravel()
        if repl.size != y.size:
            raise ValueError(f"repl has {repl.size} rows but y has {y.size}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "locs", locs)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "repl", repl)

    @property
    def n(self):
        return self.y.size

    @property
    def p(self):
        return 0 if self.X is None else self.X.shape[1]

    def groups(self):
        """Replicates grouped by identical location vectors: ``[(locs, [row_idx, ...]), ...]``."""
        out = {}
        for r in np.unique(self.repl):
            idx = np.flatnonzero(self.repl == r)
            key = self.locs[idx].tobytes()
            out.setdefault(key, (self.locs[idx], []))[1].append(idx)
        return list(out.values())


@dataclass(frozen=True, eq=False)
class ModelTemplate:
    """Which approximation to fit and how.

    Parameters
    ----------
    scheme : {"fem-cov", "fem-op", "markov"}
    m : int
        Rational order.
    mesh : Mesh1D, optional
        Required for the FEM schemes.
    method, lb :
        Rational method and interval; ``None`` uses the scheme default.
    nu_upper : float
        Upper bound for ``nu`` in the optimizer transform.
    B_kappa, B_tau : ndarray, optional
        Nodal covariates (``n_h x q``) for ``log kappa(s) = log kappa + B_kappa theta``
        and ``log tau(s) = log tau + B_tau theta`` (FEM schemes only).
    """

    scheme: str
    m: int = 1
    mesh: Mesh1D | None = None
    method: str | None = None
    lb: float | str | None = None
    nu_upper: float = 2.0
    B_kappa: np.ndarray | None = None
    B_tau: np.ndarray | None = None
    fem: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if not self.nu_upper > 0:
            raise ValueError("nu_upper must be positive")
        if self.scheme != "markov":
            if self.mesh is None:
                raise ValueError(f"scheme {self.scheme!r} needs a mesh")
            if self.fem is None:
                object.__setattr__(self, "fem", assemble_fem(self.mesh))
        for name in ("B_kappa", "B_tau"):
            B = getattr(self, name)
            if B is None:
                continue
            if self.scheme == "markov":
                raise ValueError("covariates for kappa/tau need a FEM scheme")
            B = np.asarray(B, dtype=float)
            B = B[:, None] if B.ndim == 1 else B
            if B.shape[0] != self.mesh.n:
                raise ValueError(f"{name} needs one row per mesh node")
            object.__setattr__(self, name, B)

    @property
    def param_names(self):
        names = list(BASE_PARAMS)
        for name, B in (("theta_kappa", self.B_kappa), ("theta_tau", self.B_tau)):
            if B is not None:
                names += [f"{name}_{j + 1}" for j in range(B.shape[1])]
        return names

    # transforms -------------------------------------------------------------
    def to_theta(self, values):
        out = []
        for name in self.param_names:
            v = float(values[name])
            if name == "nu":
                if not 0 < v < self.nu_upper:
                    raise ValueError(f"nu={v} must lie in (0, {self.nu_upper})")
                q = v / self.nu_upper
                out.append(math.log(q / (1.0 - q)))
            elif name in BASE_PARAMS:
                if not v > 0:
                    raise ValueError(f"{name} must be positive, got {v}")
                out.append(math.log(v))
            else:
                out.append(v)
        return np.array(out)

    def from_theta(self, theta):
        vals = {}
        for name, t in zip(self.param_names, theta):
            if name == "nu":
                vals[name] = self.nu_upper / (1.0 + math.exp(-t))
            elif name in BASE_PARAMS:
                vals[name] = math.exp(t)
            else:
                vals[name] = float(t)
        return vals

    def natural_jacobian(self, theta):
        """Derivatives of natural parameters w.r.t. transformed ones (diagonal)."""
        vals = self.from_theta(theta)
        d = []
        for name in self.param_names:
            if name == "nu":
                q = vals["nu"] / self.nu_upper
                d.append(self.nu_upper * q * (1.0 - q))
            elif name in BASE_PARAMS:
                d.append(vals[name])
            else:
                d.append(1.0)
        return np.array(d)

    # model construction -----------------------------------------------------
    def build(self, values):
        """Latent (FEM) or Markov model for natural parameter ``values``."""
        sigma, rng, nu = values["sigma"], values["range"], values["nu"]
        if self.scheme == "markov":
            return build_markov_rational(MaternParams.from_range(sigma, nu, rng), m=self.m,
                                         **({"method": self.method} if self.method else {}),
                                         lb=None if self.lb in (None, "auto") else self.lb)
        kappa = kappa_from_range(rng, nu)
        tau = matern_tau(sigma, nu, kappa, 1)
        n = self.mesh.n
        log_k = np.full(n, math.log(kappa))
        log_t = np.full(n, math.log(tau))
        if self.B_kappa is not None:
            th = np.array([values[f"theta_kappa_{j + 1}"] for j in range(self.B_kappa.shape[1])])
            log_k = log_k + self.B_kappa @ th
        if self.B_tau is not None:
            th = np.array([values[f"theta_tau_{j + 1}"] for j in range(self.B_tau.shape[1])])
            log_t = log_t + self.B_tau @ th
        builder = build_cov_model if self.scheme == "fem-cov" else build_op_model
        return builder(self.fem, m=self.m, method=self.method, lb=self.lb,
                       kappa=np.exp(log_k), tau=np.exp(log_t), nu=nu, d=1)


# ---------------------------------------------------------------------------
# likelihood
# ---------------------------------------------------------------------------

def _posterior_factor(model, Abar, s2, with_prior=False):
    """Factorization of ``Q_prior + Abar^T Abar / s2`` (and optionally of ``Q_prior``).

    The operator-based precision ``P_l^T C^{-1} P_l`` is badly conditioned, so
    it is handled through the QR factorization of its stacked square root.
    """
    if isinstance(model, OpLatentModel):
        B = model.precision_sqrt()
        post = BandedQR(sp.vstack([B, Abar / math.sqrt(s2)]), name="posterior precision")
        prior = BandedQR(B, name="prior precision") if with_prior else None
    else:
        Qp = model.prior_precision()
        post = SparseCholesky(Qp + (Abar.T @ Abar) / s2, name="posterior precision")
        prior = SparseCholesky(Qp, name="prior precision") if with_prior else None
    return (post, prior) if with_prior else post


class _GroupSolver:
    """``Sigma_y^{-1}`` and ``log det Sigma_y`` for one set of observation locations."""

    def __init__(self, template, model, locs, sigma_e):
        self.s2 = sigma_e ** 2
        self.n = locs.size
        if template.scheme == "markov":
            S = markov_cov(model, np.abs(locs[:, None] - locs[None, :]))
            S = S + self.s2 * np.eye(self.n)
            try:
                self.chol = la.cho_factor(S, lower=True)
            except la.LinAlgError:
                raise CholeskyError("observation covariance is not positive definite") from None
            self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol[0]))))
            self.sparse = False
            return
        A = observation_matrix(template.mesh, locs)
        self.Abar = model.latent_obs_matrix(A)
        self.post, prior = _posterior_factor(model, self.Abar, self.s2, with_prior=True)
        # matrix determinant lemma
        self.logdet = self.n * math.log(self.s2) + self.post.logdet() - prior.logdet()
        self.sparse = True

    def solve(self, Z):
        if not self.sparse:
            return la.cho_solve(self.chol, Z)
        W = self.post.solve(self.Abar.T @ Z)
        return Z / self.s2 - (self.Abar @ W) / self.s2 ** 2


def _loglik_details(template: ModelTemplate, data: Dataset, values):
    """Profile log-likelihood, GLS coefficients and their covariance."""
    model = template.build(values)
    sigma_e = values["sigma_e"]
    p = data.p
    XtSX = np.zeros((p, p))
    XtSy = np.zeros(p)
    pieces = []
    logdet = 0.0
    for locs, idx_list in template_groups(data):
        solver = _GroupSolver(template, model, locs, sigma_e)
        Y = np.column_stack([data.y[idx] for idx in idx_list])
        SY = solver.solve(Y)
        logdet += solver.logdet * len(idx_list)
        SX = []
        for j, idx in enumerate(idx_list):
            if p:
                X = data.X[idx]
                SXj = solver.solve(X)
                XtSX += X.T @ SXj
                XtSy += X.T @ SY[:, j]
                SX.append(SXj)
        pieces.append((Y, SY, SX, idx_list))
    if p:
        beta = np.linalg.solve(XtSX, XtSy)
        beta_cov = np.linalg.inv(XtSX)
    else:
        beta = np.zeros(0)
        beta_cov = np.zeros((0, 0))
    quad = 0.0
    for Y, SY, SX, idx_list in pieces:
        for j, idx in enumerate(idx_list):
            y = Y[:, j]
            if p:
                r = y - data.X[idx] @ beta
                Sr = SY[:, j] - SX[j] @ beta
            else:
                r, Sr = y, SY[:, j]
            quad += r @ Sr
    ll = -0.5 * (data.n * math.log(2.0 * math.pi) + logdet + quad)
    return ll, beta, beta_cov, model


def template_groups(data: Dataset):
    return data.groups()


def log_likelihood(template: ModelTemplate, data: Dataset, theta, return_flag=False):
    """Profile log-likelihood at transformed parameters ``theta``.

    A failed factorization returns :data:`LOGLIK_PENALTY` (and flag ``False``
    when ``return_flag`` is set) instead of raising.
    """
    values = template.from_theta(np.asarray(theta, dtype=float))
    try:
        ll = _loglik_details(template, data, values)[0]
        ok = bool(np.isfinite(ll))
    except (CholeskyError, np.linalg.LinAlgError, ValueError, FloatingPointError, RuntimeError):
        ll, ok = LOGLIK_PENALTY, False
    if not ok:
        ll = LOGLIK_PENALTY
    return (ll, ok) if return_flag else ll


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FitResult:
    """Maximum-likelihood estimates.

    ``estimates`` holds natural-scale values (including derived ``kappa`` and
    ``tau`` and the fixed-effect coefficients ``beta``); ``std_errors`` are
    delta-method standard errors on the same scale.
    """

    template: ModelTemplate
    estimates: dict
    std_errors: dict
    loglik: float
    theta: np.ndarray
    free: tuple
    fixed: dict
    cov_theta: np.ndarray
    converged: bool
    n_iter: int
    message: str
    hessian_clamped: bool

    def params(self):
        return {k: self.estimates[k] for k in self.template.param_names}

    def to_dict(self):
        est = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.estimates.items()}
        se = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.std_errors.items()}
        return {
            "scheme": self.template.scheme,
            "m": self.template.m,
            "method": self.template.method,
            "lb": self.template.lb,
            "nu_upper": self.template.nu_upper,
            "estimates": est,
            "std_errors": se,
            "fixed": dict(self.fixed),
            "loglik": self.loglik,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "message": self.message,
            "hessian_clamped": self.hessian_clamped,
        }


def _default_start(template, data):
    sd = float(np.std(data.y)) or 1.0
    span = float(np.ptp(data.locs)) or 1.0
    start = {"sigma": sd, "range": 0.2 * span, "nu": min(1.0, 0.5 * template.nu_upper), "sigma_e": 0.1 * sd}
    for name in template.param_names:
        start.setdefault(name, 0.0)
    return start


def _hessian(f, x, step, pool=None):
    n = x.size
    pts = []
    for i in range(n):
        for j in range(i, n):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                if i == j and si != sj:
                    continue
                z = x.copy()
                z[i] += si * step
                z[j] += sj * step
                pts.append(z)
    vals = list(pool.map(f, pts)) if pool else [f(z) for z in pts]
    f0 = f(x)
    H = np.zeros((n, n))
    it = iter(vals)
    for i in range(n):
        for j in range(i, n):
            if i == j:
                fpp, fmm = next(it), next(it)
                H[i, i] = (fpp - 2.0 * f0 + fmm) / (4.0 * step ** 2)
            else:
                fpp, fpm, fmp, fmm = next(it), next(it), next(it), next(it)
                H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * step ** 2)
    return H


def fit_lme(template: ModelTemplate, data: Dataset, fixed=None, start=None, parallel=False,
            maxiter=500, hessian_step=1e-4):
    """Maximum-likelihood fit.

    Parameters
    ----------
    template : ModelTemplate
    data : Dataset
    fixed : dict, optional
        Natural-scale values of parameters held fixed (e.g. ``{"nu": 0.8}``).
    start : dict, optional
        Natural-scale initial values for the free parameters.
    parallel : bool
        Evaluate finite-difference stencils concurrently (thread count capped
        by ``FRACMATERN_THREADS``).

    Returns
    -------
    FitResult
    """
    fixed = dict(fixed or {})
    names = template.param_names
    unknown = set(fixed) - set(names)
    if unknown:
        raise ValueError(f"unknown fixed parameters: {sorted(unknown)}")
    init = _default_start(template, data)
    init.update(start or {})
    init.update(fixed)
    theta_all = template.to_theta(init)
    free = [i for i, n in enumerate(names) if n not in fixed]
    if not free:
        raise ValueError("all parameters are fixed")
    scale = 1.0 / data.n

    def full(tf):
        th = theta_all.copy()
        th[free] = tf
        return th

    def f(tf):
        return -scale * log_likelihood(template, data, full(tf))

    pool = ThreadPoolExecutor(max_workers=_n_threads()) if parallel else None

    def grad(tf):
        pts = []
        hs = 1e-6 * np.maximum(1.0, np.abs(tf))
        for i in range(tf.size):
            for sgn in (1.0, -1.0):
                z = tf.copy()
                z[i] += sgn * hs[i]
                pts.append(z)
        vals = list(pool.map(f, pts)) if pool else [f(z) for z in pts]
        return np.array([(vals[2 * i] - vals[2 * i + 1]) / (2.0 * hs[i]) for i in range(tf.size)])

    try:
        res = opt.minimize(f, theta_all[free], jac=grad, method="BFGS",
                           options={"maxiter": maxiter, "gtol": 1e-6})
        tf = res.x
        H = _hessian(f, tf, hessian_step, pool) / scale
    finally:
        if pool:
            pool.shutdown()
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    clamped = bool(np.any(w <= 0))
    w = np.maximum(w, 1e-10 * max(1.0, np.max(np.abs(w))))
    cov = (V / w) @ V.T
    cov = 0.5 * (cov + cov.T)
    theta = full(tf)
    values = template.from_theta(theta)
    ll, beta, beta_cov, _ = _loglik_details(template, data, values)
    jac = template.natural_jacobian(theta)[free]
    se_free = np.sqrt(np.diag(cov)) * np.abs(jac)
    std_errors = {names[i]: float(s) for i, s in zip(free, se_free)}
    for n in fixed:
        std_errors[n] = 0.0
    estimates = dict(values)
    estimates["kappa"] = kappa_from_range(values["range"], values["nu"])
    estimates["tau"] = matern_tau(values["sigma"], values["nu"], estimates["kappa"], 1)
    estimates["beta"] = beta
    std_errors["beta"] = np.sqrt(np.diag(beta_cov))
    return FitResult(
        template=template, estimates=estimates, std_errors=std_errors, loglik=float(ll),
        theta=theta, free=tuple(names[i] for i in free), fixed=fixed, cov_theta=cov,
        converged=bool(res.success), n_iter=int(res.nit), message=str(res.message),
        hessian_clamped=clamped,
    )


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def predict_kriging(fit_or_template, data: Dataset, new_locs, values=None, beta=None,
                    X_new=None, repl=None):
    """Posterior mean and standard deviation of ``X b + u`` at ``new_locs``.

    Parameters
    ----------
    fit_or_template : FitResult or ModelTemplate
        With a template, natural-scale ``values`` (and ``beta`` when the data
        has covariates; otherwise it is estimated by GLS) must be given.
    data : Dataset
    new_locs : array_like
    X_new : ndarray, optional
        Covariates at the new locations (required when ``data.X`` is set).
    repl : optional
        Replicate to condition on; defaults to the only replicate.

    Returns
    -------
    dict with ``"mean"`` and ``"sd"`` arrays.
    """
    if isinstance(fit_or_template, FitResult):
        template = fit_or_template.template
        values = fit_or_template.params()
        beta = fit_or_template.estimates["beta"] if beta is None else beta
    else:
        template = fit_or_template
        if values is None:
            raise ValueError("parameter values are required with a template")
    new_locs = np.atleast_1d(np.asarray(new_locs, dtype=float))
    ids = np.unique(data.repl)
    if repl is None:
        if ids.size != 1:
            raise ValueError("data has several replicates; choose one with repl=")
        repl = ids[0]
    rows = np.flatnonzero(data.repl == repl)
    if rows.size == 0:
        raise ValueError(f"replicate {repl!r} not found")
    if data.p and beta is None:
        beta = _loglik_details(template, data, values)[1]
    if data.p and X_new is None:
        raise ValueError("X_new is required when the data has covariates")
    y = data.y[rows]
    locs = data.locs[rows]
    r = y - (data.X[rows] @ beta if data.p else 0.0)
    fixed_part = np.asarray(X_new, dtype=float).reshape(new_locs.size, -1) @ beta if data.p else 0.0
    model = template.build(values)
    s2 = values["sigma_e"] ** 2
    if template.scheme == "markov":
        S = markov_cov(model, np.abs(locs[:, None] - locs[None, :])) + s2 * np.eye(locs.size)
        Sx = markov_cov(model, np.abs(new_locs[:, None] - locs[None, :]))
        var0 = markov_cov(model, 0.0)
        cf = la.cho_factor(S, lower=True)
        mean = Sx @ la.cho_solve(cf, r)
        var = var0 - np.einsum("ij,ji->i", Sx, la.cho_solve(cf, Sx.T))
    else:
        A = observation_matrix(template.mesh, locs)
        Abar = model.latent_obs_matrix(A)
        Anew = model.latent_obs_matrix(observation_matrix(template.mesh, new_locs))
        post = _posterior_factor(model, Abar, s2)
        mu = post.solve(Abar.T @ r) / s2
        mean = Anew @ mu
        # one solve per prediction location
        W = post.solve(sp.csc_matrix(Anew.T).toarray())
        var = np.einsum("ij,ji->i", Anew.toarray(), W)
    return {"mean": mean + fixed_part, "sd": np.sqrt(np.maximum(var, 0.0))}
