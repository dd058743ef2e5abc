"""Rational approximations of fractional-order Gaussian Whittle-Matérn fields.

Modules
-------
matern
    Exact Matérn quantities and the Bessel function ``K_nu``.
rational
    Rational approximations of ``x**phi`` and their partial fractions.
fem
    Piecewise-linear finite elements on intervals.
latent
    Covariance-based and operator-based FEM approximations.
markov
    FEM-free Markov approximations on intervals.
inference
    Likelihood, maximum-likelihood fitting and kriging.
"""
__version__ = "0.1.0"

from .fem import FemMatrices, Mesh1D, assemble_L, assemble_fem, build_mesh, observation_matrix
from .inference import Dataset, FitResult, ModelTemplate, fit_lme, log_likelihood, predict_kriging
from .latent import (
    CovLatentModel,
    OpLatentModel,
    build_cov_model,
    build_generic,
    build_op_model,
    cov_at,
    operator_ops,
    sigma_mult,
    simulate,
)
from .markov import MarkovRationalModel, build_markov_rational, covariance_curve, markov_cov, spectral_density_m
from .matern import (
    MaternParams,
    bessel_k,
    folded_matern_cov,
    matern_cov,
    matern_spectral_density,
    matern_tau,
)
from .rational import (
    RationalApprox,
    RationalApproxError,
    brasil_coeffs,
    chebyshev_pade_coeffs,
    eval_rational,
    partial_fractions,
    rational_approx,
)
