"""Accuracy benchmarks against exact Matérn and folded-Matérn covariances.

Defaults reproduce the interval study: ``sigma = 2``, ``nu = 0.8``, practical
range ``0.15`` on ``[0, 1]``, a 501-node FEM mesh and a 101-point evaluation
grid; errors are L1 norms (sums of absolute differences) over the grid.
"""
from __future__ import annotations

import numpy as np

from .fem import assemble_fem, build_mesh, observation_matrix
from .latent import build_cov_model, build_op_model
from .markov import build_markov_rational, covariance_curve
from .matern import MaternParams, folded_matern_cov, matern_cov

__all__ = ["BENCH_PARAMS", "fem_errors", "markov_errors", "benchmark_table"]

BENCH_PARAMS = MaternParams.from_range(sigma=2.0, nu=0.8, rho=0.15)


def fem_errors(scheme, ms=(1, 2, 3, 4), params=BENCH_PARAMS, mesh_n=501, grid_n=101,
               anchor=0.5, direct=False, method=None, lb=None):
    """L1 errors of ``"fem-cov"`` or ``"fem-op"`` covariances at ``anchor`` for each ``m``."""
    grid = np.linspace(0.0, 1.0, grid_n)
    exact = folded_matern_cov(np.full(grid_n, anchor), grid, params)
    fem = assemble_fem(build_mesh(0.0, 1.0, mesh_n))
    A = observation_matrix(fem.mesh, grid)
    out = []
    for m in ms:
        if scheme == "fem-cov":
            model = build_cov_model(fem, params, m=m, method=method, lb=lb)
            curve = model.cov_at(anchor)
        elif scheme == "fem-op":
            model = build_op_model(fem, params, m=m, method=method, lb=lb)
            v = np.asarray(model.make_A([anchor]).todense()).ravel()
            curve = model.sigma_mult(v, direct=direct)
        else:
            raise ValueError(f"unknown FEM scheme {scheme!r}")
        out.append(float(np.abs(A @ curve - exact).sum()))
    return out


def markov_errors(ms=(1, 2, 3, 4), params=BENCH_PARAMS, grid_n=101, ind=0, method=None, lb=None):
    """L1 errors of the Markov approximation against the Matérn covariance."""
    grid = np.linspace(0.0, 1.0, grid_n)
    exact = matern_cov(np.abs(grid - grid[ind]), params)
    kw = {"method": method} if method else {}
    out = []
    for m in ms:
        model = build_markov_rational(params, m=m, lb=lb, **kw)
        out.append(float(np.abs(covariance_curve(model, grid, ind) - exact).sum()))
    return out


def benchmark_table(ms=(1, 2, 3, 4), include_direct=False):
    """``{row name: [error for each m]}`` for the three schemes."""
    rows = {}
    if include_direct:
        rows["fem-op-direct"] = fem_errors("fem-op", ms, direct=True)
    rows["fem-op-stable"] = fem_errors("fem-op", ms)
    rows["fem-cov"] = fem_errors("fem-cov", ms)
    rows["markov"] = markov_errors(ms)
    return rows
