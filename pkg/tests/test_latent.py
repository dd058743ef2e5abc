import math

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from fracmatern.fem import assemble_fem, assemble_L, build_mesh
from fracmatern.latent import (
    build_cov_model,
    build_generic,
    build_op_model,
    cov_at,
    default_rational,
    gershgorin_lb,
    operator_ops,
    sigma_mult,
    simulate,
)
from fracmatern.matern import MaternParams, folded_matern_cov

ALPHAS = (0.9, 1.3, 1.7, 2.5)
FEM = assemble_fem(build_mesh(0, 1, 50))


def _params(alpha):
    return MaternParams.from_range(1.5, alpha - 0.5, 0.3)


def _eigen(model):
    """Generalized eigenpairs of (L_s, C) with C-orthonormal vectors."""
    lam, V = la.eigh(model.L_s.toarray(), np.diag(model.c))
    return lam, V


def _rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


def _cov_oracle(model):
    lam, V = _eigen(model)
    ra = model.rational
    g = lam ** -model.n_int * (ra(1 / lam) if ra is not None else 1.0)
    S = model.scale_factor ** -model.alpha * (V * g) @ V.T
    return S / np.outer(model.tau, model.tau)


def _op_oracle(model):
    lam, V = _eigen(model)
    ra = model.rational
    g = model.scale_factor ** -model.beta * lam ** -model.m_beta * (ra(1 / lam) if ra is not None else 1.0)
    S = (V * g ** 2) @ V.T
    return S / np.outer(model.tau, model.tau)


@pytest.mark.parametrize("alpha", ALPHAS)
@pytest.mark.parametrize("m", [1, 2, 3])
def test_cov_scheme_dense_oracles(alpha, m):
    model = build_cov_model(FEM, _params(alpha), m=m)
    Qinv = np.linalg.inv(model.prior_precision().toarray())
    n = model.n
    block_sum = sum(Qinv[i * n:(i + 1) * n, i * n:(i + 1) * n] for i in range(model.n_blocks))
    assert _rel(block_sum, model.sigma_formula()) < 1e-8
    assert _rel(model.covariance_dense(), _cov_oracle(model)) < 1e-8
    assert _rel(model.sigma_formula(), _cov_oracle(model)) < 1e-8


@pytest.mark.parametrize("alpha", [1.0, 2.0, 3.0, 4.0])
def test_integer_alpha_exact_fem_covariance(alpha):
    # (L^{-1} C)^(alpha - 1) L^{-1} / tau^2
    p = _params(alpha)
    L = assemble_L(FEM, p.kappa).toarray()
    S = np.linalg.inv(L)
    for _ in range(int(alpha) - 1):
        S = np.linalg.solve(L, np.diag(FEM.c_diag) @ S)
    exact = S / p.tau ** 2
    for builder in (build_cov_model, build_op_model):
        # the operator scheme is exact only for integer beta = alpha / 2
        if builder is build_op_model and alpha % 2:
            continue
        model = builder(FEM, p, m=2)
        assert _rel(model.covariance_dense(), exact) < 1e-8


@pytest.mark.parametrize("alpha", ALPHAS)
@pytest.mark.parametrize("m", [1, 2, 3])
def test_op_scheme_dense_oracle(alpha, m):
    model = build_op_model(FEM, _params(alpha), m=m)
    assert _rel(model.covariance_dense(), _op_oracle(model)) < 1e-8
    # the assembled P_r, Q route (small mesh, so it is well conditioned here)
    if model.l_power >= 0:
        Pr = model.Pr_matrix().toarray()
        Q = model.Q_matrix().toarray()
        Ti = np.diag(1 / model.tau)
        S = Ti @ Pr @ np.linalg.solve(Q, Pr.T) @ Ti
        assert _rel(S, _op_oracle(model)) < 1e-6


@pytest.mark.parametrize("alpha", [1.3, 2.5])
def test_schemes_approach_fractional_covariance(alpha):
    p = _params(alpha)
    cov = build_cov_model(FEM, p, m=4)
    op = build_op_model(FEM, p, m=4)
    lam, V = _eigen(cov)
    exact = (V * (cov.scale_factor * lam) ** -alpha) @ V.T / p.tau ** 2
    assert _rel(cov.covariance_dense(), exact) < 1e-2
    assert _rel(op.covariance_dense(), exact) < 5e-2


@pytest.mark.parametrize("alpha", [1.3, 2.5])
def test_operator_ops_roundtrips(alpha):
    model = build_op_model(FEM, _params(alpha), m=3)
    ops = operator_ops(model)
    v = np.random.default_rng(0).normal(size=model.n)
    np.testing.assert_allclose(ops["Pr_solve"](ops["Pr_mult"](v)), v, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(ops["Pl_solve"](ops["Pl_mult"](v)), v, rtol=1e-8, atol=1e-8 * np.abs(v).max())
    np.testing.assert_allclose(ops["Q_solve"](ops["Q_mult"](v)), v, rtol=1e-6, atol=1e-6 * np.abs(v).max())
    np.testing.assert_allclose(ops["Pr_mult"](v), model.Pr_matrix() @ v, rtol=1e-12)
    np.testing.assert_allclose(ops["Pl_mult"](v), model.Pl_matrix() @ v, rtol=1e-10)
    Qv = model.Q_matrix() @ v
    np.testing.assert_allclose(ops["Q_mult"](v), Qv, rtol=1e-9, atol=1e-9 * np.abs(Qv).max())
    with pytest.raises(TypeError):
        operator_ops(build_cov_model(FEM, _params(alpha)))


def test_stable_matches_direct_for_small_m():
    fem = assemble_fem(build_mesh(0, 1, 201))
    model = build_op_model(fem, MaternParams.from_range(2.0, 0.8, 0.15), m=1)
    v = np.asarray(model.make_A([0.5]).todense()).ravel()
    a, b = model.sigma_mult(v), model.sigma_mult(v, direct=True)
    assert _rel(a, b) < 1e-8


def test_sigma_mult_linear_and_symmetric():
    model = build_cov_model(FEM, _params(1.7), m=2)
    rng = np.random.default_rng(5)
    v, w = rng.normal(size=(2, model.n))
    np.testing.assert_allclose(sigma_mult(model, 2 * v + 3 * w), 2 * sigma_mult(model, v) + 3 * sigma_mult(model, w),
                               rtol=1e-10, atol=1e-14)
    for mdl in (model, build_op_model(FEM, _params(1.7), m=2)):
        assert w @ sigma_mult(mdl, v) == pytest.approx(v @ sigma_mult(mdl, w), rel=1e-10)


def _nonstat_fields(nodes):
    return 10 * (1 + 2 * nodes ** 2), 0.1 * (1 - 0.7 * nodes ** 2)


@pytest.mark.parametrize("type", ["covariance", "operator"])
def test_generic_equivalence_nonstationary(type):
    fem = assemble_fem(build_mesh(0, 1, 501))
    kappa, tau = _nonstat_fields(fem.mesh.nodes)
    builder = build_cov_model if type == "covariance" else build_op_model
    spec = builder(fem, m=1, kappa=kappa, tau=tau, nu=0.8)
    L = assemble_L(fem, kappa)
    gen = build_generic(fem.C, L, beta=(0.8 + 0.5) / 2, tau=tau, scale_factor=float(kappa.min() ** 2),
                        m=1, type=type, mesh=fem.mesh)
    for s in (0.1, 0.5, 0.9):
        assert np.max(np.abs(cov_at(spec, s) - cov_at(gen, s))) < 1e-12


def test_diagonal_operator():
    lam = np.linspace(1.0, 50.0, 12)
    model = build_generic(sp.identity(12), sp.diags(lam), beta=0.65, tau=1.0, scale_factor=1.0, m=3)
    S = model.covariance_dense()
    np.testing.assert_allclose(S, np.diag(np.diag(S)), atol=1e-14)
    approx = lam ** -model.n_int * model.rational(1 / lam)
    np.testing.assert_allclose(np.diag(S), approx, rtol=1e-12)
    err = np.abs(np.diag(S) - lam ** -1.3)
    assert np.all(err <= lam ** -model.n_int * 1.01 * _sup(model.rational))


def _sup(ra):
    x = np.geomspace(max(ra.lb, 1e-6), 1, 20_000)
    return np.max(np.abs(x ** ra.phi - ra(x)))


def test_stationary_covariance_close_to_folded_matern():
    fem = assemble_fem(build_mesh(0, 1, 501))
    p = MaternParams.from_range(2.0, 0.8, 0.15)
    model = build_cov_model(fem, p, m=3)
    grid = np.linspace(0, 1, 101)
    exact = folded_matern_cov(np.full(101, 0.5), grid, p)
    approx = model.make_A(grid) @ model.cov_at(0.5)
    assert np.max(np.abs(approx - exact)) < 0.01 * p.sigma ** 2


@pytest.mark.parametrize("builder", [build_cov_model, build_op_model])
def test_simulation_monte_carlo(builder):
    fem = assemble_fem(build_mesh(0, 1, 60))
    model = builder(fem, MaternParams.from_range(1.0, 0.8, 0.3), m=2)
    N = 10_000
    U = simulate(model, N, seed=11)
    idx = np.array([0, 10, 30, 45, 59])
    S = model.covariance_dense()[np.ix_(idx, idx)]
    emp = np.cov(U[idx], bias=True)
    se = np.sqrt((S ** 2 + np.outer(np.diag(S), np.diag(S))) / N)
    assert np.all(np.abs(emp - S) < 4 * se)
    np.testing.assert_array_equal(simulate(model, 3, seed=4), simulate(model, 3, seed=4))


def test_default_rational_and_gershgorin():
    assert default_rational("covariance", 2) == ("chebfun", 0.0)
    method, lb = default_rational("operator", 3)
    assert method == "chebfunLB" and lb == pytest.approx(1e-4)
    L = assemble_L(FEM, 4.0) / 16.0
    lb = gershgorin_lb(FEM.c_diag, L)
    lam = la.eigh(L.toarray(), np.diag(FEM.c_diag), eigvals_only=True)
    assert lb <= 1 / lam.max() * (1 + 1e-12)
    model = build_cov_model(FEM, _params(1.3), m=2, method="chebfunLB", lb="auto")
    assert model.lb == pytest.approx(gershgorin_lb(model.c, model.L_s))


def test_validation():
    p = _params(1.3)
    with pytest.raises(ValueError, match="alpha"):
        build_generic(FEM.C, assemble_L(FEM, 2.0), beta=0.2, tau=1.0, scale_factor=4.0)
    with pytest.raises(ValueError, match="dimension"):
        build_generic(sp.identity(4), assemble_L(FEM, 2.0), beta=0.6, tau=1.0, scale_factor=4.0)
    with pytest.raises(ValueError, match="symmetric"):
        build_generic(FEM.C, assemble_L(FEM, 2.0) + sp.eye(50, k=1), beta=0.6, tau=1.0, scale_factor=4.0)
    with pytest.raises(ValueError):
        build_generic(FEM.C, assemble_L(FEM, 2.0), beta=0.6, tau=1.0, scale_factor=4.0, type="other")
    with pytest.raises(ValueError):
        build_cov_model(FEM, p, m=0)
    with pytest.raises(ValueError, match="tau"):
        build_cov_model(FEM, m=1, kappa=3.0, tau=-1.0, nu=0.8)
    with pytest.raises(ValueError):
        build_cov_model(FEM, m=1, kappa=3.0)
    gen = build_generic(FEM.C, assemble_L(FEM, 2.0), beta=0.6, tau=1.0, scale_factor=4.0)
    with pytest.raises(ValueError, match="mesh"):
        gen.make_A([0.5])
    assert math.isfinite(gen.covariance_dense().sum())
