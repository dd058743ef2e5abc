import numpy as np
import pytest
import scipy.sparse as sp

from fracmatern.sparse import BandedQR, CholeskyError, cholesky


def _spd(n, seed, dense=False):
    rng = np.random.default_rng(seed)
    if dense:
        B = rng.normal(size=(n, n))
        return sp.csr_matrix(B @ B.T + n * np.eye(n))
    main = 4 + rng.uniform(size=n)
    off = -rng.uniform(size=n - 1)
    A = sp.diags([off, main, off], [-1, 0, 1]).tolil()
    # a scrambled ordering so that RCM has work to do
    perm = rng.permutation(n)
    return sp.csr_matrix(A.tocsr()[perm][:, perm])


@pytest.mark.parametrize("dense", [False, True])
def test_solve_and_logdet(dense):
    A = _spd(80, 0, dense)
    f = cholesky(A)
    assert f.banded != dense
    Ad = A.toarray()
    b = np.random.default_rng(1).normal(size=(80, 3))
    np.testing.assert_allclose(f.solve(b), np.linalg.solve(Ad, b), rtol=1e-10, atol=1e-12)
    assert f.logdet() == pytest.approx(np.linalg.slogdet(Ad)[1], rel=1e-12)


def test_solve_R_covariance():
    A = _spd(30, 2)
    f = cholesky(A)
    # columns P^T R^{-1} e_i give W with W W^T = A^{-1}
    W = f.solve_R(np.eye(30))
    np.testing.assert_allclose(W @ W.T, np.linalg.inv(A.toarray()), rtol=1e-9, atol=1e-12)


def test_not_positive_definite():
    A = sp.diags([1.0, -1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    with pytest.raises(CholeskyError, match="Qtest"):
        cholesky(A, "Qtest")
    with pytest.raises(CholeskyError):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def _banded_rows(n, extra, seed):
    rng = np.random.default_rng(seed)
    B = sp.diags([rng.normal(size=n - 2), rng.normal(size=n - 1), 3 + rng.uniform(size=n), rng.normal(size=n - 1)],
                 [-2, -1, 0, 1])
    rows = np.zeros((extra, n))
    for i in range(extra):
        j = rng.integers(0, n - 4)
        rows[i, j:j + 4] = rng.normal(size=4)
    # shuffle so the factorization has to sort rows itself
    G = sp.vstack([B, sp.csr_matrix(rows)]).tocsr()
    return G[rng.permutation(G.shape[0])]


@pytest.mark.parametrize("n, extra", [(7, 3), (60, 0), (300, 500)])
def test_banded_qr_matches_normal_equations(n, extra):
    G = _banded_rows(n, extra, n)
    f = BandedQR(G)
    M = (G.T @ G).toarray()
    assert f.logdet() == pytest.approx(np.linalg.slogdet(M)[1], abs=1e-9)
    b = np.random.default_rng(1).normal(size=(n, 2))
    ref = np.linalg.solve(M, b)
    np.testing.assert_allclose(f.solve(b), ref, rtol=1e-9, atol=1e-12 * np.abs(ref).max())
    np.testing.assert_allclose(f.solve(b[:, 0]), ref[:, 0], rtol=1e-9, atol=1e-12 * np.abs(ref).max())


def test_banded_qr_ill_conditioned_logdet():
    # bidiagonal G with condition ~1e7, so det(G^T G) = prod d^2 exactly
    n = 40
    d = np.geomspace(1, 1e7, n)
    G = sp.diags([d, -0.5 * d[:-1]], [0, 1]).tocsr()
    assert BandedQR(G).logdet() == pytest.approx(2 * np.sum(np.log(d)), rel=1e-14)


def test_banded_qr_rank_deficient():
    G = sp.csr_matrix(np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]]))
    with pytest.raises(CholeskyError, match="rank"):
        BandedQR(G, "Gtest")
