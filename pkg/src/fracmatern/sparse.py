"""Cholesky factorization of sparse SPD matrices.

The precision matrices in this package are banded (1-d meshes) or become
banded after a reverse Cuthill-McKee reordering, so a LAPACK banded Cholesky
is used.  Matrices whose reordered bandwidth is large fall back to a dense
factorization.

When a precision is only known through a square root, ``Q = G^T G``, the
banded QR factorization of ``G`` avoids squaring its condition number.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.linalg.lapack import dtbtrs
from scipy.sparse.csgraph import reverse_cuthill_mckee

__all__ = ["CholeskyError", "SparseCholesky", "BandedQR", "cholesky"]


class CholeskyError(np.linalg.LinAlgError):
    """Raised when a matrix is not (numerically) positive definite."""


class SparseCholesky:
    """Factorization ``P A P^T = R^T R`` with ``R`` upper triangular (banded or dense).

    Parameters
    ----------
    A : sparse or dense matrix
        Symmetric positive definite matrix.
    name : str
        Label used in error messages.
    """

    def __init__(self, A, name="matrix"):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"{name} must be square, got shape {A.shape}")
        self.n = n
        self.name = name
        perm = reverse_cuthill_mckee(A, symmetric_mode=True).astype(np.intp)
        self.perm = perm
        self.iperm = np.empty_like(perm)
        self.iperm[perm] = np.arange(n)
        B = A[perm][:, perm].tocoo()
        bw = int(np.max(np.abs(B.row - B.col))) if B.nnz else 0
        self.bandwidth = bw
        self.banded = 4 * (bw + 1) < n
        try:
            if self.banded:
                ab = np.zeros((bw + 1, n))
                upper = B.row <= B.col
                ab[bw + B.row[upper] - B.col[upper], B.col[upper]] = B.data[upper]
                self._factor = la.cholesky_banded(ab, lower=False)
                diag = self._factor[bw]
            else:
                self._factor = la.cholesky(B.toarray(), lower=False)
                diag = np.diag(self._factor)
        except la.LinAlgError as exc:
            raise CholeskyError(f"{name} is not positive definite: {exc}") from None
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise CholeskyError(f"{name} is not positive definite")
        self._logdet = 2.0 * float(np.sum(np.log(diag)))

    def logdet(self):
        """``log det A``."""
        return self._logdet

    def solve(self, b):
        """Solve ``A x = b`` for a vector or a block of columns."""
        b = np.asarray(b, dtype=float)
        bp = b[self.perm]
        if self.banded:
            x = la.cho_solve_banded((self._factor, False), bp)
        else:
            x = la.cho_solve((self._factor, False), bp)
        return x[self.iperm]

    def solve_R(self, z):
        """Return ``P^T R^{-1} z``; for standard normal ``z`` this has covariance ``A^{-1}``."""
        z = np.asarray(z, dtype=float)
        if self.banded:
            bw = self.bandwidth
            y = la.solve_banded((0, bw), self._factor, z)
        else:
            y = la.solve_triangular(self._factor, z, lower=False)
        return y[self.iperm]


class BandedQR:
    """Triangular factor ``R`` of ``G = Q R`` for a tall sparse ``G`` with banded rows.

    Each row of ``G`` must have its nonzeros in a short contiguous column
    window.  Rows are sorted by their first column and eliminated block by
    block with dense Householder QR, so memory and work stay proportional to
    the bandwidth.  The object then acts as a factorization of ``G^T G``.

    Parameters
    ----------
    G : sparse matrix
        ``(rows, n)`` with full column rank.
    name : str
        Label used in error messages.
    """

    def __init__(self, G, name="matrix"):
        G = sp.csr_matrix(G, dtype=float)
        G.eliminate_zeros()
        G.sort_indices()
        nrow, n = G.shape
        self.n = n
        used = np.flatnonzero(np.diff(G.indptr) > 0)
        first = G.indices[G.indptr[used]]
        last = G.indices[G.indptr[used + 1] - 1]
        W = int(np.max(last - first + 1)) if used.size else 1
        order = np.argsort(first, kind="stable")
        rows, first = used[order], first[order]
        b = max(W, 16)
        u = b + W - 1
        ab = np.zeros((u + 1, n))
        carry = np.zeros((0, 0))
        pos = 0
        for j in range(0, n, b):
            k = min(b, n - j)
            hi = min(n, j + b + W)
            end = int(np.searchsorted(first, j + b, side="left"))
            new = G[rows[pos:end]][:, j:hi].toarray()
            pos = end
            block = np.zeros((carry.shape[0] + new.shape[0], hi - j))
            block[:carry.shape[0], :carry.shape[1]] = carry
            block[carry.shape[0]:] = new
            if block.shape[0] < k:
                raise CholeskyError(f"{name} does not have full column rank")
            r = la.qr(block, mode="r", check_finite=False)[0]
            for i in range(k):
                cols = np.arange(j + i, hi)
                ab[u + j + i - cols, cols] = r[i, i:]
            carry = r[k:hi - j, k:]
        diag = ab[u]
        if not np.all(np.isfinite(ab)) or np.any(np.abs(diag) <= 1e-300):
            raise CholeskyError(f"{name} does not have full column rank")
        self._ab = ab
        self._logdet = 2.0 * float(np.sum(np.log(np.abs(diag))))

    def logdet(self):
        """``log det (G^T G)``."""
        return self._logdet

    def _tri(self, b, trans):
        b = np.asarray(b, dtype=float)
        x, info = dtbtrs(self._ab, b.reshape(self.n, -1), uplo="U", trans=trans)
        if info != 0:
            raise CholeskyError("singular triangular factor")
        return x.reshape(b.shape)

    def solve(self, b):
        """Solve ``G^T G x = b``."""
        return self._tri(self._tri(b, "T"), "N")


def cholesky(A, name="matrix"):
    """Factorize ``A``; see :class:`SparseCholesky`."""
    return SparseCholesky(A, name=name)
