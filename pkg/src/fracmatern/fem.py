"""Piecewise-linear finite elements on an interval.

Mass, lumped mass and stiffness matrices with natural (Neumann) boundary
conditions, linear-interpolation observation matrices and assembly of the
discretized operator ``kappa(s)^2 - Laplacian``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["Mesh1D", "FemMatrices", "build_mesh", "assemble_fem", "observation_matrix", "assemble_L"]


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Interval mesh given by strictly increasing node coordinates."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).copy()
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a mesh needs at least 3 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("mesh nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            i = int(np.argmax(np.diff(nodes) <= 0))
            raise ValueError(f"mesh nodes must be strictly increasing (node {i + 1} = {nodes[i + 1]!r})")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self):
        return self.nodes.size

    @property
    def a(self):
        return float(self.nodes[0])

    @property
    def b(self):
        return float(self.nodes[-1])

    @property
    def h(self):
        return np.diff(self.nodes)


def build_mesh(a=None, b=None, n=None, *, nodes=None):
    """Uniform mesh with ``n`` nodes on ``[a, b]``, or a mesh from explicit ``nodes``."""
    if nodes is not None:
        return Mesh1D(np.asarray(nodes, dtype=float))
    if a is None or b is None or n is None:
        raise ValueError("give either (a, b, n) or nodes")
    if not a < b:
        raise ValueError(f"need a < b, got a={a!r}, b={b!r}")
    if int(n) != n or n < 3:
        raise ValueError(f"need an integer n >= 3, got {n!r}")
    return Mesh1D(np.linspace(a, b, int(n)))


@dataclass(frozen=True, eq=False)
class FemMatrices:
    """Consistent mass ``C``, lumped mass ``C_lumped`` and stiffness ``G`` (CSC)."""

    mesh: Mesh1D
    C: sp.csc_matrix
    C_lumped: sp.csc_matrix
    G: sp.csc_matrix

    @property
    def c_diag(self):
        """Diagonal of the lumped mass matrix."""
        return self.C_lumped.diagonal()


def _tridiag(diag, off):
    n = diag.size
    return sp.diags([off, diag, off], [-1, 0, 1], shape=(n, n), format="csc")


def assemble_fem(mesh: Mesh1D) -> FemMatrices:
    """Exact hat-function integrals on ``mesh`` with natural boundary conditions."""
    h = mesh.h
    zero = np.zeros(1)
    # each element contributes to its two end nodes
    c_diag = (np.concatenate([zero, h]) + np.concatenate([h, zero])) / 3.0
    C = _tridiag(c_diag, h / 6.0)
    g_diag = np.concatenate([zero, 1.0 / h]) + np.concatenate([1.0 / h, zero])
    G = _tridiag(g_diag, -1.0 / h)
    lumped = (np.concatenate([zero, h]) + np.concatenate([h, zero])) / 2.0
    C_lumped = sp.diags(lumped, 0, format="csc")
    return FemMatrices(mesh=mesh, C=C, C_lumped=C_lumped, G=G)


def observation_matrix(mesh: Mesh1D, locs, tol=1e-12):
    """Sparse ``A`` with ``A[i, j] = phi_j(locs[i])`` (linear interpolation weights)."""
    locs = np.atleast_1d(np.asarray(locs, dtype=float))
    nodes = mesh.nodes
    span = mesh.b - mesh.a
    bad = (locs < mesh.a - tol * span) | (locs > mesh.b + tol * span) | ~np.isfinite(locs)
    if np.any(bad):
        raise ValueError(f"location {locs[bad][0]!r} lies outside the mesh [{mesh.a}, {mesh.b}]")
    x = np.clip(locs, mesh.a, mesh.b)
    idx = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, mesh.n - 2)
    w = (x - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    rows = np.repeat(np.arange(x.size), 2)
    cols = np.column_stack([idx, idx + 1]).ravel()
    vals = np.column_stack([1.0 - w, w]).ravel()
    A = sp.csr_matrix((vals, (rows, cols)), shape=(x.size, mesh.n))
    A.eliminate_zeros()
    return A


def assemble_L(fem: FemMatrices, kappa_at_nodes):
    """Discretized ``kappa^2 - Laplacian``: ``G + C_lumped diag(kappa^2)``."""
    kappa = np.broadcast_to(np.asarray(kappa_at_nodes, dtype=float), (fem.mesh.n,))
    if np.any(~(kappa > 0)) or not np.all(np.isfinite(kappa)):
        raise ValueError("kappa must be positive and finite at every node")
    return (fem.G + sp.diags(fem.c_diag * kappa ** 2, 0)).tocsc()
