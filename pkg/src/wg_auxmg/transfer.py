"""Averaging prolongation from continuous P1 functions into WG dofs.

A piecewise-linear function w is carried into the WG space by taking its
mean on every cell (the centroid value) and on every facet (the mean of
the facet's vertex values).  As a matrix Pi this has rows of d entries
1/d (facet dofs) and d+1 entries 1/(d+1) (interior dofs); columns are the
free (non-Dirichlet) vertices.  The auxiliary-space matrix is the triple
product Pi^T A Pi (or Pi_b^T S Pi_b for the facet-reduced system, where
the interior elimination is already folded into S).
"""

import numpy as np
import scipy.sparse as sp

from wg_auxmg.mesh import DIRICHLET

__all__ = ["p1_free_vertices", "build_pi", "build_pi_b", "aux_matrix"]


def p1_free_vertices(mesh):
    """Vertices not touching a Dirichlet facet.

    Returns (free_ids, col_of_vertex): col_of_vertex maps vertex id to its
    column in the auxiliary space, -1 for constrained vertices.
    """
    constrained = np.zeros(mesh.n_vertices, dtype=bool)
    dir_facets = mesh.facet_kind == DIRICHLET
    if np.any(dir_facets):
        constrained[np.unique(mesh.facets[dir_facets])] = True
    free = np.flatnonzero(~constrained)
    col = np.full(mesh.n_vertices, -1, dtype=np.int64)
    col[free] = np.arange(len(free))
    return free, col


def _facet_rows(mesh, layout, col):
    """COO triplets for the facet-dof rows of Pi."""
    d = mesh.dim
    free_facets = np.flatnonzero(layout.facet_dof_of_facet >= 0)
    rows = np.repeat(layout.facet_dof_of_facet[free_facets], d)
    verts = mesh.facets[free_facets].ravel()
    cols = col[verts]
    keep = cols >= 0
    return rows[keep], cols[keep], np.full(keep.sum(), 1.0 / d)


def build_pi(mesh, layout):
    """Prolongation onto all WG dofs (facet block first, then interior)."""
    _, col = p1_free_vertices(mesh)
    ncols = int((col >= 0).sum())
    r1, c1, v1 = _facet_rows(mesh, layout, col)
    d = mesh.dim
    rows = np.repeat(layout.interior_dof_of_cell, d + 1)
    cols = col[mesh.cells.ravel()]
    keep = cols >= 0
    r2, c2 = rows[keep], cols[keep]
    v2 = np.full(keep.sum(), 1.0 / (d + 1))
    pi = sp.coo_matrix(
        (np.concatenate([v1, v2]),
         (np.concatenate([r1, r2]), np.concatenate([c1, c2]))),
        shape=(layout.n_dofs, ncols)).tocsr()
    return pi


def build_pi_b(mesh, layout):
    """Prolongation onto the facet dofs only (for the Schur-reduced system)."""
    _, col = p1_free_vertices(mesh)
    ncols = int((col >= 0).sum())
    r1, c1, v1 = _facet_rows(mesh, layout, col)
    return sp.coo_matrix((v1, (r1, c1)),
                         shape=(layout.n_facet_dofs, ncols)).tocsr()


def aux_matrix(A, pi):
    """Galerkin triple product Pi^T A Pi on the auxiliary vertex space."""
    if A.shape[1] != pi.shape[0]:
        raise ValueError(f"operator of size {A.shape} does not act on "
                         f"prolongated vectors of length {pi.shape[0]}")
    return (pi.T @ (A @ pi)).tocsr()
