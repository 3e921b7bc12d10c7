"""Quadrature rules on reference simplices.

Rules are generated by collapsing tensor Gauss-Legendre grids onto the
reference triangle/tetrahedron (Duffy transform).  This trades a few extra
points for exactness guarantees at any requested polynomial degree, which
keeps the oracle rules (high degree) and production rules (degree 2/4) on
one code path.
"""

import math
from functools import lru_cache

import numpy as np

__all__ = ["simplex_rule", "map_to_cells", "reference_volume"]


def reference_volume(dim: int) -> float:
    """Volume of the reference simplex {x >= 0, sum(x) <= 1}."""
    return 1.0 / math.factorial(dim)


def _gauss01(n: int):
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int):
    """Quadrature on the reference simplex, exact for polynomials of `degree`.

    Returns (points, weights): points is (m, dim), weights (m,) summing to the
    reference simplex volume (1/2 for triangles, 1/6 for tetrahedra, 1 for
    the unit interval used on edge facets).
    """
    if degree < 1:
        degree = 1
    if dim == 1:
        m = (degree + 2) // 2
        x, w = _gauss01(m)
        return x.reshape(-1, 1), w.copy()
    if dim == 2:
        # x = u, y = v*(1-u); Jacobian (1-u) raises the u-degree by one.
        m = (degree + 3) // 2
        u, wu = _gauss01(m)
        v, wv = _gauss01(m)
        U, V = np.meshgrid(u, v, indexing="ij")
        WU, WV = np.meshgrid(wu, wv, indexing="ij")
        x = U
        y = V * (1.0 - U)
        w = WU * WV * (1.0 - U)
        pts = np.column_stack([x.ravel(), y.ravel()])
        return pts, w.ravel()
    if dim == 3:
        # x = u, y = v*(1-u), z = w*(1-u)*(1-v); Jacobian (1-u)^2 (1-v).
        m = (degree + 4) // 2
        u, wu = _gauss01(m)
        U, V, W = np.meshgrid(u, u, u, indexing="ij")
        WU, WV, WW = np.meshgrid(wu, wu, wu, indexing="ij")
        x = U
        y = V * (1.0 - U)
        z = W * (1.0 - U) * (1.0 - V)
        w = WU * WV * WW * (1.0 - U) ** 2 * (1.0 - V)
        pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
        return pts, w.ravel()
    raise ValueError(f"unsupported simplex dimension {dim}")


def map_to_cells(ref_pts, ref_wts, vertices):
    """Push a reference rule onto a batch of simplices.

    vertices: (nc, k+1, gdim) vertex coordinates of nc k-simplices.
    Returns (points (nc, m, gdim), weights (nc, m)); weights absorb each
    cell's measure (they sum to the cell volume / facet area).
    """
    v0 = vertices[:, 0, :]
    edges = vertices[:, 1:, :] - v0[:, None, :]  # (nc, k, gdim)
    # x = v0 + sum_i ref_i * edge_i
    pts = v0[:, None, :] + np.einsum("mk,nkg->nmg", ref_pts, edges)
    k = ref_pts.shape[1]
    gdim = vertices.shape[2]
    if k == gdim:
        jac = np.abs(np.linalg.det(edges))
    else:
        # facet embedded in higher dimension: Gram determinant
        gram = np.einsum("nkg,nlg->nkl", edges, edges)
        jac = np.sqrt(np.abs(np.linalg.det(gram)))
    wts = ref_wts[None, :] * jac[:, None]
    return pts, wts
