"""Auxiliary-space preconditioner: WG-side smoother, P1 geometric V-cycle,
and their additive / multiplicative composition.

The preconditioner for the WG matrix A (or the Schur complement S) is

    additive:        B r = R r + Pi BB (Pi^T r)
    multiplicative:  x = R r;  x += Pi BB Pi^T (r - A x);  x += R (r - A x)

where R is a symmetric Gauss-Seidel sweep on A and BB is one symmetric
V(1,1) cycle on the auxiliary matrix Pi^T A Pi, coarsened geometrically
through the nested P1 spaces of the mesh hierarchy.  The multiplicative
error propagation is (I - RA)(I - Pi BB Pi^T A)(I - RA); both modes are
symmetric positive definite operators, as PCG requires.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numba import njit

from wg_auxmg.transfer import p1_free_vertices

__all__ = ["PreconditionerConfig", "P1Hierarchy", "SymmetricGaussSeidel",
           "DampedJacobi", "build_p1_hierarchy", "v_cycle", "AuxPreconditioner"]


@njit(cache=True)
def _gs_forward(indptr, indices, data, x, b):
    for i in range(x.shape[0]):
        acc = 0.0
        diag = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                diag = data[jj]
            else:
                acc += data[jj] * x[j]
        x[i] = (b[i] - acc) / diag


@njit(cache=True)
def _gs_backward(indptr, indices, data, x, b):
    for i in range(x.shape[0] - 1, -1, -1):
        acc = 0.0
        diag = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                diag = data[jj]
            else:
                acc += data[jj] * x[j]
        x[i] = (b[i] - acc) / diag


class SymmetricGaussSeidel:
    """One sweep applies (D+U)^{-1} D (D+L)^{-1}, a symmetric positive
    definite operator; multiple sweeps iterate in place on the same rhs.
    Sweeps run in the matrix's own row order (the canonical dof order)."""

    def __init__(self, A, sweeps=1):
        A = A.tocsr()
        A.sort_indices()
        if A.shape[0] and np.any(A.diagonal() == 0.0):
            raise ValueError("matrix has a zero diagonal entry")
        self.A = A
        self.sweeps = sweeps

    def apply(self, r):
        x = np.zeros_like(r)
        A = self.A
        for _ in range(self.sweeps):
            _gs_forward(A.indptr, A.indices, A.data, x, r)
            _gs_backward(A.indptr, A.indices, A.data, x, r)
        return x

    __call__ = apply


class DampedJacobi:
    """omega D^{-1}, iterated; the textbook alternative smoother."""

    def __init__(self, A, sweeps=1, damping=0.8):
        A = A.tocsr()
        if A.shape[0] and np.any(A.diagonal() == 0.0):
            raise ValueError("matrix has a zero diagonal entry")
        self.A = A
        self.dinv = damping / A.diagonal() if A.shape[0] else np.zeros(0)
        self.sweeps = sweeps

    def apply(self, r):
        x = self.dinv * r
        for _ in range(self.sweeps - 1):
            x += self.dinv * (r - self.A @ x)
        return x

    __call__ = apply


_SMOOTHERS = {"sgs": SymmetricGaussSeidel, "jacobi": DampedJacobi}


@dataclass
class PreconditionerConfig:
    """Knobs for the composite preconditioner.

    mode selects additive or multiplicative composition; smoother_sweeps is
    the WG-side sweep count; nu_pre/nu_post the V-cycle smoothing counts
    (keep them equal, otherwise the cycle operator loses symmetry);
    coarse_size_limit picks the level factored densely (the finest level at
    or below the limit, never the top level unless the hierarchy has just
    one); exact_coarse replaces the V-cycle by a direct solve (debugging).
    """
    mode: str = "multiplicative"
    smoother: str = "sgs"
    smoother_sweeps: int = 1
    nu_pre: int = 1
    nu_post: int = 1
    coarse_size_limit: int = 64
    exact_coarse: bool = False
    jacobi_damping: float = 0.8

    def __post_init__(self):
        if self.mode not in ("additive", "multiplicative"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.smoother not in _SMOOTHERS:
            raise ValueError(f"unknown smoother {self.smoother!r}")
        if min(self.smoother_sweeps, self.nu_pre, self.nu_post) < 1:
            raise ValueError("sweep counts must be at least 1")

    def make_smoother(self, A, sweeps):
        if self.smoother == "jacobi":
            return DampedJacobi(A, sweeps=sweeps, damping=self.jacobi_damping)
        return SymmetricGaussSeidel(A, sweeps=sweeps)


@dataclass
class P1Hierarchy:
    """Galerkin hierarchy on the free P1 vertices of nested meshes.

    matrices[l] lives on the free vertices of mesh level l; interps[l]
    prolongates level l to level l+1.  Levels below solve_level are not
    built; solve_level holds a dense Cholesky factorization.
    """
    matrices: list
    interps: list
    smoothers: list  # (pre, post) smoother pairs per level, None when unused
    solve_level: int
    coarse_factor: Optional[tuple]
    free_vertices: list

    @property
    def n_levels(self):
        return len(self.matrices)

    def coarse_solve(self, r):
        if self.coarse_factor is None:
            return np.zeros_like(r)
        return scipy.linalg.cho_solve(self.coarse_factor, r)


def _p1_interpolation(coarse, fine, edges, col_c, col_f):
    """Nested-mesh P1 interpolation between free-vertex spaces: inherited
    vertices carry weight 1, edge midpoints 1/2 from each free parent."""
    nvc = coarse.n_vertices
    inherited = np.flatnonzero(col_f[:nvc] >= 0)
    if np.any(col_c[inherited] < 0):
        raise ValueError("free-vertex bookkeeping mismatch: a vertex is "
                         "constrained on the coarse level but free on the fine")
    rows = [col_f[inherited]]
    cols = [col_c[inherited]]
    vals = [np.ones(len(inherited))]
    mids = np.flatnonzero(col_f[nvc:] >= 0) + nvc
    for side in (0, 1):
        parent = edges[mids - nvc, side]
        keep = col_c[parent] >= 0
        rows.append(col_f[mids[keep]])
        cols.append(col_c[parent[keep]])
        vals.append(np.full(keep.sum(), 0.5))
    nfree_f = int((col_f >= 0).sum())
    nfree_c = int((col_c >= 0).sum())
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nfree_f, nfree_c)).tocsr()


def build_p1_hierarchy(aux_A, hierarchy, config=None):
    """Coarsen the auxiliary matrix through the mesh hierarchy.

    aux_A must act on the free vertices of hierarchy's finest mesh; coarse
    matrices are the triple products P^T M P down to the direct-solve
    level selected by config.coarse_size_limit.
    """
    if config is None:
        config = PreconditionerConfig()
    nlev = len(hierarchy)
    cols = [p1_free_vertices(m)[1] for m in hierarchy.levels]
    sizes = [int((c >= 0).sum()) for c in cols]
    if aux_A.shape[0] != sizes[-1]:
        raise ValueError(f"auxiliary matrix size {aux_A.shape[0]} does not "
                         f"match {sizes[-1]} free vertices on the finest mesh")
    if config.exact_coarse or nlev == 1:
        solve_level = nlev - 1
    else:
        candidates = [l for l in range(nlev - 1)
                      if sizes[l] <= config.coarse_size_limit]
        solve_level = max(candidates) if candidates else 0

    matrices = [None] * nlev
    interps = [None] * (nlev - 1)
    matrices[-1] = aux_A.tocsr()
    for l in range(nlev - 2, solve_level - 1, -1):
        P = _p1_interpolation(hierarchy[l], hierarchy[l + 1],
                              hierarchy.midpoint_edges[l + 1],
                              cols[l], cols[l + 1])
        interps[l] = P
        matrices[l] = (P.T @ (matrices[l + 1] @ P)).tocsr()

    smoothers = [None] * nlev
    for l in range(solve_level + 1, nlev):
        pre = config.make_smoother(matrices[l], config.nu_pre)
        post = pre if config.nu_post == config.nu_pre else \
            config.make_smoother(matrices[l], config.nu_post)
        smoothers[l] = (pre, post)

    n0 = sizes[solve_level]
    if n0 == 0:
        factor = None
    else:
        factor = scipy.linalg.cho_factor(matrices[solve_level].toarray())
    return P1Hierarchy(matrices, interps, smoothers, solve_level, factor,
                       free_vertices=[np.flatnonzero(c >= 0) for c in cols])


def v_cycle(hier, r):
    """One symmetric V-cycle on the P1 hierarchy (the coarse operator BB)."""

    def descend(l, rl):
        if l == hier.solve_level:
            return hier.coarse_solve(rl)
        pre, post = hier.smoothers[l]
        M = hier.matrices[l]
        P = hier.interps[l - 1]
        x = pre.apply(rl)
        x += P @ descend(l - 1, P.T @ (rl - M @ x))
        x += post.apply(rl - M @ x)
        return x

    return descend(hier.n_levels - 1, r)


class AuxPreconditioner:
    """The composite operator B for PCG on the WG or Schur system."""

    def __init__(self, A, pi, hier, config=None):
        self.config = config or PreconditionerConfig()
        self.A = A.tocsr()
        self.pi = pi.tocsr()
        if self.pi.shape[0] != self.A.shape[0]:
            raise ValueError(f"prolongation has {self.pi.shape[0]} rows but "
                             f"the system has {self.A.shape[0]} dofs")
        if self.pi.shape[1] != hier.matrices[-1].shape[0]:
            raise ValueError("prolongation does not match the auxiliary matrix")
        self.hier = hier
        self.smoother = self.config.make_smoother(
            self.A, self.config.smoother_sweeps)

    def apply(self, r):
        if self.config.mode == "additive":
            return self.smoother.apply(r) + self.pi @ v_cycle(self.hier,
                                                              self.pi.T @ r)
        x = self.smoother.apply(r)
        x += self.pi @ v_cycle(self.hier, self.pi.T @ (r - self.A @ x))
        x += self.smoother.apply(r - self.A @ x)
        return x

    __call__ = apply
