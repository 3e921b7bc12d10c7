"""Lowest-order weak Galerkin discretization of -div(A grad u) = f.

Unknowns are piecewise constants: one value per cell (v_0) and one per
facet (v_b).  The discrete weak gradient of such a function lives, per
cell, in the lowest-order Raviart-Thomas space, for which we use the basis

    q_1 = e_1, ..., q_d = e_d,  q_{d+1} = x - x_c

(x_c the cell centroid).  This basis makes the RT mass matrix diagonal:
diag(|K|, ..., |K|, m_K) with m_K the second moment of K about x_c, so the
weak gradient is a closed-form linear map from the d+2 local values
[v_0, v_b per facet] to d+1 RT coefficients.

Global dof ordering: all free facet dofs first (facets in mesh order,
Dirichlet facets skipped), then one interior dof per cell.  Dirichlet data
enters by lifting, so the assembled matrix is SPD on the free dofs.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from wg_auxmg.mesh import DIRICHLET, NEUMANN, UNSET
from wg_auxmg.quadrature import map_to_cells, simplex_rule

__all__ = [
    "WgDofLayout", "WgVector", "CoefficientField", "AssembledSystem",
    "LocalWeakGradient", "build_layout", "local_weak_gradient",
    "local_stiffness", "assemble", "discrete_norms", "apply_manufactured",
    "export_matrix",
]

_CHUNK = 1 << 16  # cells per assembly chunk; fixed so results never depend on it


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("WG_AUXMG_WORKERS", "1")))


# -- dof layout --------------------------------------------------------------


@dataclass
class WgDofLayout:
    """Numbering of free WG unknowns: facet dofs first, then cell dofs."""
    n_facet_dofs: int
    n_interior_dofs: int
    facet_dof_of_facet: np.ndarray  # (nf,) free dof id or -1 on Dirichlet facets
    dirichlet_facets: np.ndarray    # facet ids carrying prescribed values

    @property
    def n_dofs(self):
        return self.n_facet_dofs + self.n_interior_dofs

    @property
    def interior_dof_of_cell(self):
        return self.n_facet_dofs + np.arange(self.n_interior_dofs)

    def interior_slice(self):
        return slice(self.n_facet_dofs, self.n_dofs)


def build_layout(mesh):
    if np.any(mesh.facet_kind == UNSET):
        raise ValueError("mesh has unclassified boundary facets; "
                         "run classify_boundary first")
    free = mesh.facet_kind != DIRICHLET
    facet_dof = np.full(mesh.n_facets, -1, dtype=np.int64)
    facet_dof[free] = np.arange(free.sum())
    return WgDofLayout(
        n_facet_dofs=int(free.sum()),
        n_interior_dofs=mesh.n_cells,
        facet_dof_of_facet=facet_dof,
        dirichlet_facets=np.flatnonzero(~free),
    )


@dataclass
class WgVector:
    """A WG function: free values in layout order plus Dirichlet facet data."""
    values: np.ndarray
    boundary_values: np.ndarray  # one value per layout.dirichlet_facets entry
    layout: WgDofLayout

    def __post_init__(self):
        if len(self.values) != self.layout.n_dofs:
            raise ValueError("value vector does not match layout")
        if len(self.boundary_values) != len(self.layout.dirichlet_facets):
            raise ValueError("boundary value vector does not match layout")

    def facet_values(self):
        """Values on every facet, prescribed ones filled in."""
        lay = self.layout
        out = np.empty(len(lay.facet_dof_of_facet))
        free = lay.facet_dof_of_facet >= 0
        out[free] = self.values[lay.facet_dof_of_facet[free]]
        out[lay.dirichlet_facets] = self.boundary_values
        return out

    def interior_values(self):
        return self.values[self.layout.interior_slice()]


# -- diffusion coefficient ---------------------------------------------------


def _spd_check(mats, what):
    sym_err = np.abs(mats - np.swapaxes(mats, -1, -2)).max()
    if sym_err > 1e-12 * max(1.0, np.abs(mats).max()):
        raise ValueError(f"{what}: coefficient matrix not symmetric")
    ev = np.linalg.eigvalsh(mats)
    if ev.min() <= 0:
        raise ValueError(f"{what}: coefficient not positive definite")
    return float(ev.min()), float(ev.max())


@dataclass
class CoefficientField:
    """Diffusion tensor A(x): constant, per-region constant, or smooth.

    Scalar-valued coefficients keep a fast path through assembly; matrix
    values are symmetrized-checked and must be uniformly SPD (smooth ones
    are checked at the assembly quadrature points).
    """
    dim: int
    kind: str                      # "constant" | "per_region" | "smooth"
    value: object = None           # scalar/matrix, or {region: scalar/matrix}
    fn: Optional[Callable] = None  # smooth: pts (n, d) -> (n,) or (n, d, d)
    scalar: bool = True
    bounds: Optional[tuple] = None  # (alpha, beta) spectral bounds if known

    @classmethod
    def constant(cls, value, dim=2):
        value = np.asarray(value, dtype=float)
        if value.ndim == 0:
            if value <= 0:
                raise ValueError("constant coefficient must be positive")
            return cls(dim, "constant", float(value), scalar=True,
                       bounds=(float(value), float(value)))
        bounds = _spd_check(value[None], "constant coefficient")
        return cls(value.shape[0], "constant", value, scalar=False, bounds=bounds)

    @classmethod
    def per_region(cls, table, dim):
        vals = {}
        lo, hi = np.inf, -np.inf
        scalar = True
        for region, v in table.items():
            v = np.asarray(v, dtype=float)
            if v.ndim == 0:
                if v <= 0:
                    raise ValueError(f"region {region}: coefficient must be positive")
                vals[int(region)] = float(v)
                lo, hi = min(lo, float(v)), max(hi, float(v))
            else:
                scalar = False
                a, b = _spd_check(v[None], f"region {region}")
                vals[int(region)] = v
                lo, hi = min(lo, a), max(hi, b)
        if not scalar:
            vals = {r: np.asarray(v, dtype=float) * np.eye(dim)
                    if np.asarray(v).ndim == 0 else np.asarray(v, dtype=float)
                    for r, v in vals.items()}
        return cls(dim, "per_region", vals, scalar=scalar, bounds=(lo, hi))

    @classmethod
    def smooth(cls, fn, dim, scalar=True, bounds=None):
        return cls(dim, "smooth", None, fn=fn, scalar=scalar, bounds=bounds)

    def __call__(self, pts, region=None):
        """Evaluate at points; region ids are required for per-region fields."""
        pts = np.asarray(pts, dtype=float)
        if self.kind == "constant":
            if self.scalar:
                return np.full(len(pts), self.value)
            return np.broadcast_to(self.value, (len(pts), self.dim, self.dim)).copy()
        if self.kind == "per_region":
            if region is None:
                raise ValueError("per-region coefficient needs region ids")
            region = np.asarray(region)
            if self.scalar:
                out = np.empty(len(pts))
                for r, v in self.value.items():
                    out[region == r] = v
                return out
            out = np.empty((len(pts), self.dim, self.dim))
            for r, v in self.value.items():
                out[region == r] = v
            return out
        vals = np.asarray(self.fn(pts), dtype=float)
        return vals

    def cell_values(self, mesh):
        """Per-cell constants for the constant / per-region kinds."""
        if self.kind == "constant":
            if self.scalar:
                return np.full(mesh.n_cells, self.value)
            return np.broadcast_to(
                self.value, (mesh.n_cells, self.dim, self.dim))
        if self.kind == "per_region":
            missing = set(np.unique(mesh.cell_region)) - set(self.value)
            if missing:
                raise ValueError(f"no coefficient for regions {sorted(missing)}")
            if self.scalar:
                out = np.empty(mesh.n_cells)
            else:
                out = np.empty((mesh.n_cells, self.dim, self.dim))
            for r, v in self.value.items():
                out[mesh.cell_region == r] = v
            return out
        raise ValueError("smooth coefficient has no per-cell constant")


# -- local operators ---------------------------------------------------------


class LocalWeakGradient(NamedTuple):
    """gradient: (d+1, d+2) map [v_0, v_b per facet] -> RT coefficients;
    rt0_mass: the diagonal of the RT mass matrix in the basis above."""
    gradient: np.ndarray
    rt0_mass: np.ndarray


def _wg_batch(pts):
    """Weak-gradient maps for a batch of cells given vertex coords (nc, d+1, d).

    Returns (G, mdiag, vol, xc): G[n] maps the local values [v_0, v_b_0..d]
    (facet k opposite vertex k) to RT coefficients; mdiag[n] is the RT mass
    diagonal (|K| repeated d times, then the second moment m_K).
    """
    nc, nvc, d = pts.shape
    span = pts[:, 1:] - pts[:, :1]
    det = np.linalg.det(span)
    vol = np.abs(det) / math.factorial(d)
    if np.any(vol == 0):
        raise ValueError("degenerate cell: zero volume")
    xc = pts.mean(axis=1)
    inv = np.linalg.inv(span)
    grads = np.empty((nc, d + 1, d))
    grads[:, 1:] = np.swapaxes(inv, 1, 2)
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    S = -d * vol[:, None, None] * grads  # outward vector area of facet k
    # facet centroid opposite vertex k = (sum of the other vertices) / d
    fc = ((d + 1) * xc[:, None, :] - pts) / d
    m = vol / ((d + 1) * (d + 2)) * ((pts - xc[:, None, :]) ** 2).sum(axis=(1, 2))
    B = np.zeros((nc, d + 1, d + 2))
    B[:, :d, 1:] = np.swapaxes(S, 1, 2)
    B[:, d, 0] = -d * vol
    B[:, d, 1:] = ((fc - xc[:, None, :]) * S).sum(axis=2)
    mdiag = np.concatenate([np.repeat(vol[:, None], d, axis=1), m[:, None]], axis=1)
    G = B / mdiag[:, :, None]
    return G, mdiag, vol, xc


def local_weak_gradient(cell_pts):
    """Weak-gradient map of a single cell from its (d+1, d) vertex coords."""
    pts = np.asarray(cell_pts, dtype=float)[None]
    G, mdiag, _, _ = _wg_batch(pts)
    return LocalWeakGradient(G[0], mdiag[0])


def _stiffness_batch(pts, avals, quad_order, scalar):
    """Local stiffness matrices G^T W G for a batch of cells.

    avals: per-cell constants ((nc,) or (nc, d, d)) or a smooth callable.
    """
    nc, nvc, d = pts.shape
    G, mdiag, vol, xc = _wg_batch(pts)
    if callable(avals):
        ref_p, ref_w = simplex_rule(d, quad_order)
        qp, qw = map_to_cells(ref_p, ref_w, pts)
        flatq = qp.reshape(-1, d)
        a = np.asarray(avals(flatq), dtype=float)
        dx = qp - xc[:, None, :]
        if scalar:
            a = a.reshape(nc, -1)
            if a.min() <= 0:
                raise ValueError("coefficient not positive at a quadrature point")
            wA = qw * a
            W = np.zeros((nc, d + 1, d + 1))
            s0 = wA.sum(axis=1)
            for i in range(d):
                W[:, i, i] = s0
            s1 = (wA[:, :, None] * dx).sum(axis=1)
            W[:, :d, d] = s1
            W[:, d, :d] = s1
            W[:, d, d] = (wA * (dx ** 2).sum(axis=2)).sum(axis=1)
        else:
            Amat = a.reshape(nc, -1, d, d)
            _spd_check(Amat.reshape(-1, d, d), "smooth coefficient")
            W = np.zeros((nc, d + 1, d + 1))
            W[:, :d, :d] = (qw[:, :, None, None] * Amat).sum(axis=1)
            Adx = np.einsum("nqij,nqj->nqi", Amat, dx)
            s1 = (qw[:, :, None] * Adx).sum(axis=1)
            W[:, :d, d] = s1
            W[:, d, :d] = s1
            W[:, d, d] = (qw * np.einsum("nqi,nqi->nq", dx, Adx)).sum(axis=1)
        loc = np.einsum("nia,nij,njb->nab", G, W, G)
    elif scalar:
        a = np.asarray(avals, dtype=float)
        if a.min() <= 0:
            raise ValueError("coefficient not positive on a cell")
        loc = np.einsum("nia,ni,nib->nab", G, a[:, None] * mdiag, G)
    else:
        Amat = np.asarray(avals, dtype=float)
        W = np.zeros((nc, d + 1, d + 1))
        W[:, :d, :d] = vol[:, None, None] * Amat
        # the off-diagonal block integrates A e_i . (x - x_c), zero for constant A
        dv = pts - xc[:, None, :]
        W[:, d, d] = (vol / ((d + 1) * (d + 2))
                      * np.einsum("nki,nij,nkj->n", dv, Amat, dv))
        loc = np.einsum("nia,nij,njb->nab", G, W, G)
    return 0.5 * (loc + np.swapaxes(loc, 1, 2))


def local_stiffness(cell_pts, coeff=None, quad_order=None):
    """Local (d+2)x(d+2) WG stiffness matrix of one cell.

    Dof order: [v_0, v_b on facet opposite vertex 0, ..., opposite vertex d].
    Constant and per-cell-constant coefficients integrate in closed form;
    smooth coefficients use a quadrature of the given order (default 4).
    """
    pts = np.asarray(cell_pts, dtype=float)[None]
    d = pts.shape[2]
    if coeff is None:
        coeff = CoefficientField.constant(1.0, dim=d)
    if coeff.kind == "smooth":
        order = 4 if quad_order is None else quad_order
        return _stiffness_batch(pts, coeff.fn, order, coeff.scalar)[0]
    if coeff.kind == "per_region":
        raise ValueError("per-region coefficient needs mesh context; "
                         "pass a constant here")
    vals = np.asarray([coeff.value]) if coeff.scalar else \
        np.asarray(coeff.value, dtype=float)[None]
    return _stiffness_batch(pts, vals, quad_order, coeff.scalar)[0]


# -- boundary / load data helpers --------------------------------------------


def _facet_averages(mesh, facet_ids, data, quad_order):
    """Mean of `data` over each listed facet.

    data may be a scalar, a callable on points, or a {tag: scalar|callable}
    dict resolved through facet_tag.
    """
    if len(facet_ids) == 0:
        return np.zeros(0)
    if data is None:
        return np.zeros(len(facet_ids))
    if isinstance(data, dict):
        out = np.empty(len(facet_ids))
        tags = mesh.facet_tag[facet_ids]
        for tag in np.unique(tags):
            sub = facet_ids[tags == tag]
            if int(tag) not in data:
                raise ValueError(f"no boundary data for tag {tag}")
            out[tags == tag] = _facet_averages(mesh, sub, data[int(tag)], quad_order)
        return out
    if not callable(data):
        return np.full(len(facet_ids), float(data))
    fpts = mesh.vertices[mesh.facets[facet_ids]]
    ref_p, ref_w = simplex_rule(mesh.dim - 1, quad_order)
    qp, qw = map_to_cells(ref_p, ref_w, fpts)
    vals = np.asarray(data(qp.reshape(-1, mesh.dim)), dtype=float).reshape(qw.shape)
    return (qw * vals).sum(axis=1) / qw.sum(axis=1)


def _cell_integrals(mesh, data, quad_order):
    """Integral of `data` over each cell (the P0 load functional)."""
    if data is None:
        return np.zeros(mesh.n_cells)
    if not callable(data):
        return float(data) * mesh.cell_volumes
    pts = mesh.vertices[mesh.cells]
    ref_p, ref_w = simplex_rule(mesh.dim, quad_order)
    qp, qw = map_to_cells(ref_p, ref_w, pts)
    vals = np.asarray(data(qp.reshape(-1, mesh.dim)), dtype=float).reshape(qw.shape)
    return (qw * vals).sum(axis=1)


# -- global assembly ---------------------------------------------------------


@dataclass
class AssembledSystem:
    """Sparse WG system on the free dofs, facet block first.

    lifting holds the Dirichlet contribution already subtracted from b, so
    b = load + neumann - lifting; dirichlet_values are the prescribed facet
    averages in layout.dirichlet_facets order.
    """
    mesh: object
    layout: WgDofLayout
    A: sp.csr_matrix
    b: np.ndarray
    lifting: np.ndarray
    dirichlet_values: np.ndarray

    def solution_vector(self, values):
        return WgVector(values, self.dirichlet_values, self.layout)


def assemble(mesh, layout=None, coeff=None, f=None, dirichlet=None,
             neumann=None, quad_order=None, workers=None):
    """Assemble the WG stiffness matrix and right-hand side.

    coeff defaults to the identity; f / dirichlet / neumann accept scalars,
    callables on points, or {tag: ...} dicts (f is per-cell, the others per
    boundary facet).  quad_order defaults to 4 wherever quadrature is
    needed.  The worker count (WG_AUXMG_WORKERS or the workers argument)
    only parallelizes the per-cell work; results are identical bit for bit
    for any worker count.
    """
    if layout is None:
        layout = build_layout(mesh)
    d = mesh.dim
    if coeff is None:
        coeff = CoefficientField.constant(1.0, dim=d)
    order = 4 if quad_order is None else quad_order

    pts = mesh.vertices[mesh.cells]
    if coeff.kind == "smooth":
        avals, smooth = coeff.fn, True
    else:
        avals, smooth = coeff.cell_values(mesh), False

    nw = _worker_count(workers)
    ranges = [(lo, min(lo + _CHUNK, mesh.n_cells))
              for lo in range(0, mesh.n_cells, _CHUNK)]

    def work(rng):
        lo, hi = rng
        a = avals if smooth else avals[lo:hi]
        return _stiffness_batch(pts[lo:hi], a, order, coeff.scalar)

    if nw > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            chunks = list(pool.map(work, ranges))
    else:
        chunks = [work(r) for r in ranges]
    loc = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]

    # local dof -> global dof (-1 marks Dirichlet columns handled by lifting)
    ldof = np.empty((mesh.n_cells, d + 2), dtype=np.int64)
    ldof[:, 0] = layout.interior_dof_of_cell
    ldof[:, 1:] = layout.facet_dof_of_facet[mesh.cell_facets]

    u_dir = np.zeros(mesh.n_facets)
    if len(layout.dirichlet_facets):
        u_dir[layout.dirichlet_facets] = _facet_averages(
            mesh, layout.dirichlet_facets, dirichlet, order)
    dir_vals = np.zeros((mesh.n_cells, d + 2))
    dir_vals[:, 1:] = u_dir[mesh.cell_facets]

    rows = np.broadcast_to(ldof[:, :, None], loc.shape)
    cols = np.broadcast_to(ldof[:, None, :], loc.shape)
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix(
        (loc[keep], (rows[keep], cols[keep])),
        shape=(layout.n_dofs, layout.n_dofs)).tocsr()
    A.sum_duplicates()

    lift_mask = (rows >= 0) & (cols < 0)
    contrib = loc * np.broadcast_to(dir_vals[:, None, :], loc.shape)
    # bincount returns int64 when the selection is empty (pure Neumann)
    lifting = np.bincount(rows[lift_mask],
                          weights=contrib[lift_mask],
                          minlength=layout.n_dofs).astype(float)

    b = -lifting.copy()
    b[layout.interior_slice()] += _cell_integrals(mesh, f, order)
    neu = np.flatnonzero(mesh.facet_kind == NEUMANN)
    if neu.size and neumann is not None:
        g = _facet_averages(mesh, neu, neumann, order) * mesh.facet_areas[neu]
        b[layout.facet_dof_of_facet[neu]] += g
    return AssembledSystem(mesh, layout, A, b, lifting,
                           u_dir[layout.dirichlet_facets])


# -- norms and projections ---------------------------------------------------


def discrete_norms(v: WgVector, mesh):
    """(||v||_0h, |v|_1h, ||grad_w v||) of a WG vector.

    ||v||_0h^2 = sum_K |K| v_0^2 + h_K sum_F |F| (v_0 - v_b)^2,
    |v|_1h^2   = sum_K h_K^{-1} sum_F |F| (v_0 - v_b)^2,
    and the weak-gradient norm is the plain L2 norm of grad_w v.
    """
    v0 = v.interior_values()
    vb = v.facet_values()[mesh.cell_facets]          # (nc, d+1)
    areas = mesh.facet_areas[mesh.cell_facets]
    h = mesh.cell_diameters
    jump2 = (areas * (v0[:, None] - vb) ** 2).sum(axis=1)
    n0 = (mesh.cell_volumes * v0 ** 2 + h * jump2).sum()
    s1 = (jump2 / h).sum()
    pts = mesh.vertices[mesh.cells]
    G, mdiag, _, _ = _wg_batch(pts)
    u_loc = np.concatenate([v0[:, None], vb], axis=1)
    coeffs = np.einsum("nij,nj->ni", G, u_loc)
    wg = (mdiag * coeffs ** 2).sum()
    return np.sqrt(n0), np.sqrt(s1), np.sqrt(wg)


def apply_manufactured(mesh, layout, u, f, quad_order=4):
    """Package manufactured-solution data for a convergence run.

    u is the exact solution, f its analytically derived load.  Returns
    (f, dirichlet, qh_u): the first two feed straight into assemble, and
    qh_u is the WG projection of u (cell and facet averages), the quantity
    the a-priori error bounds are stated against.
    """
    cell_avg = _cell_integrals(mesh, u, quad_order) / mesh.cell_volumes
    all_facets = np.arange(mesh.n_facets)
    fac_avg = _facet_averages(mesh, all_facets, u, quad_order)
    values = np.empty(layout.n_dofs)
    free = layout.facet_dof_of_facet >= 0
    values[layout.facet_dof_of_facet[free]] = fac_avg[free]
    values[layout.interior_slice()] = cell_avg
    qh_u = WgVector(values, fac_avg[layout.dirichlet_facets], layout)
    return f, u, qh_u


def export_matrix(path, A):
    """Matrix-market coordinate text dump (debugging aid)."""
    from scipy.io import mmwrite
    mmwrite(path, sp.coo_matrix(A))
