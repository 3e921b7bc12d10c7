"""Simplicial meshes in 2D/3D: facet tables, boundary labels, uniform
refinement, nested hierarchies, and a plain-text exchange format.

Conventions used throughout the package:

* cells are stored with vertex ids ascending, except that the last two ids
  are swapped where needed to keep the signed volume positive;
* cells and facets are ordered lexicographically by their sorted vertex
  ids, so every derived object (dof numbering, assembled matrices) is
  reproducible bit for bit;
* ``cell_facets[c, k]`` is the facet opposite local vertex ``k`` of cell
  ``c``; local operators downstream rely on this opposite-vertex pairing.

Facet labels are a pair of parallel arrays: ``facet_kind`` holds one of
INTERIOR / DIRICHLET / NEUMANN (UNSET marks boundary facets that have not
been classified yet) and ``facet_tag`` an integer tag used to select
boundary data (-1 where no tag applies).
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "INTERIOR", "DIRICHLET", "NEUMANN", "UNSET",
    "SimplicialMesh", "MeshHierarchy",
    "build_facets", "classify_boundary", "refine_uniform", "build_hierarchy",
    "load_mesh", "save_mesh",
]

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2
UNSET = -1

# local vertex pairs spanning the edges of a triangle / tetrahedron
_EDGES = {2: np.array([(0, 1), (0, 2), (1, 2)]),
          3: np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])}

# midpoint-octahedron subdivision templates, indexed by chosen diagonal.
# Local midpoint numbering: 0=m01 1=m02 2=m03 3=m12 4=m13 5=m23; the three
# diagonals are (0,5), (1,4), (2,3); each template lists the four tets
# around one diagonal.
_OCT_TETS = np.array([
    [[0, 5, 1, 2], [0, 5, 2, 4], [0, 5, 4, 3], [0, 5, 3, 1]],
    [[1, 4, 0, 2], [1, 4, 2, 5], [1, 4, 5, 3], [1, 4, 3, 0]],
    [[2, 3, 0, 1], [2, 3, 1, 5], [2, 3, 5, 4], [2, 3, 4, 0]],
])


def _signed_volumes(vertices, cells):
    spans = vertices[cells[:, 1:]] - vertices[cells[:, :1]]
    d = vertices.shape[1]
    return np.linalg.det(spans) / math.factorial(d)


def build_facets(cells):
    """Enumerate the (d-1)-subsimplices of a cell array.

    Returns (facets, facet_cells, cell_facets): facets are sorted vertex
    tuples in lexicographic order; facet_cells holds one or two adjacent
    cell ids (-1 in the second slot on the boundary, lower cell id first);
    cell_facets[c, k] is the facet opposite local vertex k.
    """
    cells = np.asarray(cells, dtype=np.int64)
    nc, nvc = cells.shape
    d = nvc - 1
    keep = [[j for j in range(nvc) if j != k] for k in range(nvc)]
    local = np.stack([cells[:, idx] for idx in keep], axis=1)  # (nc, d+1, d)
    flat = np.sort(local.reshape(-1, d), axis=1)
    facets, inverse, counts = np.unique(
        flat, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(nc, nvc)
    if counts.max(initial=0) > 2:
        raise ValueError("nonmanifold input: a facet is shared by more than two cells")
    facet_cells = np.full((len(facets), 2), -1, dtype=np.int64)
    pos = np.argsort(inverse.ravel(), kind="stable")
    owner = pos // nvc  # cell ids grouped by facet, ascending within groups
    ends = np.cumsum(counts)
    facet_cells[:, 0] = owner[ends - counts]
    shared = counts == 2
    facet_cells[shared, 1] = owner[ends[shared] - 1]
    return facets, facet_cells, inverse


class SimplicialMesh:
    """Conforming triangular or tetrahedral mesh.

    Construction canonicalizes cell orientation and ordering (see module
    docstring), builds the facet table, and initializes boundary labels to
    UNSET.  Instances are treated as immutable once classified; refinement
    returns new meshes.
    """

    def __init__(self, vertices, cells, cell_region=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise ValueError("vertices must be an (nv, 2) or (nv, 3) array")
        self.dim = self.vertices.shape[1]
        cells = np.array(cells, dtype=np.int64, copy=True)
        if cells.ndim != 2 or cells.shape[1] != self.dim + 1:
            raise ValueError(f"cells must be (nc, {self.dim + 1}) for dim {self.dim}")
        if cells.size and (cells.min() < 0 or cells.max() >= len(self.vertices)):
            raise ValueError("cell vertex id out of range")
        cells.sort(axis=1)
        vol = _signed_volumes(self.vertices, cells)
        flip = vol < 0
        cells[np.ix_(flip, [self.dim - 1, self.dim])] = \
            cells[np.ix_(flip, [self.dim, self.dim - 1])]
        if np.any(vol == 0.0):
            raise ValueError("degenerate cell with zero volume")
        order = np.lexsort(cells.T[::-1])
        self.cells = np.ascontiguousarray(cells[order])
        if len(self.cells) > 1 and np.any(
                np.all(np.sort(self.cells, axis=1)[1:] ==
                       np.sort(self.cells, axis=1)[:-1], axis=1)):
            raise ValueError("duplicate cell")
        if cell_region is None:
            self.cell_region = np.zeros(len(self.cells), dtype=np.int64)
        else:
            self.cell_region = np.asarray(cell_region, dtype=np.int64)[order].copy()
        self.facets, self.facet_cells, self.cell_facets = build_facets(self.cells)
        self.facet_kind = np.where(self.facet_cells[:, 1] >= 0, INTERIOR, UNSET)
        self.facet_kind = self.facet_kind.astype(np.int64)
        self.facet_tag = np.full(len(self.facets), -1, dtype=np.int64)

    # -- sizes ---------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_facets(self):
        return len(self.facets)

    @cached_property
    def boundary_facets(self):
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    # -- geometry ------------------------------------------------------------

    @cached_property
    def cell_volumes(self):
        vol = _signed_volumes(self.vertices, self.cells)
        return np.abs(vol)

    @cached_property
    def cell_centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def cell_diameters(self):
        pts = self.vertices[self.cells]  # (nc, d+1, d)
        pairs = _EDGES[self.dim]
        e = pts[:, pairs[:, 0]] - pts[:, pairs[:, 1]]
        return np.sqrt((e ** 2).sum(axis=2)).max(axis=1)

    @cached_property
    def facet_areas(self):
        pts = self.vertices[self.facets]
        if self.dim == 2:
            return np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
        return 0.5 * np.linalg.norm(
            np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0]), axis=1)

    @cached_property
    def facet_centroids(self):
        return self.vertices[self.facets].mean(axis=1)

    def quality(self):
        """Mesh statistics including the shape-regularity ratio."""
        pts = self.vertices[self.cells]
        rhs = 0.5 * ((pts[:, 1:] ** 2).sum(axis=2) - (pts[:, :1] ** 2).sum(axis=2))
        span = pts[:, 1:] - pts[:, :1]
        center = np.linalg.solve(span, rhs[..., None])[..., 0]
        circum = np.linalg.norm(center - pts[:, 0], axis=1)
        surf = self.facet_areas[self.cell_facets].sum(axis=1)
        inradius = self.dim * self.cell_volumes / surf
        return {
            "dim": self.dim,
            "n_vertices": self.n_vertices,
            "n_cells": self.n_cells,
            "n_facets": self.n_facets,
            "n_boundary_facets": len(self.boundary_facets),
            "h_min": float(self.cell_diameters.min()),
            "h_max": float(self.cell_diameters.max()),
            "volume": float(self.cell_volumes.sum()),
            "shape_ratio_max": float((circum / inradius).max()),
        }


def classify_boundary(mesh, marker=None):
    """Assign Dirichlet/Neumann kinds and tags to boundary facets.

    marker is called with each boundary facet centroid (a length-d array)
    and must return a (kind, tag) pair with kind in {DIRICHLET, NEUMANN};
    returning None leaves the facet unclassified, which is an error.  With
    no marker every boundary facet becomes DIRICHLET with tag 0.  Labels
    are set in place and the mesh is returned.
    """
    bnd = mesh.boundary_facets
    if bnd.size == 0:
        raise ValueError("mesh has no boundary facets to classify")
    if marker is None:
        mesh.facet_kind[bnd] = DIRICHLET
        mesh.facet_tag[bnd] = 0
        return mesh
    mids = mesh.facet_centroids[bnd]
    for f, x in zip(bnd, mids):
        res = marker(x)
        if res is None:
            raise ValueError(f"boundary facet {f} at {x} left unclassified")
        kind, tag = res
        if kind not in (DIRICHLET, NEUMANN):
            raise ValueError(f"marker returned invalid kind {kind}")
        mesh.facet_kind[f] = kind
        mesh.facet_tag[f] = tag
    return mesh


def _facet_codes(rows, base):
    code = rows[:, 0].astype(np.int64)
    for j in range(1, rows.shape[1]):
        code = code * base + rows[:, j]
    return code


def _inherit_labels(coarse, fine, edges):
    """Copy facet kind/tag from each coarse facet to the fine facets that
    subdivide it; everything else is interior."""
    nv = coarse.n_vertices
    d = coarse.dim
    # parent vertex pair of every fine vertex: (v, v) for inherited ones
    parents = np.empty((fine.n_vertices, 2), dtype=np.int64)
    parents[:nv, 0] = parents[:nv, 1] = np.arange(nv)
    parents[nv:] = edges
    expanded = np.sort(parents[fine.facets].reshape(fine.n_facets, 2 * d), axis=1)
    first = np.ones_like(expanded, dtype=bool)
    first[:, 1:] = expanded[:, 1:] != expanded[:, :-1]
    narrow = first.sum(axis=1) == d
    cand = expanded[narrow][first[narrow]].reshape(-1, d)
    base = np.int64(max(nv, 2))
    coarse_codes = _facet_codes(coarse.facets, base)  # ascending: facets sorted
    cand_codes = _facet_codes(cand, base)
    pos = np.searchsorted(coarse_codes, cand_codes)
    pos = np.minimum(pos, len(coarse_codes) - 1)
    hit = coarse_codes[pos] == cand_codes
    target = np.flatnonzero(narrow)[hit]
    source = pos[hit]
    fine.facet_kind[:] = INTERIOR
    fine.facet_tag[:] = -1
    fine.facet_kind[target] = coarse.facet_kind[source]
    fine.facet_tag[target] = coarse.facet_tag[source]
    missed = (fine.facet_cells[:, 1] < 0) & (fine.facet_kind == INTERIOR)
    if np.any(missed):
        raise RuntimeError("refinement failed to inherit a boundary label")


def refine_uniform(mesh, snap=None):
    """One sweep of regular refinement: 4 children per triangle, 8 per tet.

    Tetrahedra are split into 4 corner tets plus 4 tets around the shortest
    of the three interior diagonals of the midpoint octahedron (ties broken
    by the lowest global-id pair), which keeps the scheme deterministic and
    the children shape-regular.

    Returns (fine_mesh, midpoint_edges): fine vertex nv + i is the midpoint
    of coarse edge midpoint_edges[i].  Coarse vertices keep their ids.  If
    snap is given it is applied to the coordinates of new vertices that lie
    on the boundary (coarse vertices are never moved).
    """
    if np.any(_signed_volumes(mesh.vertices, mesh.cells) <= 0):
        raise ValueError("refusing to refine a mesh with inverted cells")
    d = mesh.dim
    nv = mesh.n_vertices
    cells = mesh.cells
    pair_local = _EDGES[d]
    pairs = np.sort(cells[:, pair_local].reshape(-1, 2), axis=1)
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    mid = nv + inv.reshape(len(cells), len(pair_local))
    mid_coords = mesh.vertices[edges].mean(axis=1)

    if snap is not None:
        bfac = mesh.facets[mesh.boundary_facets]
        if d == 2:
            bpairs = bfac
        else:
            bpairs = bfac[:, _EDGES[2]].reshape(-1, 2)
        base = np.int64(max(nv, 2))
        on_bnd = np.isin(edges[:, 0] * base + edges[:, 1],
                         bpairs[:, 0] * base + bpairs[:, 1])
        if np.any(on_bnd):
            mid_coords[on_bnd] = snap(mid_coords[on_bnd])

    fine_verts = np.vstack([mesh.vertices, mid_coords])
    if d == 2:
        v0, v1, v2 = cells.T
        m01, m02, m12 = mid.T
        children = np.concatenate([
            np.stack([v0, m01, m02], axis=1),
            np.stack([m01, v1, m12], axis=1),
            np.stack([m02, m12, v2], axis=1),
            np.stack([m01, m12, m02], axis=1),
        ])
        region = np.tile(mesh.cell_region, 4)
    else:
        v = cells.T
        m = mid.T  # m[0]=m01 m[1]=m02 m[2]=m03 m[3]=m12 m[4]=m13 m[5]=m23
        corner = np.concatenate([
            np.stack([v[0], m[0], m[1], m[2]], axis=1),
            np.stack([v[1], m[0], m[3], m[4]], axis=1),
            np.stack([v[2], m[1], m[3], m[5]], axis=1),
            np.stack([v[3], m[2], m[4], m[5]], axis=1),
        ])
        mc = mid_coords[mid - nv]  # (nc, 6, 3)
        diag = np.stack([mc[:, 0] - mc[:, 5],
                         mc[:, 1] - mc[:, 4],
                         mc[:, 2] - mc[:, 3]], axis=1)
        length = (diag ** 2).sum(axis=2)
        low_id = np.stack([np.minimum(m[0], m[5]),
                           np.minimum(m[1], m[4]),
                           np.minimum(m[2], m[3])], axis=1)
        tied = length == length.min(axis=1, keepdims=True)
        choice = np.where(tied, low_id, np.iinfo(np.int64).max).argmin(axis=1)
        local = _OCT_TETS[choice]  # (nc, 4, 4) indices into the 6 midpoints
        octa = mid[np.arange(len(cells))[:, None, None], local].reshape(-1, 4)
        children = np.concatenate([corner, octa])
        region = np.concatenate([np.tile(mesh.cell_region, 4),
                                 np.repeat(mesh.cell_region, 4)])
    fine = SimplicialMesh(fine_verts, children, cell_region=region)
    _inherit_labels(mesh, fine, edges)
    return fine, edges


@dataclass
class MeshHierarchy:
    """Nested meshes from coarse to fine with midpoint parent maps.

    midpoint_edges[l] (l >= 1) maps each vertex of levels[l] that is new at
    level l to its parent edge on level l-1; midpoint_edges[0] is None.
    Vertex ids are nested: levels[l].vertices[:levels[l-1].n_vertices] are
    the level l-1 vertices.
    """
    levels: list
    midpoint_edges: list

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    @property
    def finest(self):
        return self.levels[-1]


def build_hierarchy(coarse, n_levels, snap=None):
    """Refine `coarse` uniformly n_levels - 1 times.

    snap, if given, projects newly created boundary vertices (e.g. onto a
    circle for disk domains) at every refinement step.
    """
    if n_levels < 1:
        raise ValueError("need at least one level")
    levels = [coarse]
    edge_maps = [None]
    for _ in range(n_levels - 1):
        fine, edges = refine_uniform(levels[-1], snap=snap)
        levels.append(fine)
        edge_maps.append(edges)
    return MeshHierarchy(levels, edge_maps)


# -- plain-text format -------------------------------------------------------


def save_mesh(mesh, path):
    """Write the plain-text format: `dim ncells nverts` header, vertex and
    cell lines, then optional `regions` / `boundary` sections.  Floats are
    written with shortest round-trip repr, so load(save(m)) is bit-exact.
    """
    lines = [f"{mesh.dim} {mesh.n_cells} {mesh.n_vertices}"]
    for x in mesh.vertices:
        lines.append(" ".join(repr(float(c)) for c in x))
    for c in mesh.cells:
        lines.append(" ".join(str(int(v)) for v in c))
    if np.any(mesh.cell_region != 0):
        lines.append("regions")
        lines.extend(str(int(r)) for r in mesh.cell_region)
    labeled = np.flatnonzero(mesh.facet_kind > INTERIOR)
    if labeled.size:
        lines.append("boundary")
        for f in labeled:
            ids = " ".join(str(int(v)) for v in mesh.facets[f])
            lines.append(f"{ids} {int(mesh.facet_kind[f])} {int(mesh.facet_tag[f])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path):
    with open(path) as fh:
        tokens = [ln.split() for ln in fh if ln.strip()]
    dim, nc, nverts = (int(t) for t in tokens[0])
    row = 1
    verts = np.array([[float(c) for c in tokens[row + i]] for i in range(nverts)])
    row += nverts
    cells = np.array([[int(c) for c in tokens[row + i]] for i in range(nc)],
                     dtype=np.int64)
    row += nc
    region = None
    labels = []
    while row < len(tokens):
        section = tokens[row][0]
        row += 1
        if section == "regions":
            region = np.array([int(tokens[row + i][0]) for i in range(nc)],
                              dtype=np.int64)
            row += nc
        elif section == "boundary":
            while row < len(tokens) and tokens[row][0] not in ("regions", "boundary"):
                vals = [int(t) for t in tokens[row]]
                labels.append((tuple(sorted(vals[:dim])), vals[dim], vals[dim + 1]))
                row += 1
        else:
            raise ValueError(f"unknown section {section!r} in {path}")
    if verts.shape != (nverts, dim):
        raise ValueError("vertex block does not match header")
    mesh = SimplicialMesh(verts, cells, cell_region=region)
    if labels:
        lookup = {tuple(f): i for i, f in enumerate(mesh.facets.tolist())}
        for key, kind, tag in labels:
            f = lookup.get(key)
            if f is None:
                raise ValueError(f"boundary facet {key} not found in mesh")
            mesh.facet_kind[f] = kind
            mesh.facet_tag[f] = tag
    return mesh
