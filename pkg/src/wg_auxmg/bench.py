"""Benchmark domains and experiment drivers.

Five built-in iteration-count experiments (disk, osc-square, lshape, cube,
jump-cube) plus manufactured-solution convergence studies on the unit
square.  Each experiment refines a coarse mesh, assembles the WG system
(optionally Schur-reduced), builds the auxiliary-space preconditioner, and
runs PCG to a relative residual of 1e-8, reporting dofs, steps, wall time
and a condition-number estimate per level.

Load/boundary choices that the iteration counts do not depend on (f = 1,
homogeneous Dirichlet) are the defaults for the domains whose literature
source leaves them open; jump-cube drives a unit potential difference
across the x faces with insulated walls elsewhere.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from wg_auxmg.mesh import (DIRICHLET, NEUMANN, MeshHierarchy, SimplicialMesh,
                           build_hierarchy, classify_boundary)
from wg_auxmg.mg_aux import AuxPreconditioner, PreconditionerConfig, \
    build_p1_hierarchy
from wg_auxmg.reduction import recover_interior, schur_complement, split_blocks
from wg_auxmg.solver import pcg
from wg_auxmg.transfer import aux_matrix, build_pi, build_pi_b
from wg_auxmg.wg_core import CoefficientField, WgVector, apply_manufactured, \
    assemble, build_layout, discrete_norms

__all__ = ["Domain", "ExperimentConfig", "ReportRow", "generate_domain",
           "run_experiment", "mms_convergence", "emit_report",
           "EXAMPLES", "MMS_EXAMPLES"]


@dataclass
class Domain:
    """Everything an experiment needs: classified coarse mesh, coefficient,
    data, and an optional boundary snap hook for curved domains."""
    name: str
    mesh: SimplicialMesh
    coeff: CoefficientField
    f: object = None
    dirichlet: object = None
    neumann: object = None
    snap: Optional[Callable] = None
    exact: Optional[Callable] = None


def _structured_square(n, lo=0.0, hi=1.0):
    """n x n grid of squares on [lo,hi]^2, each split along the up diagonal."""
    s = np.linspace(lo, hi, n + 1)
    xx, yy = np.meshgrid(s, s, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel()])
    vid = lambda i, j: i * (n + 1) + j
    cells = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            cells.append([v00, v10, v11])
            cells.append([v00, v11, v01])
    return verts, cells


def _kuhn_cube_grid(n, lo=-1.0, hi=1.0):
    """n^3 cubes on [lo,hi]^3, each split into 6 tets sharing the main
    diagonal; neighboring cubes match, so the mesh is conforming."""
    s = np.linspace(lo, hi, n + 1)
    verts = np.array([[x, y, z] for x in s for y in s for z in s])
    m = n + 1
    vid = lambda i, j, k: (i * m + j) * m + k
    paths = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    cells = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                base = np.array([i, j, k])
                for perm in paths:
                    walk = [base.copy()]
                    for axis in perm:
                        nxt = walk[-1].copy()
                        nxt[axis] += 1
                        walk.append(nxt)
                    cells.append([vid(*p) for p in walk])
    return verts, cells


def _disk_domain(_params):
    ang = 2 * np.pi * np.arange(8) / 8
    verts = np.vstack([[0.0, 0.0],
                       np.column_stack([np.cos(ang), np.sin(ang)])])
    cells = [[0, 1 + i, 1 + (i + 1) % 8] for i in range(8)]
    mesh = classify_boundary(SimplicialMesh(verts, cells))

    def snap(x):
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    return Domain("disk", mesh, CoefficientField.constant(1.0, 2),
                  f=1.0, dirichlet=0.0, snap=snap)


def _osc_coefficient():
    def a(p):
        return 2.0 * (2.0 + np.sin(10 * np.pi * p[:, 0])
                      * np.sin(10 * np.pi * p[:, 1]))
    return CoefficientField.smooth(a, 2, scalar=True, bounds=(2.0, 6.0))


def _osc_square_domain(_params):
    verts, cells = _structured_square(4)
    mesh = classify_boundary(SimplicialMesh(verts, cells))
    return Domain("osc-square", mesh, _osc_coefficient(), f=1.0, dirichlet=0.0)


def _lshape_domain(_params):
    verts = np.array([[-1, -1], [0, -1], [-1, 0], [0, 0], [1, 0],
                      [-1, 1], [0, 1], [1, 1]], dtype=float)
    cells = [[0, 1, 3], [0, 3, 2],
             [2, 3, 6], [2, 6, 5],
             [3, 4, 7], [3, 7, 6]]
    mesh = classify_boundary(SimplicialMesh(verts, cells))
    return Domain("lshape", mesh, CoefficientField.constant(1.0, 2),
                  f=1.0, dirichlet=0.0)


def _cube_domain(_params):
    verts, cells = _kuhn_cube_grid(1)
    mesh = classify_boundary(SimplicialMesh(verts, cells))
    return Domain("cube", mesh, CoefficientField.constant(1.0, 3),
                  f=1.0, dirichlet=0.0)


def _jump_cube_domain(params):
    eps = float(params.get("eps", 1e-4))
    if eps <= 0:
        raise ValueError("eps must be positive")
    verts, cells = _kuhn_cube_grid(4)
    mesh = SimplicialMesh(verts, cells)
    xc = mesh.cell_centroids
    inside1 = np.all((xc > -0.5) & (xc < 0.0), axis=1)
    inside2 = np.all((xc > 0.0) & (xc < 0.5), axis=1)
    region = np.where(inside1, 1, np.where(inside2, 2, 3))
    mesh = SimplicialMesh(verts, cells, cell_region=region)

    def marker(x):
        if abs(x[0] + 1.0) < 1e-12:
            return (DIRICHLET, 0)
        if abs(x[0] - 1.0) < 1e-12:
            return (DIRICHLET, 1)
        return (NEUMANN, 0)

    classify_boundary(mesh, marker)
    coeff = CoefficientField.per_region({1: 1.0, 2: 1.0, 3: eps}, dim=3)
    return Domain("jump-cube", mesh, coeff, f=1.0,
                  dirichlet={0: 0.0, 1: 1.0}, neumann=None)


def _mms_exact(p):
    return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


def _mms_domain(_params):
    verts, cells = _structured_square(1)
    mesh = classify_boundary(SimplicialMesh(verts, cells))

    def f(p):
        return 2 * np.pi ** 2 * _mms_exact(p)

    return Domain("mms", mesh, CoefficientField.constant(1.0, 2),
                  f=f, dirichlet=_mms_exact, exact=_mms_exact)


def _mms_osc_domain(_params):
    verts, cells = _structured_square(4)
    mesh = classify_boundary(SimplicialMesh(verts, cells))

    def f(p):
        x, y = p[:, 0], p[:, 1]
        a = 2.0 * (2.0 + np.sin(10 * np.pi * x) * np.sin(10 * np.pi * y))
        graddot = (np.cos(10 * np.pi * x) * np.sin(10 * np.pi * y)
                   * np.cos(np.pi * x) * np.sin(np.pi * y)
                   + np.sin(10 * np.pi * x) * np.cos(10 * np.pi * y)
                   * np.sin(np.pi * x) * np.cos(np.pi * y))
        return 2 * np.pi ** 2 * a * _mms_exact(p) - 20 * np.pi ** 2 * graddot

    return Domain("mms-osc", mesh, _osc_coefficient(),
                  f=f, dirichlet=_mms_exact, exact=_mms_exact)


EXAMPLES = {
    "disk": _disk_domain,
    "osc-square": _osc_square_domain,
    "lshape": _lshape_domain,
    "cube": _cube_domain,
    "jump-cube": _jump_cube_domain,
}
MMS_EXAMPLES = {"mms": _mms_domain, "mms-osc": _mms_osc_domain}


def generate_domain(name, params=None):
    params = params or {}
    table = {**EXAMPLES, **MMS_EXAMPLES}
    if name not in table:
        raise ValueError(f"unknown example {name!r}; "
                         f"choose from {sorted(table)}")
    return table[name](params)


# -- experiment driver -------------------------------------------------------


@dataclass
class ExperimentConfig:
    example: str
    levels: int = 4
    system: str = "full"            # "full" | "reduced"
    mode: str = "multiplicative"    # "multiplicative" | "additive"
    eps: float = 1e-4               # jump-cube contrast
    tol: float = 1e-8
    maxit: int = 500
    seed: int = 0
    workers: Optional[int] = None
    validate: bool = True           # full-vs-reduced check on 2 coarsest levels

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be at least 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.system not in ("full", "reduced"):
            raise ValueError(f"unknown system {self.system!r}")
        if self.mode not in ("multiplicative", "additive"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class ReportRow:
    level: int
    dof: int
    steps: int
    kappa: float
    time: float
    converged: bool = True
    config: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"level": self.level, "dof": self.dof, "steps": self.steps,
               "kappa": self.kappa, "time": self.time,
               "converged": self.converged}
        out.update(self.config)
        return out


def _cross_validate(sysm, tol=1e-8):
    """Direct full solve vs Schur solve + interior recovery, compared in
    the energy norm; the reduction must be algebraically transparent."""
    u_full = spla.spsolve(sysm.A.tocsc(), sysm.b)
    blocks = split_blocks(sysm)
    sch = schur_complement(blocks)
    if sch.S.shape[0]:
        u_b = spla.spsolve(sch.S.tocsc(), sch.g)
    else:
        u_b = np.zeros(0)
    u_red = np.concatenate([u_b, recover_interior(u_b, blocks)])
    diff = u_red - u_full
    num = math.sqrt(max(0.0, float(diff @ (sysm.A @ diff))))
    den = math.sqrt(max(float(u_full @ (sysm.A @ u_full)), 1e-30))
    rel = num / den
    if rel > tol:
        raise RuntimeError(
            f"full and reduced solves disagree: energy error {rel:.2e}")
    return rel


def run_experiment(cfg):
    """Solve one example on every level of its hierarchy; returns ReportRows."""
    dom = generate_domain(cfg.example, {"eps": cfg.eps})
    hierarchy = build_hierarchy(dom.mesh, cfg.levels, snap=dom.snap)
    pcfg = PreconditionerConfig(mode=cfg.mode)
    echo = {"example": cfg.example, "system": cfg.system, "mode": cfg.mode,
            "eps": cfg.eps, "tol": cfg.tol}
    rows = []
    for l, mesh in enumerate(hierarchy.levels):
        sub = MeshHierarchy(hierarchy.levels[:l + 1],
                            hierarchy.midpoint_edges[:l + 1])
        sysm = assemble(mesh, coeff=dom.coeff, f=dom.f,
                        dirichlet=dom.dirichlet, neumann=dom.neumann,
                        workers=cfg.workers)
        if cfg.system == "reduced":
            sch = schur_complement(split_blocks(sysm))
            op, rhs = sch.S, sch.g
            pi = build_pi_b(mesh, sysm.layout)
        else:
            op, rhs = sysm.A, sysm.b
            pi = build_pi(mesh, sysm.layout)
        hier = build_p1_hierarchy(aux_matrix(op, pi), sub, pcfg)
        precond = AuxPreconditioner(op, pi, hier, pcfg)
        try:
            _, rep = pcg(op, precond.apply, rhs, tol=cfg.tol, maxit=cfg.maxit)
        except RuntimeError as exc:
            raise RuntimeError(
                f"{cfg.example} level {l} ({cfg.system}/{cfg.mode}): {exc}"
            ) from exc
        if cfg.validate and l < 2:
            _cross_validate(sysm)
        rows.append(ReportRow(
            level=l, dof=op.shape[0], steps=rep.iterations,
            kappa=rep.kappa_estimate if rep.kappa_estimate is not None
            else float("nan"),
            time=rep.wall_time_seconds, converged=rep.converged, config=echo))
    return rows


def mms_convergence(cfg):
    """Manufactured-solution error study; returns one dict per level with
    the energy error ||grad_w(Q_h u - u_h)||, the interior L2 error
    ||Q_0 u - u_0||, and the observed log2 rates."""
    dom = generate_domain(cfg.example if cfg.example in MMS_EXAMPLES else "mms")
    hierarchy = build_hierarchy(dom.mesh, cfg.levels)
    rows = []
    for l, mesh in enumerate(hierarchy.levels):
        layout = build_layout(mesh)
        f, diri, qh = apply_manufactured(mesh, layout, dom.exact, dom.f)
        sysm = assemble(mesh, coeff=dom.coeff, f=f, dirichlet=diri)
        u = spla.spsolve(sysm.A.tocsc(), sysm.b)
        diff = WgVector(u - qh.values,
                        np.zeros(len(layout.dirichlet_facets)), layout)
        _, _, energy = discrete_norms(diff, mesh)
        d0 = diff.interior_values()
        l2 = math.sqrt(float((mesh.cell_volumes * d0 ** 2).sum()))
        row = {"level": l, "h": float(mesh.cell_diameters.max()),
               "dof": layout.n_dofs, "energy": energy, "l2": l2,
               "energy_rate": float("nan"), "l2_rate": float("nan")}
        if rows:
            prev = rows[-1]
            if energy > 0 and prev["energy"] > 0:
                row["energy_rate"] = math.log2(prev["energy"] / energy)
            if l2 > 0 and prev["l2"] > 0:
                row["l2_rate"] = math.log2(prev["l2"] / l2)
        rows.append(row)
    return rows


# -- report emission ---------------------------------------------------------


def emit_report(rows, fmt="csv", path=None):
    """Serialize report rows; returns the text and optionally writes it.

    Formats: csv (header dof,steps,time,kappa,level), json (full row
    objects), dat (whitespace table for plotting tools).  Output is
    byte-deterministic for fixed rows.
    """
    if not rows:
        raise ValueError("no rows to report")
    if fmt == "csv":
        lines = ["dof,steps,time,kappa,level"]
        for r in rows:
            lines.append(f"{r.dof},{r.steps},{r.time:.6f},{r.kappa:.6g},{r.level}")
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        text = json.dumps([r.to_dict() for r in rows], indent=2,
                          sort_keys=True) + "\n"
    elif fmt == "dat":
        lines = ["# dof steps time kappa level"]
        for r in rows:
            lines.append(f"{r.dof} {r.steps} {r.time:.6f} {r.kappa:.6g} {r.level}")
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
