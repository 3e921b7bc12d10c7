"""Weak Galerkin kernel: local weak gradients against a symbolic oracle,
local stiffness closed forms vs quadrature, global assembly, boundary
conditions, discrete norms, and manufactured solutions."""

import numpy as np
import pytest
import scipy.sparse.linalg as spla
import sympy

from wg_auxmg.mesh import (DIRICHLET, NEUMANN, SimplicialMesh,
                           build_hierarchy, classify_boundary)
from wg_auxmg.quadrature import map_to_cells, simplex_rule
from wg_auxmg.wg_core import (CoefficientField, WgVector, apply_manufactured,
                              assemble, build_layout, discrete_norms,
                              export_matrix, local_stiffness,
                              local_weak_gradient)

REF_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def random_cell(dim, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    for _ in range(50):
        pts = rng.uniform(-1, 1, (dim + 1, dim)) * scale
        vol = np.linalg.det(pts[1:] - pts[0])
        if abs(vol) > 0.05 * scale ** dim:
            return pts
    raise AssertionError("could not draw a nondegenerate cell")


# -- symbolic oracle for the reference triangle ------------------------------


def _sympy_reference_wg():
    """Solve the RT0 mass systems for every local dof symbolically:
    basis {(1,0), (0,1), x - x_c}; rhs from exact line/area integrals."""
    x, y, t = sympy.symbols("x y t")
    verts = [(sympy.Integer(0), sympy.Integer(0)),
             (sympy.Integer(1), sympy.Integer(0)),
             (sympy.Integer(0), sympy.Integer(1))]
    xc = (sympy.Rational(1, 3), sympy.Rational(1, 3))
    basis = [(sympy.Integer(1), sympy.Integer(0)),
             (sympy.Integer(0), sympy.Integer(1)),
             (x - xc[0], y - xc[1])]

    def tri_int(f):
        return sympy.integrate(sympy.integrate(f, (y, 0, 1 - x)), (x, 0, 1))

    mass = sympy.Matrix(3, 3, lambda i, j: tri_int(
        basis[i][0] * basis[j][0] + basis[i][1] * basis[j][1]))

    cols = []
    # interior dof: rhs_i = -(1, div q_i); div of the radial mode is 2
    cols.append(mass.solve(sympy.Matrix([0, 0, -tri_int(sympy.Integer(2))])))
    for k in range(3):
        a, b = [verts[i] for i in range(3) if i != k]
        xt, yt = a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])
        ex, ey = b[0] - a[0], b[1] - a[1]
        length = sympy.sqrt(ex ** 2 + ey ** 2)
        nx, ny = ey / length, -ex / length
        mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        if (mid[0] - xc[0]) * nx + (mid[1] - xc[1]) * ny < 0:
            nx, ny = -nx, -ny
        rhs = sympy.Matrix([sympy.integrate(
            (q[0].subs({x: xt, y: yt}) * nx
             + q[1].subs({x: xt, y: yt}) * ny) * length, (t, 0, 1))
            for q in basis])
        cols.append(mass.solve(rhs))
    return mass, sympy.Matrix.hstack(*cols)


def test_reference_triangle_against_sympy():
    mass_sym, grad_sym = _sympy_reference_wg()
    assert mass_sym.is_diagonal()
    op = local_weak_gradient(REF_TRI)
    mass_diag = np.array([float(mass_sym[i, i]) for i in range(3)])
    assert np.abs(op.rt0_mass - mass_diag).max() < 1e-15
    assert np.abs(mass_diag - [0.5, 0.5, 1 / 18]).max() < 1e-15
    grad_oracle = np.array(grad_sym.evalf(20)).astype(float)
    assert np.abs(op.gradient - grad_oracle).max() < 1e-12


def test_single_edge_dof_column():
    # v_b = 1 on the hypotenuse only: constant part of the weak gradient is
    # the outward vector area over the cell measure
    op = local_weak_gradient(REF_TRI)
    col = op.gradient[:, 1]  # facet opposite vertex 0
    assert np.allclose(col, [2.0, 2.0, 6.0], atol=1e-13)


def test_rt0_mass_vs_quadrature_3d():
    # closed-form radial-mode mass entry against direct quadrature
    for seed in range(5):
        pts = random_cell(3, seed)
        op = local_weak_gradient(pts)
        ref_pts, ref_wts = simplex_rule(3, 2)
        qp, qw = map_to_cells(ref_pts, ref_wts, pts[None])
        xc = pts.mean(axis=0)
        want = float((qw[0] * ((qp[0] - xc) ** 2).sum(axis=1)).sum())
        assert abs(op.rt0_mass[-1] - want) < 1e-13 * max(1, abs(want))


@pytest.mark.parametrize("dim", [2, 3])
def test_weak_gradient_kernel(dim):
    # constant dof vector maps to the zero RT0 vector
    for seed in range(20):
        pts = random_cell(dim, seed)
        op = local_weak_gradient(pts)
        const = np.ones(dim + 2)
        assert np.abs(op.gradient @ const).max() < 1e-13


@pytest.mark.parametrize("dim", [2, 3])
def test_commuting_identity(dim):
    # averaged inputs of a linear function reproduce its gradient exactly
    rng = np.random.default_rng(3 + dim)
    for seed in range(20):
        pts = random_cell(dim, seed)
        g = rng.standard_normal(dim)
        c = rng.standard_normal()
        xc = pts.mean(axis=0)
        dofs = np.empty(dim + 2)
        dofs[0] = g @ xc + c
        for k in range(dim + 1):
            fmid = (pts.sum(axis=0) - pts[k]) / dim
            dofs[1 + k] = g @ fmid + c
        op = local_weak_gradient(pts)
        coeffs = op.gradient @ dofs
        assert np.abs(coeffs[:dim] - g).max() < 1e-12
        assert abs(coeffs[dim]) < 1e-12


def test_degenerate_cell_rejected():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(ValueError):
        local_weak_gradient(pts)


# -- local stiffness ---------------------------------------------------------


@pytest.mark.parametrize("dim", [2, 3])
def test_local_stiffness_symmetric_psd_kernel(dim):
    for seed in range(10):
        pts = random_cell(dim, seed)
        loc = local_stiffness(pts)
        assert np.abs(loc - loc.T).max() < 1e-12
        w = np.linalg.eigvalsh(loc)
        assert w[0] > -1e-12
        assert np.abs(loc @ np.ones(dim + 2)).max() < 1e-12
        # exactly one zero eigenvalue (the constants)
        assert w[1] > 1e-10


def test_local_stiffness_scalar_scaling():
    pts = random_cell(2, 11)
    base = local_stiffness(pts)
    scaled = local_stiffness(pts, CoefficientField.constant(3.5, 2))
    assert np.abs(scaled - 3.5 * base).max() < 1e-12


def test_local_stiffness_matrix_coefficient_vs_quadrature():
    mat = np.array([[2.0, 0.3], [0.3, 1.0]])
    for seed in range(5):
        pts = random_cell(2, 100 + seed)
        closed = local_stiffness(pts, CoefficientField.constant(mat, 2))
        smooth = CoefficientField.smooth(
            lambda p: np.broadcast_to(mat, (len(p), 2, 2)), 2, scalar=False)
        quad = local_stiffness(pts, smooth, quad_order=4)
        assert np.abs(closed - quad).max() < 1e-11


def test_oscillatory_coefficient_order8_oracle():
    # small cell so the order-4 rule resolves the 10*pi oscillation
    coeff = CoefficientField.smooth(
        lambda p: 2.0 * (2.0 + np.sin(10 * np.pi * p[:, 0])
                         * np.sin(10 * np.pi * p[:, 1])), 2, scalar=True)
    s = 1.0 / 4096.0
    base = np.array([0.31, 0.47])
    pts = np.vstack([base, base + [s, 0], base + [0, s]])
    a4 = local_stiffness(pts, coeff, quad_order=4)
    a8 = local_stiffness(pts, coeff, quad_order=8)
    assert np.abs(a4 - a8).max() / np.abs(a8).max() < 1e-8


def test_indefinite_coefficient_rejected():
    bad = CoefficientField.smooth(
        lambda p: np.broadcast_to(np.diag([1.0, -1.0]), (len(p), 2, 2)),
        2, scalar=False)
    with pytest.raises(ValueError):
        local_stiffness(random_cell(2, 0), bad, quad_order=2)


def test_per_region_needs_mesh_context():
    coeff = CoefficientField.per_region({1: 1.0}, dim=2)
    with pytest.raises(ValueError):
        local_stiffness(random_cell(2, 0), coeff)


# -- coefficient fields ------------------------------------------------------


def test_coefficient_constant_matrix_forms():
    c = CoefficientField.constant(2.0, 2)
    pts = np.zeros((3, 2))
    assert c.scalar and np.allclose(c(pts), 2.0)
    m = CoefficientField.constant(np.diag([1.0, 4.0]), 2)
    assert np.allclose(m(pts)[0], np.diag([1.0, 4.0]))


def test_coefficient_validation():
    with pytest.raises(ValueError):
        CoefficientField.constant(-1.0, 2)
    with pytest.raises(ValueError):
        CoefficientField.constant(np.array([[1.0, 2.0], [0.0, 1.0]]), 2)


def test_per_region_lookup():
    from wg_auxmg.bench import generate_domain
    dom = generate_domain("jump-cube", {"eps": 1e-3})
    vals = dom.coeff.cell_values(dom.mesh)
    want = np.where(dom.mesh.cell_region == 3, 1e-3, 1.0)
    assert np.allclose(vals, want)


def test_per_region_unknown_region():
    coeff = CoefficientField.per_region({1: 1.0}, dim=2)
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = SimplicialMesh(verts, [[0, 1, 2]], cell_region=[2])
    with pytest.raises((KeyError, ValueError)):
        coeff.cell_values(mesh)


# -- assembly ----------------------------------------------------------------


def test_assembly_symmetry(square_hier, cube_hier):
    for mesh in (square_hier.levels[2], cube_hier.levels[1]):
        sysm = assemble(mesh, f=1.0, dirichlet=0.0)
        diff = (sysm.A - sysm.A.T).tocoo()
        asym = np.abs(diff.data).max() if diff.nnz else 0.0
        assert asym < 1e-12


def test_zero_data_zero_solution(square_hier):
    sysm = assemble(square_hier.levels[1], f=0.0, dirichlet=0.0)
    assert np.abs(sysm.b).max() == 0.0


def test_pure_neumann_constant_kernel():
    from wg_auxmg.mesh import refine_uniform
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    mesh = SimplicialMesh(verts, [[0, 1, 2], [0, 2, 3]])
    classify_boundary(mesh, lambda x: (NEUMANN, 0))
    mesh, _ = refine_uniform(mesh)
    sysm = assemble(mesh, f=0.0)
    ones = np.ones(sysm.A.shape[0])
    assert np.abs(sysm.A @ ones).max() < 1e-12


def test_constant_dirichlet_gives_constant_solution(square_hier):
    sysm = assemble(square_hier.levels[2], f=0.0, dirichlet=1.0)
    u = spla.spsolve(sysm.A.tocsc(), sysm.b)
    assert np.abs(u - 1.0).max() < 1e-11


def test_linear_exactness_mixed_bc():
    # u = x solves the Laplace problem with unit flux on the right edge
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    mesh = SimplicialMesh(verts, [[0, 1, 2], [0, 2, 3]])

    def marker(x):
        if abs(x[0]) < 1e-12:
            return (DIRICHLET, 0)
        if abs(x[0] - 1.0) < 1e-12:
            return (NEUMANN, 1)
        return (NEUMANN, 0)

    classify_boundary(mesh, marker)
    hier = build_hierarchy(mesh, 3)
    fine = hier.levels[-1]
    layout = build_layout(fine)
    sysm = assemble(fine, layout=layout, f=0.0,
                    dirichlet=0.0, neumann={0: 0.0, 1: 1.0})
    u = spla.spsolve(sysm.A.tocsc(), sysm.b)
    exact = lambda p: p[:, 0]
    _, _, qh = apply_manufactured(fine, layout, exact, lambda p: 0 * p[:, 0])
    assert np.abs(u - qh.values).max() < 1e-10


def test_linear_exactness_dirichlet(square_hier):
    exact = lambda p: 1.0 + 2.0 * p[:, 0] - 3.0 * p[:, 1]
    mesh = square_hier.levels[2]
    layout = build_layout(mesh)
    f, diri, qh = apply_manufactured(mesh, layout, exact,
                                     lambda p: 0 * p[:, 0])
    sysm = assemble(mesh, layout=layout, f=f, dirichlet=diri)
    u = spla.spsolve(sysm.A.tocsc(), sysm.b)
    assert np.abs(u - qh.values).max() < 1e-10


def test_worker_count_determinism(square_hier, monkeypatch):
    mesh = square_hier.levels[3]
    a1 = assemble(mesh, f=1.0, dirichlet=0.0, workers=1)
    a4 = assemble(mesh, f=1.0, dirichlet=0.0, workers=4)
    assert np.array_equal(a1.A.data, a4.A.data)
    assert np.array_equal(a1.A.indices, a4.A.indices)
    assert np.array_equal(a1.b, a4.b)


def test_unclassified_mesh_rejected():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = SimplicialMesh(verts, [[0, 1, 2]])
    with pytest.raises(ValueError):
        build_layout(mesh)


def test_layout_counts(square_mesh):
    layout = build_layout(square_mesh)
    assert layout.n_interior_dofs == 2
    assert layout.n_facet_dofs == 1      # single interior edge
    assert layout.n_dofs == 3
    assert len(layout.dirichlet_facets) == 4


def test_export_matrix_round_trip(square_mesh, tmp_path):
    import scipy.io
    sysm = assemble(square_mesh, f=1.0, dirichlet=0.0)
    path = tmp_path / "mat.mtx"
    export_matrix(path, sysm.A)
    back = scipy.io.mmread(path).tocsr()
    assert np.abs((back - sysm.A).toarray()).max() < 1e-15


# -- discrete norms ----------------------------------------------------------


def test_norms_zero_vector(square_mesh):
    layout = build_layout(square_mesh)
    v = WgVector(np.zeros(layout.n_dofs), np.zeros(4), layout)
    assert discrete_norms(v, square_mesh) == (0.0, 0.0, 0.0)


def test_norms_constant_neumann():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    mesh = SimplicialMesh(verts, [[0, 1, 2], [0, 2, 3]])
    classify_boundary(mesh, lambda x: (NEUMANN, 0))
    layout = build_layout(mesh)
    v = WgVector(np.full(layout.n_dofs, 2.5), np.zeros(0), layout)
    n0, s1, wg = discrete_norms(v, mesh)
    assert s1 < 1e-14 and wg < 1e-14
    assert n0 > 0


def test_poincare_and_inverse_bounds(square_hier):
    # min ||grad_w v|| / ||v||_0h over random v bounded below uniformly;
    # max with an extra h factor bounded above uniformly
    rng = np.random.default_rng(7)
    for l in range(1, 4):
        mesh = square_hier.levels[l]
        layout = build_layout(mesh)
        h = mesh.cell_diameters.max()
        ratios = []
        for _ in range(20):
            v = WgVector(rng.standard_normal(layout.n_dofs),
                         np.zeros(len(layout.dirichlet_facets)), layout)
            n0, _, wg = discrete_norms(v, mesh)
            ratios.append(wg / n0)
        assert min(ratios) > 1.0
        assert max(ratios) * h < 3.5


def test_norm_equivalence_stable(square_hier):
    # ||grad_w v|| and the jump seminorm are equivalent with constants
    # that do not drift under refinement
    rng = np.random.default_rng(11)
    extremes = []
    for l in range(1, 4):
        mesh = square_hier.levels[l]
        layout = build_layout(mesh)
        ratios = []
        for _ in range(20):
            v = WgVector(rng.standard_normal(layout.n_dofs),
                         np.zeros(len(layout.dirichlet_facets)), layout)
            _, s1, wg = discrete_norms(v, mesh)
            ratios.append(wg / s1)
        assert 1.5 < min(ratios) and max(ratios) < 3.5
        extremes.append((min(ratios), max(ratios)))
    for lo, hi in extremes[1:]:
        assert abs(lo - extremes[0][0]) < 0.2 * extremes[0][0]
        assert abs(hi - extremes[0][1]) < 0.2 * extremes[0][1]


def test_condition_growth_per_level_dense():
    # kappa(A) grows by ~4x per 2D refinement (dense eigensolve oracle)
    from wg_auxmg.bench import generate_domain
    dom = generate_domain("lshape")
    hier = build_hierarchy(dom.mesh, 4)
    kappas = []
    for mesh in hier.levels:
        sysm = assemble(mesh, f=1.0, dirichlet=0.0)
        w = np.linalg.eigvalsh(sysm.A.toarray())
        kappas.append(w[-1] / w[0])
    for a, b in zip(kappas, kappas[1:]):
        assert 3.0 < b / a < 5.5


# -- manufactured solutions --------------------------------------------------


def test_manufactured_projection_values(square_mesh):
    layout = build_layout(square_mesh)
    exact = lambda p: p[:, 0] ** 2
    _, _, qh = apply_manufactured(square_mesh, layout, exact,
                                  lambda p: -2.0 + 0 * p[:, 0])
    # interior dofs hold cell averages of x^2 (order-4 quadrature is exact)
    cells = square_mesh.cells
    for c in range(2):
        pts = square_mesh.vertices[cells[c]]
        ref_pts, ref_wts = simplex_rule(2, 4)
        qp, qw = map_to_cells(ref_pts, ref_wts, pts[None])
        want = float((qw[0] * qp[0, :, 0] ** 2).sum()) \
            / square_mesh.cell_volumes[c]
        got = qh.values[layout.interior_dof_of_cell[c]]
        assert abs(got - want) < 1e-13
