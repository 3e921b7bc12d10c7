"""Weak Galerkin diffusion solver with an auxiliary-space multigrid preconditioner.

The package discretizes second-order diffusion with the lowest-order weak
Galerkin element (piecewise-constant interior and facet unknowns coupled
through a Raviart-Thomas weak gradient), optionally eliminates the interior
unknowns through a Schur complement, and solves either system with PCG
preconditioned by a conforming-P1 auxiliary-space multigrid method.
"""

from wg_auxmg.mesh import (
    SimplicialMesh,
    MeshHierarchy,
    refine_uniform,
    build_facets,
    classify_boundary,
    build_hierarchy,
    load_mesh,
    save_mesh,
    INTERIOR,
    DIRICHLET,
    NEUMANN,
)
from wg_auxmg.wg_core import (
    WgDofLayout,
    WgVector,
    CoefficientField,
    AssembledSystem,
    build_layout,
    local_weak_gradient,
    local_stiffness,
    assemble,
    discrete_norms,
    apply_manufactured,
)
from wg_auxmg.reduction import (
    BlockSystem,
    SchurSystem,
    split_blocks,
    schur_complement,
    recover_interior,
)
from wg_auxmg.transfer import build_pi, build_pi_b, aux_matrix, p1_free_vertices
from wg_auxmg.mg_aux import (
    PreconditionerConfig,
    P1Hierarchy,
    SymmetricGaussSeidel,
    build_p1_hierarchy,
    v_cycle,
    AuxPreconditioner,
)
from wg_auxmg.solver import SolveReport, pcg, condition_estimate, lanczos_condition

__version__ = "0.1.0"
