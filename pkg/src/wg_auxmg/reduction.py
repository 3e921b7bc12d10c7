"""Static condensation of the WG system.

Because the interior space is piecewise constant, the interior-interior
block A_0 is diagonal (one dof per cell), so the interior unknowns can be
eliminated exactly: the facet unknowns solve the Schur complement

    S u_b = g,   S = A_b - A_b0 A_0^{-1} A_0b,
                 g = f_b - A_b0 A_0^{-1} f_0,

and the interiors are recovered cell by cell afterwards.  S keeps the
sparsity pattern of A_b (facets couple only through shared cells).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["BlockSystem", "SchurSystem", "split_blocks", "schur_complement",
           "recover_interior"]


@dataclass
class BlockSystem:
    A_b: sp.csr_matrix
    A_b0: sp.csr_matrix
    A_0b: sp.csr_matrix
    A_0: np.ndarray        # diagonal entries of the interior block
    f_b: np.ndarray
    f_0: np.ndarray


@dataclass
class SchurSystem:
    S: sp.csr_matrix
    g: np.ndarray


def split_blocks(system, b=None, layout=None):
    """Carve the assembled system into its facet/interior blocks.

    Accepts either an AssembledSystem or (A, b, layout) separately.
    Verifies the layout really is [facet; interior] by checking that the
    interior-interior block came out diagonal and that the off-diagonal
    blocks are transposes of each other.
    """
    if b is None:
        A, b, layout = system.A, system.b, system.layout
    else:
        A = system
    nb = layout.n_facet_dofs
    n = layout.n_dofs
    if A.shape != (n, n):
        raise ValueError("matrix does not match the dof layout")
    A = A.tocsr()
    A_b = A[:nb, :nb].tocsr()
    A_b0 = A[:nb, nb:].tocsr()
    A_0b = A[nb:, :nb].tocsr()
    A_00 = A[nb:, nb:].tocsr()
    off = A_00 - sp.diags(A_00.diagonal())
    if off.nnz and np.abs(off.data).max() > 1e-13 * np.abs(A_00.diagonal()).max():
        raise ValueError("interior block is not diagonal; wrong dof ordering?")
    tdiff = (A_0b - A_b0.T).tocoo()
    if tdiff.nnz and np.abs(tdiff.data).max() > 1e-13 * max(1.0, np.abs(A_0b.data).max()):
        raise ValueError("off-diagonal blocks are not transposes")
    diag = A_00.diagonal()
    if len(diag) and diag.min() <= 0:
        raise ValueError("interior block has a nonpositive diagonal entry")
    return BlockSystem(A_b, A_b0, A_0b, diag, b[:nb].copy(), b[nb:].copy())


def schur_complement(blocks):
    """Explicit sparse Schur complement and reduced right-hand side."""
    if len(blocks.A_0) and blocks.A_0.min() <= 0:
        raise ValueError("interior diagonal must be positive")
    dinv = sp.diags(1.0 / blocks.A_0) if len(blocks.A_0) else sp.csr_matrix((0, 0))
    S = (blocks.A_b - blocks.A_b0 @ dinv @ blocks.A_0b).tocsr()
    S.sum_duplicates()
    g = blocks.f_b - blocks.A_b0 @ (blocks.f_0 / blocks.A_0)
    return SchurSystem(S, g)


def recover_interior(u_b, blocks):
    """Element-wise back substitution for the interior values."""
    return (blocks.f_0 - blocks.A_0b @ u_b) / blocks.A_0
