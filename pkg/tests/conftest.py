import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wg_auxmg.mesh import SimplicialMesh, build_hierarchy, classify_boundary


@pytest.fixture(scope="session")
def square_mesh():
    """Unit square split into 2 triangles, all boundary Dirichlet."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return classify_boundary(SimplicialMesh(verts, [[0, 1, 2], [0, 2, 3]]))


@pytest.fixture(scope="session")
def square_hier(square_mesh):
    return build_hierarchy(square_mesh, 5)


@pytest.fixture(scope="session")
def tet_mesh():
    """Single reference tetrahedron, all boundary Dirichlet."""
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                      [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return classify_boundary(SimplicialMesh(verts, [[0, 1, 2, 3]]))


@pytest.fixture(scope="session")
def cube_hier():
    from wg_auxmg.bench import generate_domain
    return build_hierarchy(generate_domain("cube").mesh, 3)
