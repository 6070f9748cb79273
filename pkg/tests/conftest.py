import numpy as np
import pytest

from varshape.mesh import TriMesh

CUBE_VERTICES = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
], dtype=float)

# outward-wound unit cube, 12 triangles
CUBE_FACES = np.array([
    [0, 3, 2], [0, 2, 1],  # bottom z=0
    [4, 5, 6], [4, 6, 7],  # top z=1
    [0, 1, 5], [0, 5, 4],  # y=0
    [1, 2, 6], [1, 6, 5],  # x=1
    [2, 3, 7], [2, 7, 6],  # y=1
    [3, 0, 4], [3, 4, 7],  # x=0
])


@pytest.fixture
def unit_cube() -> TriMesh:
    return TriMesh(CUBE_VERTICES.copy(), CUBE_FACES.copy())
