import numpy as np
import pytest

from facecap.mesh import TriMesh, make_icosphere
from facecap.synth import build_toy_head


@pytest.fixture(scope="session")
def icosphere():
    return make_icosphere(subdivisions=2)


@pytest.fixture(scope="session")
def toy_head():
    return build_toy_head()


@pytest.fixture
def quad_mesh():
    """Unit square in z=0, two CCW triangles."""
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return TriMesh(verts, faces)


@pytest.fixture
def grid_mesh():
    """5x5 flat grid in z=0 with consistent CCW winding."""
    n = 5
    xs, ys = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float))
    verts = np.stack([xs.ravel(), ys.ravel(), np.zeros(n * n)], axis=1)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            faces.append([a, a + 1, a + n])
            faces.append([a + 1, a + n + 1, a + n])
    return TriMesh(verts, np.array(faces))
