import numpy as np
import pytest

from fluxrec import assemble_stiffness
from fluxrec.experiments import desk_annulus_mesh, iter_like_mesh
from fluxrec.mesh import OUTER, Mesh, circle_loop, generate_annulus_mesh


@pytest.fixture(scope="session")
def desk_mesh():
    return desk_annulus_mesh()


@pytest.fixture(scope="session")
def desk_A(desk_mesh):
    return assemble_stiffness(desk_mesh)


@pytest.fixture(scope="session")
def iter_mesh():
    return iter_like_mesh()


@pytest.fixture(scope="session")
def iter_A(iter_mesh):
    return assemble_stiffness(iter_mesh)


@pytest.fixture(scope="session")
def wide_mesh():
    """Third annulus geometry: concentric circles, radii 3.0 / 1.5."""
    return generate_annulus_mesh(circle_loop(6.0, 0.0, 3.0, 60),
                                 circle_loop(6.0, 0.0, 1.5, 30), 0.35)


@pytest.fixture(scope="session")
def wide_A(wide_mesh):
    return assemble_stiffness(wide_mesh)


def build_square_mesh(n: int = 10, r0: float = 1.0, size: float = 1.0) -> Mesh:
    """Structured single-boundary mesh of [r0, r0+size] x [0, size]."""
    xs = np.linspace(r0, r0 + size, n + 1)
    ys = np.linspace(0.0, size, n + 1)
    nodes = np.array([(x, y) for y in ys for x in xs])
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b = a + 1
            c = a + (n + 1)
            d = c + 1
            tris.append((a, b, d))
            tris.append((a, d, c))
    edges, labels = [], []
    for i in range(n):
        edges.append((i, i + 1))
        edges.append((n * (n + 1) + i + 1, n * (n + 1) + i))
    for j in range(n):
        edges.append(((j + 1) * (n + 1) - 1, (j + 2) * (n + 1) - 1))
        edges.append(((j + 1) * (n + 1), j * (n + 1)))
    labels = [OUTER] * len(edges)
    return Mesh(nodes, np.array(tris), np.array(edges), np.array(labels))


def strip_mesh() -> Mesh:
    """Minimal 4-node, 2-triangle strip with a single outer loop."""
    nodes = np.array([[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    edges = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    labels = np.array([OUTER] * 4)
    return Mesh(nodes, tris, edges, labels)
