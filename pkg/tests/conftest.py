import numpy as np
import pytest

from polyrefine import geometry


def lshape_prism():
    """Unit cube minus the column [0.5,1] x [0.5,1] x [0,1].

    L-shaped cross-section extruded along z; non-convex, watertight.
    """
    pts2d = [(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)]
    bottom = [(x, y, 0.0) for x, y in pts2d]
    top = [(x, y, 1.0) for x, y in pts2d]
    verts = np.array(bottom + top)
    n = len(pts2d)
    faces = [tuple(range(n - 1, -1, -1)), tuple(range(n, 2 * n))]
    for k in range(n):
        a, b = k, (k + 1) % n
        faces.append((a, b, b + n, a + n))
    return geometry.Polyhedron(verts, faces)


def lshape_inside(pts):
    """Membership oracle for lshape_prism straight from its definition."""
    pts = np.atleast_2d(pts)
    in_cube = ((pts >= 0) & (pts <= 1)).all(axis=1)
    in_notch = (pts[:, 0] > 0.5) & (pts[:, 1] > 0.5)
    return in_cube & ~in_notch


def dented_cube(apex_z=0.3):
    """Unit cube with a pyramidal dent pressed into the top face.

    The dent has square mouth [0.25,0.75]^2 at z=1 and its apex at
    (0.5, 0.5, apex_z); genus 0.
    """
    verts = [
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],      # 0-3 bottom
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],      # 4-7 top outer
        [0.25, 0.25, 1], [0.75, 0.25, 1],                # 8-9 mouth
        [0.75, 0.75, 1], [0.25, 0.75, 1],                # 10-11 mouth
        [0.5, 0.5, apex_z],                              # 12 apex
    ]
    faces = [
        (0, 3, 2, 1),                                    # bottom
        (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7),
        (4, 5, 9, 8), (5, 6, 10, 9), (6, 7, 11, 10), (7, 4, 8, 11),
        (8, 9, 12), (9, 10, 12), (10, 11, 12), (11, 8, 12),
    ]
    return geometry.Polyhedron(np.array(verts, dtype=float), faces)


def random_convex(rng, n_points=12, scale=1.0, center=(0.0, 0.0, 0.0)):
    """Convex hull of random points in a ball; always a valid polyhedron."""
    while True:
        pts = rng.normal(size=(n_points, 3))
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        pts = pts * rng.uniform(0.3, 1.0, size=(n_points, 1))
        try:
            hull = geometry.convex_hull(pts * scale + np.asarray(center))
        except geometry.DegenerateHullError:
            continue
        return hull


def random_interior_plane(rng, p):
    """A random plane through a point strictly inside p."""
    w = rng.dirichlet(np.ones(p.n_vertices))
    origin = w @ p.vertices
    n = rng.normal(size=3)
    return geometry.CuttingPlane(origin, n / np.linalg.norm(n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
