import math

import numpy as np
import pytest

from polyrefine import geometry, mesh
from polyrefine.errors import MalformedInputError, RefinementRejectedError


def cube_grid(n):
    m = mesh.Mesh()
    h = 1.0 / n
    for i in range(n):
        for j in range(n):
            for k in range(n):
                lo = np.array([i, j, k]) * h
                m.add_element(geometry.box(lo, lo + h))
    return m


def octants(p):
    lo, hi = geometry.bounding_box(p)
    mid = (lo + hi) / 2
    out = []
    for dx in range(2):
        for dy in range(2):
            for dz in range(2):
                a = np.where([dx, dy, dz], mid, lo)
                b = np.where([dx, dy, dz], hi, mid)
                out.append(geometry.box(a, b))
    return out


def test_mesh_size_cube_grid():
    m = cube_grid(2)
    assert mesh.mesh_size(m) == pytest.approx(math.sqrt(3) / 2, rel=1e-12)


def test_mesh_size_single_tetrahedron():
    m = mesh.Mesh()
    a = 1.0
    m.add_element(geometry.tetrahedron(
        [0, 0, 0], [a, 0, 0], [a / 2, a * math.sqrt(3) / 2, 0],
        [a / 2, a * math.sqrt(3) / 6, a * math.sqrt(2 / 3)]))
    assert mesh.mesh_size(m) == pytest.approx(1.0, rel=1e-12)


def test_mesh_size_empty_mesh_raises():
    with pytest.raises(MalformedInputError):
        mesh.mesh_size(mesh.Mesh())


def test_replace_element_with_octants():
    m = cube_grid(1)
    before = len(m)
    mesh.replace_element(m, 0, octants(m.element(0)))
    assert len(m) == before + 7
    assert 0 not in m.elements
    assert mesh.total_volume(m) == pytest.approx(1.0, rel=1e-9)
    assert all(m.parents[i] == 0 for i in m.ids())


def test_replace_element_rejects_volume_mismatch():
    m = cube_grid(1)
    bad = octants(m.element(0))[:7]
    with pytest.raises(RefinementRejectedError):
        mesh.replace_element(m, 0, bad)


def test_ids_unique_across_lifetime():
    m = cube_grid(2)
    seen = set(m.ids())
    for _ in range(3):
        eid = m.ids()[0]
        mesh.replace_element(m, eid, octants(m.element(eid)))
        new = set(m.ids())
        assert not (new - seen) & seen
        seen |= new


def test_nonmatching_interface_is_preserved():
    # Two unit cubes sharing the x=1 face; refining the left one leaves
    # the right one's single quad face untouched while the refined side
    # now exposes four sub-faces against it.
    m = mesh.Mesh(domain_box=((0, 0, 0), (2, 1, 1)))
    left = m.add_element(geometry.box((0, 0, 0), (1, 1, 1)))
    right = m.add_element(geometry.box((1, 0, 0), (2, 1, 1)))
    right_faces_before = list(m.element(right).faces)
    mesh.replace_element(m, left, octants(m.element(left)))
    assert m.element(right).faces == right_faces_before
    touching = [
        f for p in m if p.id != right
        for f in p.faces
        if np.allclose(p.vertices[list(f)][:, 0], 1.0)
    ]
    assert len(touching) == 4
    assert mesh.total_volume(m) == pytest.approx(2.0, rel=1e-9)


def test_complexity_stats_single_cube():
    stats = mesh.complexity_stats(cube_grid(1))
    assert (stats.n_vertices, stats.n_edges, stats.n_faces,
            stats.n_elements) == (8, 12, 6, 1)


def test_complexity_stats_two_cubes_shared_face():
    m = mesh.Mesh(domain_box=((0, 0, 0), (2, 1, 1)))
    m.add_element(geometry.box((0, 0, 0), (1, 1, 1)))
    m.add_element(geometry.box((1, 0, 0), (2, 1, 1)))
    stats = mesh.complexity_stats(m)
    assert (stats.n_vertices, stats.n_edges, stats.n_faces,
            stats.n_elements) == (12, 20, 11, 2)


def test_complexity_stats_4x4x4_grid():
    # Structured-grid counting: (n+1)^3 vertices, 3n(n+1)^2 edges,
    # 3n^2(n+1) faces, n^3 elements.
    stats = mesh.complexity_stats(cube_grid(4))
    assert (stats.n_vertices, stats.n_edges, stats.n_faces,
            stats.n_elements) == (125, 300, 240, 64)


def test_timings_accumulate_by_label():
    t = mesh.Timings()
    t.add("alpha", 1.0, 2)
    t.add("alpha", 0.5, 1)
    t.add("beta", 2.0, 1)
    assert t.total_seconds == pytest.approx(3.5)
    assert t.total_count == 4
    stats = mesh.complexity_stats(cube_grid(1), t)
    assert stats.total_refine_time == pytest.approx(3.5)
    assert stats.mean_time_per_element == pytest.approx(3.5 / 4)
