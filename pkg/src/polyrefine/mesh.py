"""Mesh container: non-overlapping polyhedra covering a box domain.

Refining an element never touches its neighbors, so hanging
(non-matching) faces are first-class citizens; conformity is never
enforced, only bookkept through element provenance.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import MalformedInputError, RefinementRejectedError

# Geometric deduplication tolerance for entity counting in (0,1)^3 domains.
DEDUP_TOL = 1e-9


@dataclass
class ComplexityStats:
    n_vertices: int
    n_edges: int
    n_faces: int
    n_elements: int
    total_refine_time: float = 0.0
    mean_time_per_element: float = 0.0


class Timings:
    """Wall time of refine calls accumulated by strategy label."""

    def __init__(self):
        self.by_label = {}

    def add(self, label: str, seconds: float, count: int = 1):
        entry = self.by_label.setdefault(label, [0.0, 0])
        entry[0] += seconds
        entry[1] += count

    @property
    def total_seconds(self) -> float:
        return sum(v[0] for v in self.by_label.values())

    @property
    def total_count(self) -> int:
        return sum(v[1] for v in self.by_label.values())


class Mesh:
    """Element id -> Polyhedron map with provenance and a step counter.

    Ids are unique across the mesh lifetime; parents are never reused.
    """

    def __init__(self, domain_box=((0, 0, 0), (1, 1, 1))):
        lo, hi = domain_box
        self.domain_box = (geometry.as_point(lo), geometry.as_point(hi))
        self.elements = {}
        self.parents = {}
        self.generation = 0
        self.seeds = None
        self._next_id = 0

    def add_element(self, p: geometry.Polyhedron, parent=None) -> int:
        eid = self._next_id
        self._next_id += 1
        self.elements[eid] = p.with_id(eid)
        if parent is not None:
            self.parents[eid] = parent
        return eid

    def element(self, eid) -> geometry.Polyhedron:
        return self.elements[eid]

    def ids(self):
        return sorted(self.elements)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return (self.elements[i] for i in self.ids())

    def domain_volume(self) -> float:
        lo, hi = self.domain_box
        return float(np.prod(hi - lo))


def total_volume(m: Mesh) -> float:
    return sum(geometry.volume(p) for p in m)


def mesh_size(m: Mesh) -> float:
    """Largest element diameter."""
    if not m.elements:
        raise MalformedInputError("mesh has no elements")
    return max(geometry.diameter(p) for p in m)


def replace_element(m: Mesh, eid, children) -> Mesh:
    """Swap one element for its children (fresh ids, parent recorded).

    Children must conserve the parent volume within 1e-9 relative;
    neighbors are left untouched.
    """
    if eid not in m.elements:
        raise MalformedInputError(f"no element with id {eid}")
    parent_vol = geometry.volume(m.elements[eid])
    child_vol = sum(geometry.volume(c) for c in children)
    if abs(child_vol - parent_vol) > 1e-9 * parent_vol:
        raise RefinementRejectedError(
            f"children volume {child_vol:.12g} != parent {parent_vol:.12g}")
    del m.elements[eid]
    for c in children:
        m.add_element(c, parent=eid)
    return m


def _dedup_key(point):
    return tuple(np.round(point / DEDUP_TOL).astype(np.int64).tolist())


def complexity_stats(m: Mesh, timer: Timings = None) -> ComplexityStats:
    """Entity counts with geometric deduplication at 1e-9.

    Vertices shared between elements are counted once, as are edges and
    faces with identical vertex sets; a hanging face and the sub-faces
    covering it count separately.
    """
    vertex_ids = {}
    edges = set()
    faces = set()
    for p in m:
        gids = []
        for v in p.vertices:
            key = _dedup_key(v)
            gids.append(vertex_ids.setdefault(key, len(vertex_ids)))
        for f in p.faces:
            loop = [gids[i] for i in f]
            for k in range(len(loop)):
                a, b = loop[k], loop[(k + 1) % len(loop)]
                if a != b:
                    edges.add((a, b) if a < b else (b, a))
            faces.add(frozenset(loop))
    total = timer.total_seconds if timer else 0.0
    count = timer.total_count if timer else 0
    return ComplexityStats(
        n_vertices=len(vertex_ids),
        n_edges=len(edges),
        n_faces=len(faces),
        n_elements=len(m),
        total_refine_time=total,
        mean_time_per_element=total / count if count else 0.0,
    )
