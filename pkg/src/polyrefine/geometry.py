"""Polyhedron representation and the geometric predicates and
constructions every other module builds on.

Conventions used throughout:

- points are float64 arrays of shape (3,), point sets are (N, 3);
- a face is a loop of vertex indices, counter-clockwise when viewed
  from outside the solid;
- a polyhedron is watertight (every edge shared by exactly two faces,
  traversed once in each direction) and encloses a positive volume.

All functions are pure; polyhedra are treated as immutable after
construction (derived quantities are cached on first use).
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .backend import kernels
from .errors import (
    CutFailedError,
    DegenerateElementError,
    DegenerateHullError,
    MalformedInputError,
    NoCutError,
    OrientationError,
)

# On-plane band for clip classification, relative to the element diameter.
CLIP_BAND_REL = 1e-12
# Boundary tolerance for point membership, relative to max(1, diameter).
BOUNDARY_TOL = 1e-12
# Two faces are considered coplanar when their normals differ by less
# than this angle (radians).
COPLANAR_ANGLE_TOL = 1e-6

Point3 = np.ndarray


def as_point(x) -> Point3:
    q = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.isfinite(q).all():
        raise MalformedInputError(f"non-finite coordinates: {q}")
    return q


class CuttingPlane:
    """Oriented plane given by an origin point and a unit normal."""

    __slots__ = ("origin", "normal")

    def __init__(self, origin, normal):
        self.origin = as_point(origin)
        n = np.asarray(normal, dtype=np.float64).reshape(3)
        length = float(np.linalg.norm(n))
        if not math.isfinite(length) or length < 1e-300:
            raise MalformedInputError("plane normal must be nonzero")
        self.normal = n / length

    def signed_distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (pts - self.origin) @ self.normal

    def __repr__(self):
        return f"CuttingPlane(origin={self.origin.tolist()}, normal={self.normal.tolist()})"


class Polyhedron:
    """Vertex coordinates plus faces as oriented vertex-index loops."""

    __slots__ = ("vertices", "faces", "id", "_cache")

    def __init__(self, vertices, faces, id=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MalformedInputError("vertices must have shape (N, 3)")
        if not np.isfinite(self.vertices).all():
            raise MalformedInputError("vertex coordinates must be finite")
        self.faces = [tuple(int(i) for i in f) for f in faces]
        self.id = id
        self._cache = {}

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def with_id(self, new_id) -> "Polyhedron":
        q = Polyhedron.__new__(Polyhedron)
        q.vertices = self.vertices
        q.faces = self.faces
        q.id = new_id
        q._cache = self._cache
        return q

    def transformed(self, fn) -> "Polyhedron":
        """New polyhedron with vertices mapped through fn((N,3)) -> (N,3)."""
        return Polyhedron(fn(self.vertices), self.faces, self.id)

    def __repr__(self):
        return (f"Polyhedron(id={self.id}, V={self.n_vertices}, "
                f"F={len(self.faces)})")


def _cached(p: Polyhedron, key, fn):
    if key not in p._cache:
        p._cache[key] = fn()
    return p._cache[key]


# ---------------------------------------------------------------------------
# Basic measures


def bounding_box(p: Polyhedron):
    """Componentwise (min, max) corners over the vertices."""
    return _cached(p, "bbox", lambda: (p.vertices.min(axis=0),
                                       p.vertices.max(axis=0)))


def diameter_pair(p: Polyhedron):
    """(i, j, d): a vertex pair attaining the diameter, i < j.

    Ties within 1e-12 relative are broken by the lexicographically
    smallest index pair.
    """
    def compute():
        v = p.vertices
        if v.shape[0] < 2:
            raise MalformedInputError("diameter needs at least 2 vertices")
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=2)
        dmax2 = d2.max()
        ii, jj = np.nonzero(d2 >= dmax2 * (1.0 - 1e-12))
        pairs = [(int(a), int(b)) for a, b in zip(ii, jj) if a < b]
        i, j = min(pairs)
        return i, j, math.sqrt(float(d2[i, j]))

    return _cached(p, "diameter_pair", compute)


def diameter(p: Polyhedron) -> float:
    """Largest pairwise vertex distance."""
    return diameter_pair(p)[2]


def _fan_triangles(p: Polyhedron):
    """Fan triangulation of all faces.

    Returns (tri (T,3) int vertex indices, owner (T,) int face indices).
    """
    def compute():
        tri = []
        owner = []
        for fi, f in enumerate(p.faces):
            for k in range(1, len(f) - 1):
                tri.append((f[0], f[k], f[k + 1]))
                owner.append(fi)
        return np.asarray(tri, dtype=np.int64), np.asarray(owner, dtype=np.int64)

    return _cached(p, "fan", compute)


def volume(p: Polyhedron) -> float:
    """Enclosed volume via the divergence theorem over triangulated faces.

    Raises OrientationError when the face loops are not consistently
    outward-oriented (non-positive signed volume).
    """
    v = _signed_volume(p)
    if v <= 0.0:
        raise OrientationError(f"signed volume {v:g} is not positive")
    return v


def _signed_volume(p: Polyhedron) -> float:
    def compute():
        tri, _ = _fan_triangles(p)
        if len(tri) == 0:
            return 0.0
        a = p.vertices[tri[:, 0]]
        b = p.vertices[tri[:, 1]]
        c = p.vertices[tri[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    return _cached(p, "signed_volume", compute)


def centroid(p: Polyhedron) -> Point3:
    """Volume-weighted center of mass.

    Signed-tetrahedron decomposition of the triangulated faces against
    the coordinate origin; the result is independent of that choice.
    """
    def compute():
        tri, _ = _fan_triangles(p)
        a = p.vertices[tri[:, 0]]
        b = p.vertices[tri[:, 1]]
        c = p.vertices[tri[:, 2]]
        w = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
        vtot = float(w.sum())
        if abs(vtot) < 1e-18 * max(1.0, diameter(p)) ** 3:
            raise DegenerateElementError("zero-volume element has no centroid")
        centers = (a + b + c) / 4.0
        return (w[:, None] * centers).sum(axis=0) / vtot

    return _cached(p, "centroid", compute)


def face_normal_area(vertices, loop):
    """Newell normal of a face loop; its length is the enclosed area."""
    pts = vertices[list(loop)].tolist()
    nx = ny = nz = 0.0
    m = len(pts)
    for k in range(m):
        x1, y1, z1 = pts[k]
        x2, y2, z2 = pts[(k + 1) % m]
        nx += (y1 - y2) * (z1 + z2)
        ny += (z1 - z2) * (x1 + x2)
        nz += (x1 - x2) * (y1 + y2)
    return np.array([0.5 * nx, 0.5 * ny, 0.5 * nz])


def face_planes(p: Polyhedron):
    """(normals (F,3), offsets (F,)) with n . x = d on each face plane."""
    def compute():
        normals = np.empty((len(p.faces), 3))
        offsets = np.empty(len(p.faces))
        for i, f in enumerate(p.faces):
            n = face_normal_area(p.vertices, f)
            length = np.linalg.norm(n)
            if length < 1e-300:
                raise DegenerateElementError(f"face {i} has zero area")
            n = n / length
            normals[i] = n
            offsets[i] = float(n @ p.vertices[list(f)].mean(axis=0))
        return normals, offsets

    return _cached(p, "face_planes", compute)


def is_convex(p: Polyhedron) -> bool:
    """Convex within 1e-9 * diameter: planar faces, all vertices behind
    every face plane."""
    def compute():
        tol = 1e-9 * max(1.0, diameter(p))
        normals, offsets = face_planes(p)
        for i, f in enumerate(p.faces):
            d = p.vertices[list(f)] @ normals[i] - offsets[i]
            if np.abs(d).max() > tol:
                return False  # non-planar face
        sd = p.vertices @ normals.T - offsets[None, :]
        return bool(sd.max() <= tol)

    return _cached(p, "is_convex", compute)


# ---------------------------------------------------------------------------
# Membership and surface distance

# Deterministic ray directions: one primary, the rest for re-casting
# rays that grazed edges or started on the surface.
_rng = np.random.default_rng(20240717)
_RAY_DIRECTIONS = _rng.normal(size=(13, 3))
_RAY_DIRECTIONS /= np.linalg.norm(_RAY_DIRECTIONS, axis=1, keepdims=True)
del _rng


def contains_points(p: Polyhedron, points) -> np.ndarray:
    """Vectorized membership: inside or within 1e-12 of the boundary."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    btol = BOUNDARY_TOL * max(1.0, diameter(p))
    lo, hi = bounding_box(p)
    out = np.zeros(pts.shape[0], dtype=bool)
    in_box = ((pts >= lo - btol) & (pts <= hi + btol)).all(axis=1)
    if not in_box.any():
        return out
    cand = pts[in_box]

    if is_convex(p):
        normals, offsets = face_planes(p)
        out[in_box] = kernels.points_in_convex(cand, normals, offsets, btol)
        return out

    tri, _ = _fan_triangles(p)
    a = np.ascontiguousarray(p.vertices[tri[:, 0]])
    e1 = np.ascontiguousarray(p.vertices[tri[:, 1]] - a)
    e2 = np.ascontiguousarray(p.vertices[tri[:, 2]] - a)

    inside = np.zeros(cand.shape[0], dtype=bool)
    active = np.arange(cand.shape[0])
    for d in _RAY_DIRECTIONS:
        parity, suspect = kernels.ray_parity(cand[active], a, e1, e2, d, btol)
        inside[active] = parity == 1
        active = active[suspect]
        if active.size == 0:
            break
    if active.size:
        # Stubborn rays start on (or hopelessly near) the surface.
        near = distance_to_surface(p, cand[active]) <= btol
        inside[active] |= near
    out[in_box] = inside
    return out


def contains_point(p: Polyhedron, q) -> bool:
    return bool(contains_points(p, as_point(q)[None, :])[0])


def _point_triangle_distance(pts, a, b, c):
    """Distance from each point to triangle (a, b, c), vectorized."""
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n)
    if nn < 1e-300:
        return np.minimum(_point_segment_distance(pts, a, b),
                          _point_segment_distance(pts, a, c))
    n = n / nn
    rel = pts - a
    dist_plane = rel @ n
    proj = pts - dist_plane[:, None] * n
    # Barycentric test of the projection.
    v0 = b - a
    v1 = c - a
    v2 = proj - a
    d00 = v0 @ v0
    d01 = v0 @ v1
    d11 = v1 @ v1
    d20 = v2 @ v0
    d21 = v2 @ v1
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    inside = (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0)
    d_edges = np.minimum(
        _point_segment_distance(pts, a, b),
        np.minimum(_point_segment_distance(pts, b, c),
                   _point_segment_distance(pts, c, a)))
    return np.where(inside, np.abs(dist_plane), d_edges)


def _point_segment_distance(pts, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-300:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(pts - closest, axis=1)


def distance_to_surface(p: Polyhedron, points) -> np.ndarray:
    """Unsigned distance from each point to the boundary surface."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tri, _ = _fan_triangles(p)
    d = np.full(pts.shape[0], np.inf)
    for t in tri:
        a, b, c = p.vertices[t[0]], p.vertices[t[1]], p.vertices[t[2]]
        d = np.minimum(d, _point_triangle_distance(pts, a, b, c))
    return d


# ---------------------------------------------------------------------------
# Convex hull


def convex_hull(points) -> Polyhedron:
    """Triangulated convex hull with outward-oriented faces (qhull)."""
    from scipy.spatial import ConvexHull, QhullError

    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 4:
        raise DegenerateHullError("need at least 4 points")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateHullError(str(exc)) from exc
    if hull.volume <= 0.0:
        raise DegenerateHullError("input points are coplanar")

    keep = hull.vertices
    remap = {int(old): new for new, old in enumerate(keep)}
    verts = pts[keep]
    faces = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        tri = [remap[int(i)] for i in simplex]
        a, b, c = (verts[tri[0]], verts[tri[1]], verts[tri[2]])
        if np.cross(b - a, c - a) @ eq[:3] < 0.0:
            tri[1], tri[2] = tri[2], tri[1]
        faces.append(tuple(tri))
    return Polyhedron(verts, faces)


# ---------------------------------------------------------------------------
# Surface validity


def _undirected(a, b):
    return (a, b) if a < b else (b, a)


def _face_edges(face):
    return [(face[k], face[(k + 1) % len(face)]) for k in range(len(face))]


def connected_face_components(faces):
    """Group faces into edge-connected components (lists of face indices)."""
    parent = list(range(len(faces)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    by_edge = {}
    for fi, f in enumerate(faces):
        for a, b in _face_edges(f):
            key = _undirected(a, b)
            if key in by_edge:
                ra, rb = find(by_edge[key]), find(fi)
                if ra != rb:
                    parent[rb] = ra
            else:
                by_edge[key] = fi
    groups = {}
    for fi in range(len(faces)):
        groups.setdefault(find(fi), []).append(fi)
    return list(groups.values())


def surface_violations(p: Polyhedron) -> list:
    """All structural violations, empty when the polyhedron is valid.

    Checks face sanity, watertightness (each edge in exactly two faces),
    consistent orientation (once per direction), per-component Euler
    characteristic V - E + F = 2 (the hole test), and positive volume.
    """
    errs = []
    nv = p.n_vertices
    if nv < 4:
        errs.append("fewer than 4 vertices")
    if len(p.faces) < 4:
        errs.append("fewer than 4 faces")
    for fi, f in enumerate(p.faces):
        if len(set(f)) < 3:
            errs.append(f"face {fi} has fewer than 3 distinct vertices")
        if any(f[k] == f[(k + 1) % len(f)] for k in range(len(f))):
            errs.append(f"face {fi} repeats a consecutive vertex")
        if any(i < 0 or i >= nv for i in f):
            errs.append(f"face {fi} references a missing vertex")
    if errs:
        return errs

    directed = Counter()
    for f in p.faces:
        directed.update(_face_edges(f))
    for (a, b), cnt in directed.items():
        if cnt > 1:
            errs.append(f"directed edge {(a, b)} used {cnt} times")
    undirected = Counter()
    for (a, b), cnt in directed.items():
        undirected[_undirected(a, b)] += cnt
    for e, cnt in undirected.items():
        if cnt != 2:
            errs.append(f"edge {e} used by {cnt} face sides (expected 2)")
    if errs:
        return errs
    for (a, b) in list(directed):
        if directed[(b, a)] != 1:
            errs.append(f"edge {(a, b)} traversed twice in the same direction")
            return errs

    for comp in connected_face_components(p.faces):
        used = set()
        edges = set()
        for fi in comp:
            used.update(p.faces[fi])
            edges.update(_undirected(a, b) for a, b in _face_edges(p.faces[fi]))
        euler = len(used) - len(edges) + len(comp)
        if euler != 2:
            errs.append(f"component has V-E+F = {euler} (hole or pinch)")

    if not errs:
        sv = _signed_volume(p)
        if sv <= 0.0:
            errs.append(f"signed volume {sv:g} not positive")
    return errs


def is_valid_polyhedron(p: Polyhedron) -> bool:
    return not surface_violations(p)


def euler_characteristic(p: Polyhedron) -> int:
    """V - E + F over vertices and undirected edges actually used."""
    used = set()
    edges = set()
    for f in p.faces:
        used.update(f)
        edges.update(_undirected(a, b) for a, b in _face_edges(f))
    return len(used) - len(edges) + len(p.faces)


def small_feature_check(p: Polyhedron, threshold: float) -> bool:
    """True iff every edge is at least `threshold` long and every face
    area is at least `threshold` squared."""
    edges = set()
    for f in p.faces:
        edges.update(_undirected(a, b) for a, b in _face_edges(f))
    for a, b in edges:
        if np.linalg.norm(p.vertices[a] - p.vertices[b]) < threshold:
            return False
    for f in p.faces:
        area = np.linalg.norm(face_normal_area(p.vertices, f))
        if area < threshold * threshold:
            return False
    return True


# ---------------------------------------------------------------------------
# Inscribed radius


def inscribed_radius(p: Polyhedron) -> float:
    """Radius of the largest inscribed ball.

    Convex elements use the exact Chebyshev-center linear program;
    non-convex ones take the maximum boundary distance over a 20^3
    interior sample grid (an approximation adequate for 0.05-wide
    quality histograms).
    """
    if volume(p) <= 0.0:
        raise DegenerateElementError("degenerate element")
    if is_convex(p):
        from scipy.optimize import linprog

        normals, offsets = face_planes(p)
        a_ub = np.hstack([normals, np.ones((len(offsets), 1))])
        res = linprog(
            c=[0.0, 0.0, 0.0, -1.0],
            A_ub=a_ub,
            b_ub=offsets,
            bounds=[(None, None)] * 3 + [(0.0, None)],
            method="highs",
        )
        if not res.success:
            raise DegenerateElementError("inscribed-ball LP failed")
        return float(res.x[3])

    lo, hi = bounding_box(p)
    axes = [np.linspace(lo[k], hi[k], 20) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    inside = contains_points(p, grid)
    if not inside.any():
        raise DegenerateElementError("no interior sample points")
    return float(distance_to_surface(p, grid[inside]).max())


# ---------------------------------------------------------------------------
# Plane clipping


def _split_loop(loop, cls, cut_vertex):
    """Split one face loop into per-side loops.

    cls maps vertex index -> -1 / 0 / +1; cut_vertex(a, b) returns the
    index of the interpolated vertex on a strictly crossing edge (a, b).
    Returns {side: [loops]} for side in (-1, +1).
    """
    aug = []
    n = len(loop)
    for k in range(n):
        a, b = loop[k], loop[(k + 1) % n]
        aug.append(a)
        if cls[a] * cls[b] == -1:
            aug.append(cut_vertex(a, b))
    cl = [cls.get(v, 0) for v in aug]

    out = {-1: [], 1: []}
    for side in (-1, 1):
        if not any(c == side for c in cl):
            continue
        if all(c * side >= 0 for c in cl):
            out[side].append(list(aug))
            continue
        m = len(aug)
        # Maximal arcs of vertices not strictly on the far side, in loop
        # order; each arc containing an interior vertex becomes one loop.
        start = next(i for i in range(m) if cl[i] == -side)
        arcs = []
        cur = None
        for k in range(start, start + m):
            i = k % m
            if cl[i] == -side:
                if cur:
                    arcs.append(cur)
                cur = None
            else:
                cur = cur or []
                cur.append(aug[i])
        if cur:
            arcs.append(cur)
        for arc in arcs:
            if any(cls.get(v, 0) == side for v in arc) and len(arc) >= 3:
                out[side].append(arc)
    return out


def _section_loops(side_faces, on_plane):
    """Boundary loops the section face(s) must supply for one side.

    side_faces: loops already assigned to this side. Every directed edge
    joining two on-plane vertices that is traversed exactly once needs a
    reversed partner on the section; walking those partners yields the
    loops. Raises CutFailedError on non-manifold configurations.
    """
    traversed = Counter()
    for f in side_faces:
        for a, b in _face_edges(tuple(f)):
            if a in on_plane and b in on_plane:
                traversed[(a, b)] += 1
    needed = []
    for (a, b), cnt in traversed.items():
        if cnt > 1:
            raise CutFailedError("non-manifold traversal along the cut plane")
        if traversed.get((b, a), 0) == 0:
            needed.append((b, a))

    nxt = {}
    for a, b in needed:
        if a in nxt:
            raise CutFailedError("ambiguous section boundary at a vertex")
        nxt[a] = b
    loops = []
    remaining = dict(nxt)
    while remaining:
        start = min(remaining)
        loop = [start]
        cur = remaining.pop(start)
        while cur != start:
            loop.append(cur)
            if cur not in remaining:
                raise CutFailedError("open section boundary chain")
            cur = remaining.pop(cur)
        if len(loop) >= 3:
            loops.append(loop)
        else:
            raise CutFailedError("degenerate section loop")
    return loops


def _loop_contains_2d(outer2, q2):
    """Even-odd test of point q2 against polygon outer2 (both 2D)."""
    x, y = q2
    inside = False
    n = len(outer2)
    for i in range(n):
        x1, y1 = outer2[i]
        x2, y2 = outer2[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) / (y2 - y1) * (x2 - x1)
            if xc > x:
                inside = not inside
    return inside


def _keyhole_merge(vertices, loops, plane):
    """Combine nested section loops into slit (keyhole) faces.

    Non-nested loops pass through unchanged. Nesting is decided in the
    plane's own 2D coordinates with an even-odd test.
    """
    if len(loops) <= 1:
        return list(loops)
    n = plane.normal
    u = np.cross(n, [1.0, 0.0, 0.0])
    if np.linalg.norm(u) < 0.5:
        u = np.cross(n, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    w = np.cross(n, u)
    to2d = lambda idx: [(float(vertices[i] @ u), float(vertices[i] @ w))
                        for i in idx]
    loops2 = [to2d(lp) for lp in loops]

    children = {i: [] for i in range(len(loops))}
    nested = set()
    for i in range(len(loops)):
        for j in range(len(loops)):
            if i != j and _loop_contains_2d(loops2[i], loops2[j][0]):
                children[i].append(j)
                nested.add(j)

    merged = []
    for i, kids in children.items():
        if i in nested:
            continue
        loop = list(loops[i])
        for j in kids:
            inner = list(loops[j])
            # Bridge at the closest vertex pair; the slit edge is walked
            # once in each direction so edge bookkeeping stays balanced.
            best = None
            for ai, a in enumerate(loop):
                for bi, b in enumerate(inner):
                    d = float(np.sum((vertices[a] - vertices[b]) ** 2))
                    if best is None or d < best[0]:
                        best = (d, ai, bi)
            _, ai, bi = best
            inner_rot = inner[bi:] + inner[:bi]
            loop = (loop[:ai + 1] + inner_rot + [inner_rot[0]] + loop[ai:])
        merged.append(loop)
    return merged


def merge_coplanar_faces(vertices, faces, angle_tol=COPLANAR_ANGLE_TOL):
    """Merge edge-adjacent faces whose normals agree within angle_tol."""
    faces = [list(f) for f in faces]
    pts = vertices.tolist() if hasattr(vertices, "tolist") else vertices
    changed = True
    while changed:
        changed = False
        normals = []
        for f in faces:
            nx = ny = nz = 0.0
            m = len(f)
            for k in range(m):
                x1, y1, z1 = pts[f[k]]
                x2, y2, z2 = pts[f[(k + 1) % m]]
                nx += (y1 - y2) * (z1 + z2)
                ny += (z1 - z2) * (x1 + x2)
                nz += (x1 - x2) * (y1 + y2)
            ln = math.sqrt(nx * nx + ny * ny + nz * nz)
            normals.append((nx / ln, ny / ln, nz / ln) if ln > 0
                           else (0.0, 0.0, 0.0))
        by_edge = {}
        for fi, f in enumerate(faces):
            for a, b in _face_edges(tuple(f)):
                by_edge.setdefault(_undirected(a, b), []).append((fi, a, b))
        for key, users in by_edge.items():
            if len(users) != 2:
                continue
            (f1, a1, b1), (f2, a2, b2) = users
            if f1 == f2:
                continue
            if (a1, b1) != (b2, a2):
                continue  # same direction twice: slit edge, leave alone
            n1, n2 = normals[f1], normals[f2]
            if n1[0] * n2[0] + n1[1] * n2[1] + n1[2] * n2[2] < 0.0:
                continue
            cx = n1[1] * n2[2] - n1[2] * n2[1]
            cy = n1[2] * n2[0] - n1[0] * n2[2]
            cz = n1[0] * n2[1] - n1[1] * n2[0]
            if cx * cx + cy * cy + cz * cz >= angle_tol * angle_tol:
                continue
            shared = sum(1 for k, us in by_edge.items()
                         if len(us) == 2 and {us[0][0], us[1][0]} == {f1, f2})
            if shared != 1:
                continue  # multiply-connected pair; skip
            l1, l2 = faces[f1], faces[f2]
            i1 = next(i for i in range(len(l1))
                      if (l1[i], l1[(i + 1) % len(l1)]) == (a1, b1))
            i2 = next(i for i in range(len(l2))
                      if (l2[i], l2[(i + 1) % len(l2)]) == (a2, b2))
            rot1 = l1[i1 + 1:] + l1[:i1 + 1]          # starts at b1, ends a1
            rot2 = l2[i2 + 1:] + l2[:i2 + 1]          # starts at a1, ends b1
            loop = rot1 + rot2[1:-1]
            dedup = [v for k, v in enumerate(loop) if v != loop[(k + 1) % len(loop)]]
            if len(set(dedup)) < 3:
                continue
            faces[f1] = dedup
            del faces[f2]
            changed = True
            break
    return [tuple(f) for f in faces]


def _compact_piece(vertices, loops):
    used = sorted({i for lp in loops for i in lp})
    remap = {old: new for new, old in enumerate(used)}
    verts = vertices[used]
    faces = [tuple(remap[i] for i in lp) for lp in loops]
    return Polyhedron(verts, faces)


def clip_by_plane(p: Polyhedron, plane: CuttingPlane):
    """Slice a polyhedron, returning (negative-side, positive-side) pieces.

    Each side is decomposed into edge-connected components; section
    faces on the plane close every piece. Vertices within
    1e-12 * diameter of the plane are treated as lying on it, so slicing
    never manufactures near-duplicate vertices. Raises NoCutError when
    the plane misses the interior and CutFailedError when the section
    boundary cannot be assembled.
    """
    sd = plane.signed_distance(p.vertices)
    band = CLIP_BAND_REL * diameter(p)
    cls_arr = np.where(sd > band, 1, np.where(sd < -band, -1, 0))
    if not (cls_arr == 1).any() or not (cls_arr == -1).any():
        raise NoCutError("plane does not pass through the element interior")
    cls = {i: int(c) for i, c in enumerate(cls_arr)}

    verts = [v for v in p.vertices]
    cut_cache = {}

    def cut_vertex(a, b):
        key = _undirected(a, b)
        if key not in cut_cache:
            t = sd[a] / (sd[a] - sd[b])
            verts.append(p.vertices[a] + t * (p.vertices[b] - p.vertices[a]))
            cut_cache[key] = len(verts) - 1
        return cut_cache[key]

    side_faces = {-1: [], 1: []}
    for f in p.faces:
        if all(cls[v] == 0 for v in f):
            raise NoCutError("plane is coplanar with a face")
        pieces = _split_loop(list(f), cls, cut_vertex)
        for side in (-1, 1):
            side_faces[side].extend(pieces[side])

    all_verts = np.asarray(verts)
    on_plane = {i for i, c in cls.items() if c == 0}
    on_plane.update(cut_cache.values())

    result = {-1: [], 1: []}
    for side in (-1, 1):
        loops = _section_loops(side_faces[side], on_plane)
        loops = _keyhole_merge(all_verts, loops, plane)
        faces = [list(f) for f in side_faces[side]]
        comps = connected_face_components(faces + [list(lp) for lp in loops])
        for comp in comps:
            comp_faces = [faces[i] for i in comp if i < len(faces)]
            comp_faces += [loops[i - len(faces)] for i in comp if i >= len(faces)]
            merged = merge_coplanar_faces(all_verts, comp_faces)
            result[side].append(_compact_piece(all_verts, merged))
    if not result[-1] or not result[1]:
        raise NoCutError("cut left one side empty")
    return result[-1], result[1]


# ---------------------------------------------------------------------------
# Primitive constructors


def orient_outward(vertices, faces):
    """Flip face loops of a convex cell so Newell normals point away
    from the vertex mean."""
    vertices = np.asarray(vertices, dtype=np.float64)
    center = vertices.mean(axis=0)
    fixed = []
    for f in faces:
        f = list(f)
        n = face_normal_area(vertices, f)
        mid = vertices[f].mean(axis=0)
        if n @ (mid - center) < 0.0:
            f = f[::-1]
        fixed.append(tuple(f))
    return fixed


def box(lo, hi, id=None) -> Polyhedron:
    """Axis-aligned box [lo, hi]."""
    lo = as_point(lo)
    hi = as_point(hi)
    if not (hi > lo).all():
        raise MalformedInputError("box corners must satisfy hi > lo")
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    verts = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ])
    faces = orient_outward(verts, [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
                                   (2, 3, 7, 6), (0, 4, 7, 3), (1, 2, 6, 5)])
    return Polyhedron(verts, faces, id=id)


def tetrahedron(a, b, c, d, id=None) -> Polyhedron:
    """Tetrahedron over four non-coplanar points, outward-oriented."""
    verts = np.array([as_point(a), as_point(b), as_point(c), as_point(d)])
    faces = orient_outward(verts, [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])
    p = Polyhedron(verts, faces, id=id)
    if _signed_volume(p) <= 0.0:
        raise DegenerateElementError("coplanar tetrahedron corners")
    return p
