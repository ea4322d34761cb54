"""Pure-numpy fallback for the hot point-membership kernels.

The compiled extension (polyrefine._kernels) implements the same two
functions with tight loops and early exits; this module is selected by
polyrefine.backend when the extension is unavailable or when
POLYREFINE_BACKEND=python.
"""

import numpy as np

IS_COMPILED = False


def points_in_convex(points, normals, offsets, tol):
    """Membership mask for a convex polyhedron given as face half-spaces.

    A point q is inside iff normals @ q - offsets <= tol for every face.

    points:  (N, 3) float64
    normals: (F, 3) outward unit face normals
    offsets: (F,)   plane offsets, n . x = d on the face
    tol:     boundary tolerance (same length unit as the coordinates)
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    sd = points @ normals.T - offsets[None, :]
    return np.ascontiguousarray((sd <= tol).all(axis=1))


def ray_parity(points, tri_a, tri_e1, tri_e2, direction, eps):
    """Crossing parity of rays cast from each point along `direction`.

    Triangles are given by a vertex `tri_a` (T, 3) and the two edge
    vectors `tri_e1`, `tri_e2` (T, 3). Returns (parity, suspect) where
    parity[i] is the hit count mod 2 and suspect[i] flags rays that
    passed within `eps` of a triangle boundary, a triangle plane seen
    edge-on, or the ray origin -- those must be re-cast.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    hits = np.zeros(n, dtype=np.int64)
    suspect = np.zeros(n, dtype=bool)
    bary_eps = 1e-9

    d = np.asarray(direction, dtype=np.float64)
    h = np.cross(d, tri_e2)                     # (T, 3)
    det = np.einsum("tj,tj->t", tri_e1, h)      # (T,)

    for t in range(tri_a.shape[0]):
        dt = det[t]
        s = points - tri_a[t]                   # (N, 3)
        if abs(dt) < 1e-14:
            # Ray parallel to this triangle's plane: only dangerous if
            # some origin is nearly in the plane.
            nrm = np.cross(tri_e1[t], tri_e2[t])
            nn = np.linalg.norm(nrm)
            if nn > 0.0:
                close = np.abs(s @ (nrm / nn)) < eps
                suspect |= close
            continue
        u = (s @ h[t]) / dt
        q = np.cross(s, tri_e1[t])
        v = (q @ d) / dt
        tt = (q @ tri_e2[t]) / dt
        w = u + v
        hits += (u >= 0.0) & (v >= 0.0) & (w <= 1.0) & (tt > 0.0)
        inside_loose = (u >= -bary_eps) & (v >= -bary_eps) & (w <= 1.0 + bary_eps)
        near_edge = inside_loose & (
            (u < bary_eps) | (v < bary_eps) | (w > 1.0 - bary_eps)
        )
        near_origin = inside_loose & (np.abs(tt) < eps)
        suspect |= (tt > -eps) & (near_edge | near_origin)
    return (hits & 1).astype(np.uint8), suspect
