# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled point-membership kernels.

Same contract as polyrefine._kernels_py; kept in lockstep with it.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

IS_COMPILED = True


def points_in_convex(points, normals, offsets, double tol):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] nrm = np.ascontiguousarray(normals, dtype=np.float64)
    cdef double[::1] off = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0], f = nrm.shape[0]
    out = np.ones(n, dtype=bool)
    cdef cnp.uint8_t[::1] res = out.view(np.uint8)
    cdef Py_ssize_t i, j
    cdef double sd
    for i in range(n):
        for j in range(f):
            sd = (nrm[j, 0] * pts[i, 0] + nrm[j, 1] * pts[i, 1]
                  + nrm[j, 2] * pts[i, 2] - off[j])
            if sd > tol:
                res[i] = 0
                break
    return out


def ray_parity(points, tri_a, tri_e1, tri_e2, direction, double eps):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(tri_a, dtype=np.float64)
    cdef double[:, ::1] e1 = np.ascontiguousarray(tri_e1, dtype=np.float64)
    cdef double[:, ::1] e2 = np.ascontiguousarray(tri_e2, dtype=np.float64)
    cdef double[::1] d = np.ascontiguousarray(direction, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0], ntri = a.shape[0]

    parity_out = np.zeros(n, dtype=np.uint8)
    suspect_out = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] parity = parity_out
    cdef cnp.uint8_t[::1] suspect = suspect_out.view(np.uint8)

    # Per-triangle precomputation: h = d x e2, det = e1 . h, plane normal.
    h_arr = np.empty((ntri, 3))
    det_arr = np.empty(ntri)
    nrm_arr = np.empty((ntri, 3))
    cdef double[:, ::1] h = h_arr
    cdef double[::1] det = det_arr
    cdef double[:, ::1] pn = nrm_arr
    cdef Py_ssize_t t, i
    cdef double nn
    for t in range(ntri):
        h[t, 0] = d[1] * e2[t, 2] - d[2] * e2[t, 1]
        h[t, 1] = d[2] * e2[t, 0] - d[0] * e2[t, 2]
        h[t, 2] = d[0] * e2[t, 1] - d[1] * e2[t, 0]
        det[t] = e1[t, 0] * h[t, 0] + e1[t, 1] * h[t, 1] + e1[t, 2] * h[t, 2]
        pn[t, 0] = e1[t, 1] * e2[t, 2] - e1[t, 2] * e2[t, 1]
        pn[t, 1] = e1[t, 2] * e2[t, 0] - e1[t, 0] * e2[t, 2]
        pn[t, 2] = e1[t, 0] * e2[t, 1] - e1[t, 1] * e2[t, 0]
        nn = sqrt(pn[t, 0] ** 2 + pn[t, 1] ** 2 + pn[t, 2] ** 2)
        if nn > 0.0:
            pn[t, 0] /= nn
            pn[t, 1] /= nn
            pn[t, 2] /= nn

    cdef double bary_eps = 1e-9
    cdef double sx, sy, sz, qx, qy, qz, u, v, w, tt, dt
    cdef int hits, susp
    for i in range(n):
        hits = 0
        susp = 0
        for t in range(ntri):
            sx = pts[i, 0] - a[t, 0]
            sy = pts[i, 1] - a[t, 1]
            sz = pts[i, 2] - a[t, 2]
            dt = det[t]
            if fabs(dt) < 1e-14:
                if fabs(sx * pn[t, 0] + sy * pn[t, 1] + sz * pn[t, 2]) < eps:
                    susp = 1
                continue
            u = (sx * h[t, 0] + sy * h[t, 1] + sz * h[t, 2]) / dt
            qx = sy * e1[t, 2] - sz * e1[t, 1]
            qy = sz * e1[t, 0] - sx * e1[t, 2]
            qz = sx * e1[t, 1] - sy * e1[t, 0]
            v = (qx * d[0] + qy * d[1] + qz * d[2]) / dt
            tt = (qx * e2[t, 0] + qy * e2[t, 1] + qz * e2[t, 2]) / dt
            w = u + v
            if u >= 0.0 and v >= 0.0 and w <= 1.0 and tt > 0.0:
                hits += 1
            if tt > -eps and u >= -bary_eps and v >= -bary_eps and w <= 1.0 + bary_eps:
                if (u < bary_eps or v < bary_eps or w > 1.0 - bary_eps
                        or fabs(tt) < eps):
                    susp = 1
        parity[i] = hits & 1
        if susp:
            suspect[i] = 1
    return parity_out, suspect_out
