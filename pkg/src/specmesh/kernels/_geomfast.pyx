# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled geometry hot kernels.

Semantics mirror the NumPy fallback exactly (same epsilons, same tie
rules); the test suite asserts equivalence between the two backends.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY

cnp.import_array()

DEF EPS_BARY = 1e-9
DEF EPS_T = 1e-9
DEF EPS_PLANE = 1e-9


def ray_crossings(origins, dirs, tri, excl_indptr=None, excl_indices=None):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] t3 = np.ascontiguousarray(tri, dtype=np.float64)
    cdef Py_ssize_t n_pts = o.shape[0]
    cdef Py_ssize_t n_tri = t3.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(n_pts, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] grazing = np.zeros(n_pts, dtype=np.uint8)
    if n_tri == 0:
        return counts, grazing

    cdef cnp.ndarray[cnp.float64_t, ndim=2] e1 = np.ascontiguousarray(t3[:, 1] - t3[:, 0])
    cdef cnp.ndarray[cnp.float64_t, ndim=2] e2 = np.ascontiguousarray(t3[:, 2] - t3[:, 0])
    cdef cnp.ndarray[cnp.float64_t, ndim=2] nrm = np.ascontiguousarray(np.cross(e1, e2))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] norm_n = np.linalg.norm(nrm, axis=1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] det_eps = 1e-12 * np.maximum(norm_n, 1e-30)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] inv_norm = 1.0 / np.maximum(norm_n, 1e-30)

    cdef bint has_excl = excl_indptr is not None
    cdef cnp.ndarray[cnp.int64_t, ndim=1] indptr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] indices
    if has_excl:
        indptr = np.ascontiguousarray(excl_indptr, dtype=np.int64)
        indices = np.ascontiguousarray(excl_indices, dtype=np.int64)
    else:
        indptr = np.zeros(1, dtype=np.int64)
        indices = np.zeros(0, dtype=np.int64)

    cdef Py_ssize_t p, f, k, lo, hi
    cdef double px, py, pz, dx, dy, dz
    cdef double tvx, tvy, tvz, pvx, pvy, pvz, qvx, qvy, qvz
    cdef double det, inv_det, u, v, t, plane_dist
    cdef bint skip
    cdef long cnt
    cdef int graz

    for p in range(n_pts):
        px = o[p, 0]; py = o[p, 1]; pz = o[p, 2]
        dx = d[p, 0]; dy = d[p, 1]; dz = d[p, 2]
        cnt = 0
        graz = 0
        lo = 0; hi = 0
        if has_excl:
            lo = indptr[p]; hi = indptr[p + 1]
        for f in range(n_tri):
            if has_excl:
                skip = False
                for k in range(lo, hi):
                    if indices[k] == f:
                        skip = True
                        break
                if skip:
                    continue
            tvx = px - t3[f, 0, 0]; tvy = py - t3[f, 0, 1]; tvz = pz - t3[f, 0, 2]
            pvx = dy * e2[f, 2] - dz * e2[f, 1]
            pvy = dz * e2[f, 0] - dx * e2[f, 2]
            pvz = dx * e2[f, 1] - dy * e2[f, 0]
            det = e1[f, 0] * pvx + e1[f, 1] * pvy + e1[f, 2] * pvz
            if fabs(det) < det_eps[f]:
                plane_dist = fabs(tvx * nrm[f, 0] + tvy * nrm[f, 1] + tvz * nrm[f, 2]) * inv_norm[f]
                if plane_dist < EPS_PLANE:
                    graz = 1
                continue
            inv_det = 1.0 / det
            u = (tvx * pvx + tvy * pvy + tvz * pvz) * inv_det
            qvx = tvy * e1[f, 2] - tvz * e1[f, 1]
            qvy = tvz * e1[f, 0] - tvx * e1[f, 2]
            qvz = tvx * e1[f, 1] - tvy * e1[f, 0]
            v = (dx * qvx + dy * qvy + dz * qvz) * inv_det
            t = (e2[f, 0] * qvx + e2[f, 1] * qvy + e2[f, 2] * qvz) * inv_det
            if u > EPS_BARY and v > EPS_BARY and u + v < 1.0 - EPS_BARY and t > EPS_T:
                cnt += 1
            elif u > -EPS_BARY and v > -EPS_BARY and u + v < 1.0 + EPS_BARY and t > -EPS_T:
                graz = 1
        counts[p] = cnt
        grazing[p] = <cnp.uint8_t> graz
    return counts, grazing


def nearest_vertex(query, ref, exclude=None):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = np.ascontiguousarray(ref, dtype=np.float64)
    cdef Py_ssize_t nq = q.shape[0]
    cdef Py_ssize_t nr = r.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.zeros(nq, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.zeros(nq, dtype=np.float64)
    cdef bint has_excl = exclude is not None
    cdef cnp.ndarray[cnp.int64_t, ndim=1] excl
    if has_excl:
        excl = np.ascontiguousarray(exclude, dtype=np.int64)
    else:
        excl = np.zeros(0, dtype=np.int64)
    cdef Py_ssize_t i, j, skip_j, best
    cdef double best_d2, d2, ddx, ddy, ddz
    for i in range(nq):
        skip_j = excl[i] if has_excl else -1
        best = -1
        best_d2 = INFINITY
        for j in range(nr):
            if j == skip_j:
                continue
            ddx = q[i, 0] - r[j, 0]
            ddy = q[i, 1] - r[j, 1]
            ddz = q[i, 2] - r[j, 2]
            d2 = ddx * ddx + ddy * ddy + ddz * ddz
            if d2 < best_d2:
                best_d2 = d2
                best = j
        idx[i] = best
        dist[i] = sqrt(best_d2)
    return idx, dist


def point_triangle_dists(points, tri):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] t3 = np.ascontiguousarray(tri, dtype=np.float64)
    cdef Py_ssize_t n_pts = pts.shape[0]
    cdef Py_ssize_t n_tri = t3.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.full(n_pts, np.inf)
    cdef Py_ssize_t p, f
    cdef double ax, ay, az, abx, aby, abz, acx, acy, acz
    cdef double apx, apy, apz, bpx, bpy, bpz, cpx, cpy, cpz
    cdef double d1, d2, d3, d4, d5, d6, va, vb, vc, denom, vv, ww, t
    cdef double cx, cy, cz, dsq, best
    for p in range(n_pts):
        best = INFINITY
        for f in range(n_tri):
            ax = t3[f, 0, 0]; ay = t3[f, 0, 1]; az = t3[f, 0, 2]
            abx = t3[f, 1, 0] - ax; aby = t3[f, 1, 1] - ay; abz = t3[f, 1, 2] - az
            acx = t3[f, 2, 0] - ax; acy = t3[f, 2, 1] - ay; acz = t3[f, 2, 2] - az
            apx = pts[p, 0] - ax; apy = pts[p, 1] - ay; apz = pts[p, 2] - az
            d1 = abx * apx + aby * apy + abz * apz
            d2 = acx * apx + acy * apy + acz * apz
            if d1 <= 0 and d2 <= 0:
                cx = ax; cy = ay; cz = az
            else:
                bpx = pts[p, 0] - t3[f, 1, 0]; bpy = pts[p, 1] - t3[f, 1, 1]; bpz = pts[p, 2] - t3[f, 1, 2]
                d3 = abx * bpx + aby * bpy + abz * bpz
                d4 = acx * bpx + acy * bpy + acz * bpz
                if d3 >= 0 and d4 <= d3:
                    cx = t3[f, 1, 0]; cy = t3[f, 1, 1]; cz = t3[f, 1, 2]
                else:
                    vc = d1 * d4 - d3 * d2
                    if vc <= 0 and d1 >= 0 and d3 <= 0:
                        t = d1 / (d1 - d3) if d1 != d3 else 0.0
                        cx = ax + t * abx; cy = ay + t * aby; cz = az + t * abz
                    else:
                        cpx = pts[p, 0] - t3[f, 2, 0]; cpy = pts[p, 1] - t3[f, 2, 1]; cpz = pts[p, 2] - t3[f, 2, 2]
                        d5 = abx * cpx + aby * cpy + abz * cpz
                        d6 = acx * cpx + acy * cpy + acz * cpz
                        if d6 >= 0 and d5 <= d6:
                            cx = t3[f, 2, 0]; cy = t3[f, 2, 1]; cz = t3[f, 2, 2]
                        else:
                            vb = d5 * d2 - d1 * d6
                            if vb <= 0 and d2 >= 0 and d6 <= 0:
                                t = d2 / (d2 - d6) if d2 != d6 else 0.0
                                cx = ax + t * acx; cy = ay + t * acy; cz = az + t * acz
                            else:
                                va = d3 * d6 - d5 * d4
                                if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
                                    denom = (d4 - d3) + (d5 - d6)
                                    t = (d4 - d3) / denom if denom != 0 else 0.0
                                    cx = t3[f, 1, 0] + t * (t3[f, 2, 0] - t3[f, 1, 0])
                                    cy = t3[f, 1, 1] + t * (t3[f, 2, 1] - t3[f, 1, 1])
                                    cz = t3[f, 1, 2] + t * (t3[f, 2, 2] - t3[f, 1, 2])
                                else:
                                    denom = va + vb + vc
                                    vv = vb / denom if denom != 0 else 0.0
                                    ww = vc / denom if denom != 0 else 0.0
                                    cx = ax + vv * abx + ww * acx
                                    cy = ay + vv * aby + ww * acy
                                    cz = az + vv * abz + ww * acz
            dsq = (pts[p, 0] - cx) ** 2 + (pts[p, 1] - cy) ** 2 + (pts[p, 2] - cz) ** 2
            if dsq < best:
                best = dsq
        out[p] = sqrt(best)
    return out
