"""NumPy fallback implementations of the geometry hot kernels.

These are the reference semantics for the compiled backend: parametric
ray-triangle crossing counts with grazing detection, brute-force nearest
vertex queries, and point-to-triangle distances. Vectorized over faces in
point chunks to bound temporary memory.
"""
from __future__ import annotations

import numpy as np

_CHUNK = 256
_EPS_BARY = 1e-9  # barycentric closeness to an edge counts as grazing
_EPS_T = 1e-9  # ray parameter closeness to the origin counts as grazing
_EPS_PLANE = 1e-9  # origin-to-plane distance for parallel rays


def ray_crossings(origins, dirs, tri, excl_indptr=None, excl_indices=None):
    """Count ray-triangle crossings per point.

    Returns (counts, grazing): crossings use strict interior tests; the
    grazing flag marks rays that pass within epsilon of a triangle edge,
    plane, or the origin itself and should be retried with a new direction.
    ``excl_indptr``/``excl_indices`` (CSR layout) name faces to ignore per
    point (used for self-tests).
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    tri = np.asarray(tri, dtype=np.float64)
    n_pts = origins.shape[0]
    counts = np.zeros(n_pts, dtype=np.int64)
    grazing = np.zeros(n_pts, dtype=np.uint8)
    if tri.shape[0] == 0:
        return counts, grazing
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    normal = np.cross(e1, e2)
    norm_n = np.linalg.norm(normal, axis=1)
    det_eps = 1e-12 * np.maximum(norm_n, 1e-30)
    for lo in range(0, n_pts, _CHUNK):
        hi = min(lo + _CHUNK, n_pts)
        p = origins[lo:hi]
        d = dirs[lo:hi]
        pvec = np.cross(d[:, None, :], e2[None, :, :])
        det = np.einsum("fc,pfc->pf", e1, pvec)
        tvec = p[:, None, :] - v0[None, :, :]
        parallel = np.abs(det) < det_eps[None, :]
        safe_det = np.where(parallel, 1.0, det)
        u = np.einsum("pfc,pfc->pf", tvec, pvec) / safe_det
        qvec = np.cross(tvec, e1[None, :, :])
        v = np.einsum("pc,pfc->pf", d, qvec) / safe_det
        t = np.einsum("fc,pfc->pf", e2, qvec) / safe_det
        inside = (
            ~parallel
            & (u > _EPS_BARY)
            & (v > _EPS_BARY)
            & (u + v < 1.0 - _EPS_BARY)
            & (t > _EPS_T)
        )
        loose = (
            ~parallel
            & (u > -_EPS_BARY)
            & (v > -_EPS_BARY)
            & (u + v < 1.0 + _EPS_BARY)
            & (t > -_EPS_T)
        )
        near_edge = loose & ~inside
        plane_dist = np.abs(np.einsum("pfc,fc->pf", tvec, normal)) / np.maximum(norm_n, 1e-30)
        on_plane = parallel & (plane_dist < _EPS_PLANE)
        graz = near_edge | on_plane
        if excl_indptr is not None:
            for row in range(lo, hi):
                faces = excl_indices[excl_indptr[row]:excl_indptr[row + 1]]
                inside[row - lo, faces] = False
                graz[row - lo, faces] = False
        counts[lo:hi] = inside.sum(axis=1)
        grazing[lo:hi] = graz.any(axis=1)
    return counts, grazing


def nearest_vertex(query, ref, exclude=None):
    """Index and distance of the nearest reference vertex per query point.

    ``exclude`` optionally gives one reference index per query to skip
    (self-queries). Ties resolve to the lowest index.
    """
    query = np.asarray(query, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    n = query.shape[0]
    idx = np.zeros(n, dtype=np.int64)
    dist = np.zeros(n, dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        d2 = np.sum((query[lo:hi, None, :] - ref[None, :, :]) ** 2, axis=2)
        if exclude is not None:
            rows = np.arange(lo, hi)
            valid = exclude[rows] >= 0
            d2[np.arange(hi - lo)[valid], exclude[rows][valid]] = np.inf
        best = np.argmin(d2, axis=1)
        idx[lo:hi] = best
        dist[lo:hi] = np.sqrt(d2[np.arange(hi - lo), best])
    return idx, dist


def point_triangle_dists(points, tri):
    """Distance from each point to the nearest triangle of a mesh."""
    points = np.asarray(points, dtype=np.float64)
    tri = np.asarray(tri, dtype=np.float64)
    n = points.shape[0]
    out = np.full(n, np.inf)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        p = points[lo:hi][:, None, :]  # (P, 1, 3)
        ap = p - a[None, :, :]
        d1 = np.einsum("fc,pfc->pf", ab, ap)
        d2 = np.einsum("fc,pfc->pf", ac, ap)
        bp = p - b[None, :, :]
        d3 = np.einsum("fc,pfc->pf", ab, bp)
        d4 = np.einsum("fc,pfc->pf", ac, bp)
        cp = p - c[None, :, :]
        d5 = np.einsum("fc,pfc->pf", ab, cp)
        d6 = np.einsum("fc,pfc->pf", ac, cp)
        va = d3 * d6 - d5 * d4
        vb = d5 * d2 - d1 * d6
        vc = d1 * d4 - d3 * d2
        denom_ab = d1 - d3
        denom_ac = d2 - d6
        # closest point per region of the triangle (Ericson's case split)
        closest = a[None, :, :] + np.zeros_like(ap)
        region_b = (d3 >= 0) & (d4 <= d3)
        region_c = (d6 >= 0) & (d5 <= d6)
        t_ab = np.divide(d1, denom_ab, out=np.zeros_like(d1), where=denom_ab != 0)
        edge_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t_ac = np.divide(d2, denom_ac, out=np.zeros_like(d2), where=denom_ac != 0)
        edge_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        seg = (d4 - d3) / np.where((d4 - d3) + (d5 - d6) == 0, 1.0, (d4 - d3) + (d5 - d6))
        edge_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        denom = va + vb + vc
        vv = np.divide(vb, denom, out=np.zeros_like(vb), where=denom != 0)
        ww = np.divide(vc, denom, out=np.zeros_like(vc), where=denom != 0)
        interior = a[None] + vv[..., None] * ab[None] + ww[..., None] * ac[None]
        closest = np.where(edge_bc[..., None], b[None] + seg[..., None] * (c - b)[None], interior)
        closest = np.where(edge_ac[..., None], a[None] + np.clip(t_ac, 0, 1)[..., None] * ac[None], closest)
        closest = np.where(edge_ab[..., None], a[None] + np.clip(t_ab, 0, 1)[..., None] * ab[None], closest)
        closest = np.where(region_c[..., None], c[None] + np.zeros_like(ap), closest)
        closest = np.where(region_b[..., None], b[None] + np.zeros_like(ap), closest)
        vertex_a = (d1 <= 0) & (d2 <= 0)
        closest = np.where(vertex_a[..., None], a[None] + np.zeros_like(ap), closest)
        dists = np.linalg.norm(p - closest, axis=2)
        out[lo:hi] = dists.min(axis=1)
    return out
