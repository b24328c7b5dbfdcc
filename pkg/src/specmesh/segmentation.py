"""Mesh segmentation by spectral clustering of the graph Laplacian.

Vertices are embedded by rows of the low-frequency Laplacian eigenvectors
and grouped with k-means. For a connected graph the constant eigenvector is
skipped (it carries no information); for a disconnected graph the whole
null space is kept, which makes component recovery exact. The resulting
clusters bind region-specific image features to mesh regions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .graphs import MeshGraph, eigendecompose, laplacian

KMEANS_MAX_ITERS = 100
KMEANS_TOL = 1e-8
_CONSTANT_COLUMN_TOL = 1e-8


@dataclass(frozen=True)
class ClusterAssignment:
    """Vertex labels in [0, K) plus the k-means centroids that produced them."""

    labels: np.ndarray  # (V,) int32
    K: int
    centroids: np.ndarray  # (K, d) in spectral-embedding space
    converged: bool = True

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


def segment(g: MeshGraph, K: int, n_eigvecs: int | None = None, seed: int = 0,
            row_normalize: bool = False) -> ClusterAssignment:
    """Spectral clustering of a mesh graph into K clusters.

    ``n_eigvecs`` defaults to K. The embedding uses eigenvectors 2..n+1 when
    the first is constant (connected graph), otherwise 1..n so the null
    space of each component is retained.

    Raises:
        ArgumentError: K outside [1, |V|] or n_eigvecs < K.
    """
    n = g.n_vertices
    if not 1 <= K <= n:
        raise ArgumentError(f"K must be in [1, {n}], got {K}")
    if n_eigvecs is None:
        n_eigvecs = K
    if n_eigvecs < K:
        raise ArgumentError(f"n_eigvecs must be >= K, got {n_eigvecs} < {K}")
    if K == 1:
        return ClusterAssignment(
            labels=np.zeros(n, dtype=np.int32), K=1,
            centroids=np.zeros((1, max(n_eigvecs, 1))), converged=True,
        )
    k_request = min(n_eigvecs + 1, n)
    spectrum = eigendecompose(laplacian(g), k_request)
    first = spectrum.eigenvectors[:, 0]
    if first.max() - first.min() < _CONSTANT_COLUMN_TOL and k_request > 1:
        embedding = spectrum.eigenvectors[:, 1:k_request]
    else:
        embedding = spectrum.eigenvectors[:, : min(n_eigvecs, k_request)]
    if row_normalize:
        norms = np.linalg.norm(embedding, axis=1, keepdims=True)
        embedding = embedding / np.maximum(norms, 1e-12)
    labels, centroids, converged = _kmeans(embedding, K, seed)
    return ClusterAssignment(labels=labels.astype(np.int32), K=K,
                             centroids=centroids, converged=converged)


def _kmeans(points: np.ndarray, K: int, seed: int):
    """Lloyd iterations with greedy (deterministic) k-means++ seeding.

    Seeding is value-driven (max-norm start, then argmax of min squared
    distance), which makes the partition invariant to vertex relabeling on
    graphs without exact embedding ties; ``seed`` is accepted for interface
    stability but the routine is deterministic regardless. Assignment ties
    go to the lowest cluster index; empty clusters are repaired by splitting
    the largest one.
    """
    del seed  # deterministic seeding needs no randomness
    centroids = _kmeans_pp_init(points, K)
    labels = np.zeros(points.shape[0], dtype=np.int64)
    converged = False
    for _ in range(KMEANS_MAX_ITERS):
        d2 = _sq_distances(points, centroids)
        labels = np.argmin(d2, axis=1)  # argmin picks the lowest index on ties
        new_centroids = centroids.copy()
        for k in range(K):
            members = labels == k
            if members.any():
                new_centroids[k] = points[members].mean(axis=0)
        labels, new_centroids = _repair_empty(points, labels, new_centroids, K)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < KMEANS_TOL:
            converged = True
            break
    return labels, centroids, converged


def _kmeans_pp_init(points: np.ndarray, K: int) -> np.ndarray:
    """Greedy k-means++: each center maximizes its distance to the chosen set."""
    first = int(np.argmax(np.sum(points**2, axis=1)))
    chosen = [first]
    d2 = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(K - 1):
        chosen.append(int(np.argmax(d2)))  # argmax breaks ties at the lowest index
        d2 = np.minimum(d2, np.sum((points - points[chosen[-1]]) ** 2, axis=1))
    return points[chosen].copy()


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def _repair_empty(points, labels, centroids, K):
    """Give every empty cluster the farthest point of the largest cluster."""
    for k in range(K):
        if (labels == k).any():
            continue
        sizes = np.bincount(labels, minlength=K)
        big = int(np.argmax(sizes))
        members = np.flatnonzero(labels == big)
        far = members[np.argmax(np.sum((points[members] - centroids[big]) ** 2, axis=1))]
        labels[far] = k
        centroids[k] = points[far]
        centroids[big] = points[labels == big].mean(axis=0)
    return labels, centroids


def cluster_feature_broadcast(assignment: ClusterAssignment,
                              region_features: np.ndarray,
                              template_positions: np.ndarray) -> np.ndarray:
    """Tokens for the transformer: per-vertex region features + 3D position.

    Row i is ``concat(region_features[labels[i]], template_positions[i])``,
    so the output is (V', C+3).

    Raises:
        ArgumentError: shapes inconsistent with the assignment.
    """
    region_features = np.asarray(region_features, dtype=np.float64)
    template_positions = np.asarray(template_positions, dtype=np.float64)
    if region_features.ndim != 2 or region_features.shape[0] != assignment.K:
        raise ArgumentError(
            f"region_features must be ({assignment.K}, C), got {region_features.shape}")
    n = assignment.labels.shape[0]
    if template_positions.shape != (n, 3):
        raise ArgumentError(
            f"template_positions must be ({n}, 3), got {template_positions.shape}")
    return np.concatenate(
        [region_features[assignment.labels], template_positions], axis=1)


def save_assignment_json(assignment: ClusterAssignment) -> str:
    """Persist as the interchange JSON: {"K": int, "labels": [int, ...]}."""
    return json.dumps({"K": assignment.K, "labels": assignment.labels.tolist()})


def load_assignment_json(text: str) -> ClusterAssignment:
    payload = json.loads(text)
    labels = np.asarray(payload["labels"], dtype=np.int32)
    k = int(payload["K"])
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ArgumentError("labels outside [0, K)")
    return ClusterAssignment(labels=labels, K=k, centroids=np.zeros((k, 1)))
