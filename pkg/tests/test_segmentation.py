import json

import numpy as np
import pytest

from conftest import random_mesh_graph
from specmesh.errors import ArgumentError
from specmesh.graphs import build_mesh_graph, graph_from_edges
from specmesh.primitives import icosphere
from specmesh.segmentation import (
    ClusterAssignment,
    cluster_feature_broadcast,
    load_assignment_json,
    save_assignment_json,
    segment,
)


def _disjoint_spheres_graph(n_spheres, subdivisions=1):
    meshes = [icosphere(subdivisions, center=(3.0 * i, 0, 0)) for i in range(n_spheres)]
    pos = np.concatenate([m.positions for m in meshes])
    faces = []
    offset = 0
    for m in meshes:
        faces.append(m.faces + offset)
        offset += m.n_vertices
    return build_mesh_graph(pos, np.concatenate(faces)), [m.n_vertices for m in meshes]


def _clustered_graph(seed=0):
    """Four dense 12-node cliques joined by single bridges: unambiguous clusters."""
    rng = np.random.default_rng(seed)
    edges = []
    for c in range(4):
        base = 12 * c
        edges += [(base + i, base + j) for i in range(12) for j in range(i + 1, 12)
                  if rng.random() < 0.8]
        edges += [(base + i, base + i + 1) for i in range(11)]
    edges += [(11, 12), (23, 24), (35, 36)]
    return graph_from_edges(rng.normal(size=(48, 3)), edges)


class TestSegment:
    def test_two_disjoint_spheres_recovered(self):
        g, sizes = _disjoint_spheres_graph(2)
        result = segment(g, K=2, seed=0)
        labels = result.labels
        first, second = labels[: sizes[0]], labels[sizes[0]:]
        assert len(set(first.tolist())) == 1
        assert len(set(second.tolist())) == 1
        assert first[0] != second[0]

    @pytest.mark.parametrize("seed", range(5))
    def test_three_components_any_seed(self, seed):
        g, sizes = _disjoint_spheres_graph(3)
        labels = segment(g, K=3, seed=seed).labels
        bounds = np.cumsum([0] + sizes)
        groups = [set(labels[bounds[i]:bounds[i + 1]].tolist()) for i in range(3)]
        assert all(len(grp) == 1 for grp in groups)
        assert len(set().union(*groups)) == 3

    def test_k_one_all_zero(self):
        g = random_mesh_graph(30, seed=3)
        assert np.all(segment(g, K=1, seed=1).labels == 0)

    def test_icosphere_seven_clusters_nonempty(self, ico162):
        g = build_mesh_graph(ico162.positions, ico162.faces)
        result = segment(g, K=7, seed=0)
        assert np.all(result.cluster_sizes() > 0)

    def test_deterministic(self):
        g = _clustered_graph()
        a = segment(g, K=4, seed=9)
        b = segment(g, K=4, seed=9)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.centroids, b.centroids)

    @pytest.mark.parametrize("perm_seed", range(5))
    def test_relabeling_invariance(self, perm_seed):
        g = _clustered_graph()
        base = segment(g, K=4, seed=0).labels
        rng = np.random.default_rng(perm_seed)
        perm = rng.permutation(g.n_vertices)
        # vertex i of the permuted graph is vertex perm[i] of the original
        adj = g.adjacency.toarray()[np.ix_(perm, perm)]
        edges = np.argwhere(np.triu(adj, 1))
        permuted = graph_from_edges(g.positions[perm], edges)
        labels = segment(permuted, K=4, seed=0).labels
        partition = lambda lab: {frozenset(np.flatnonzero(lab == k).tolist()) for k in range(4)}
        original_on_permuted = base[perm]
        assert partition(labels) == partition(original_on_permuted)

    def test_bad_arguments(self):
        g = random_mesh_graph(10, seed=0)
        with pytest.raises(ArgumentError):
            segment(g, K=0)
        with pytest.raises(ArgumentError):
            segment(g, K=11)
        with pytest.raises(ArgumentError):
            segment(g, K=3, n_eigvecs=2)


class TestClusterFeatureBroadcast:
    def test_k1_broadcast(self):
        assignment = ClusterAssignment(labels=np.zeros(5, dtype=np.int32), K=1,
                                       centroids=np.zeros((1, 1)))
        feats = np.array([[2.0, -1.0]])
        pos = np.arange(15, dtype=float).reshape(5, 3)
        out = cluster_feature_broadcast(assignment, feats, pos)
        assert out.shape == (5, 5)
        assert np.all(out[:, :2] == feats[0])
        assert np.array_equal(out[:, 2:], pos)

    def test_token_width_804_by_259(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(7, size=804).astype(np.int32)
        assignment = ClusterAssignment(labels=labels, K=7, centroids=np.zeros((7, 1)))
        out = cluster_feature_broadcast(assignment, rng.normal(size=(7, 256)),
                                        rng.normal(size=(804, 3)))
        assert out.shape == (804, 259)

    @pytest.mark.parametrize("seed", range(5))
    def test_consistent_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(4, size=20).astype(np.int32)
        feats = rng.normal(size=(4, 6))
        pos = rng.normal(size=(20, 3))
        assignment = ClusterAssignment(labels=labels, K=4, centroids=np.zeros((4, 1)))
        base = cluster_feature_broadcast(assignment, feats, pos)
        perm = rng.permutation(4)
        relabel = np.argsort(perm)  # label k becomes relabel[k]
        permuted_assignment = ClusterAssignment(labels=relabel[labels].astype(np.int32),
                                                K=4, centroids=np.zeros((4, 1)))
        assert np.array_equal(
            cluster_feature_broadcast(permuted_assignment, feats[perm], pos), base)

    def test_row_depends_only_on_own_cluster(self):
        rng = np.random.default_rng(1)
        labels = np.array([0, 1, 1, 2], dtype=np.int32)
        assignment = ClusterAssignment(labels=labels, K=3, centroids=np.zeros((3, 1)))
        feats = rng.normal(size=(3, 4))
        pos = rng.normal(size=(4, 3))
        base = cluster_feature_broadcast(assignment, feats, pos)
        feats2 = feats.copy()
        feats2[2] += 10.0  # vertex 0 is in cluster 0; cluster 2 changes
        out = cluster_feature_broadcast(assignment, feats2, pos)
        assert np.array_equal(out[0], base[0])
        assert not np.array_equal(out[3], base[3])

    def test_shape_mismatch_rejected(self):
        assignment = ClusterAssignment(labels=np.zeros(3, dtype=np.int32), K=1,
                                       centroids=np.zeros((1, 1)))
        with pytest.raises(ArgumentError):
            cluster_feature_broadcast(assignment, np.zeros((2, 4)), np.zeros((3, 3)))
        with pytest.raises(ArgumentError):
            cluster_feature_broadcast(assignment, np.zeros((1, 4)), np.zeros((4, 3)))


class TestAssignmentJson:
    def test_roundtrip(self):
        assignment = ClusterAssignment(labels=np.array([0, 2, 1], dtype=np.int32), K=3,
                                       centroids=np.zeros((3, 2)))
        text = save_assignment_json(assignment)
        payload = json.loads(text)
        assert payload == {"K": 3, "labels": [0, 2, 1]}
        back = load_assignment_json(text)
        assert back.K == 3
        assert np.array_equal(back.labels, assignment.labels)

    def test_bad_labels_rejected(self):
        with pytest.raises(ArgumentError):
            load_assignment_json('{"K": 2, "labels": [0, 5]}')
