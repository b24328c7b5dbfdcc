import numpy as np
import pytest

from oracles import union_find_components
from specmesh.errors import ArgumentError, ParseError
from specmesh.graphs import build_mesh_graph
from specmesh.meshes import (
    TriMesh,
    edge_set,
    is_watertight,
    load_obj,
    save_obj,
    subsample_to_count,
    subsample_uniform,
)
from specmesh.primitives import cube, hand_template_obj, icosphere

QUAD_OBJ = """# a single quad
v 0.0 0.0 0.0
v 1.0 0.0 0.0
v 1.0 1.0 0.0
v 0.0 1.0 0.0
f 1 2 3 4
"""


class TestLoadObj:
    def test_quad_splits_into_two_triangles(self):
        mesh = load_obj(QUAD_OBJ)
        assert mesh.n_vertices == 4
        assert mesh.n_faces == 2
        assert np.array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])

    def test_hand_template_quads(self):
        mesh = load_obj(hand_template_obj())
        assert mesh.n_vertices == 4023
        assert mesh.n_faces == 8016

    def test_bad_face_index_names_line(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"
        with pytest.raises(ParseError, match="line 4"):
            load_obj(text)

    def test_malformed_vertex_names_line(self):
        with pytest.raises(ParseError, match="line 2"):
            load_obj("v 0 0 0\nv 1 zzz 0\n")

    def test_comments_and_unknown_records_ignored(self):
        text = "# header\nvn 0 0 1\n" + QUAD_OBJ
        assert load_obj(text).n_faces == 2

    def test_roundtrip_is_fixed_point(self):
        rng = np.random.default_rng(0)
        mesh = icosphere(1, radius=0.07)
        mesh = mesh.with_positions(mesh.positions + rng.normal(scale=1e-3, size=mesh.positions.shape))
        once = load_obj(save_obj(mesh))
        twice = load_obj(save_obj(once))
        assert np.array_equal(once.positions, mesh.positions)
        assert np.array_equal(once.faces, mesh.faces)
        assert np.array_equal(twice.positions, once.positions)
        assert np.array_equal(twice.faces, once.faces)

    def test_non_manifold_flagged(self):
        # three triangles sharing one edge
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 0 -1 0\nf 1 2 3\nf 1 2 4\nf 1 2 5\n"
        assert load_obj(text).non_manifold

    def test_normals_unit_length(self):
        mesh = load_obj(hand_template_obj())
        assert np.max(np.abs(np.linalg.norm(mesh.normals, axis=1) - 1.0)) < 1e-6


class TestSubsample:
    def test_factor_one_is_identity(self, ico162):
        m = subsample_uniform(ico162, 1, seed=0)
        assert np.array_equal(m.kept_indices, np.arange(162))
        assert np.array_equal(m.coarse_faces, ico162.faces)

    def test_hand_counts(self, hand_mesh):
        m = subsample_uniform(hand_mesh, 10, seed=0)
        assert m.n_kept in (402, 403)
        assert m.n_kept == 403  # ceil(4023 / 10)
        two_hand_tokens = 2 * subsample_to_count(hand_mesh, 402, seed=0).n_kept
        assert two_hand_tokens == 804

    def test_deterministic(self, ico162):
        a = subsample_uniform(ico162, 2, seed=5)
        b = subsample_uniform(ico162, 2, seed=5)
        assert np.array_equal(a.kept_indices, b.kept_indices)
        assert np.array_equal(a.coarse_faces, b.coarse_faces)

    def test_kept_indices_strictly_increasing(self, ico162):
        m = subsample_uniform(ico162, 3, seed=2)
        assert np.all(np.diff(m.kept_indices) > 0)

    def test_spread_beats_random_baseline(self, ico162):
        m = subsample_uniform(ico162, 2, seed=0)
        assert m.n_kept == 81

        def min_pairwise(points):
            d = np.linalg.norm(points[:, None] - points[None, :], axis=2)
            return d[np.triu_indices(len(points), 1)].min()

        fps_min = min_pairwise(ico162.positions[m.kept_indices])
        baseline = np.mean([
            min_pairwise(ico162.positions[np.random.default_rng(s).choice(162, 81, replace=False)])
            for s in range(100)
        ])
        assert fps_min >= 0.5 * baseline

    def test_factor_errors(self, ico162):
        with pytest.raises(ArgumentError):
            subsample_uniform(ico162, 0, seed=0)
        with pytest.raises(ArgumentError):
            subsample_uniform(ico162, 163, seed=0)


class TestEdgeSet:
    def test_equilateral_triangle(self):
        pos = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
        es = edge_set(TriMesh(positions=pos, faces=np.array([[0, 1, 2]], dtype=np.int32)))
        assert es.n_edges == 3
        assert np.allclose(es.lengths, 1.0)

    def test_unit_cube_enumeration(self):
        es = edge_set(cube(1.0))
        assert es.n_edges == 18
        lengths = np.sort(es.lengths)
        # oracle: 12 cube sides of length 1 plus 6 face diagonals of sqrt(2)
        assert np.allclose(lengths[:12], 1.0)
        assert np.allclose(lengths[12:], np.sqrt(2.0))

    def test_zero_length_edge_included(self):
        pos = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0]], dtype=float)
        es = edge_set(TriMesh(positions=pos, faces=np.array([[0, 1, 2]], dtype=np.int32)))
        assert es.n_edges == 3
        assert np.min(es.lengths) == 0.0

    def test_lengths_match_positions(self, ico162):
        es = edge_set(ico162)
        direct = np.linalg.norm(
            ico162.positions[es.edges[:, 0]] - ico162.positions[es.edges[:, 1]], axis=1)
        assert np.max(np.abs(es.lengths - direct)) < 1e-12

    def test_no_duplicate_pairs(self, ico162):
        es = edge_set(ico162)
        assert len({(int(i), int(j)) for i, j in es.edges}) == es.n_edges

    def test_handshake_against_adjacency(self, ico162):
        es = edge_set(ico162)
        g = build_mesh_graph(ico162.positions, ico162.faces)
        degree_sum = sum(int(g.degrees[i] + g.degrees[j]) for i, j in es.edges)
        # each endpoint's degree counted once per incident edge: sum equals
        # sum over vertices of degree^2; cross-check total edge count instead
        assert es.n_edges == int(g.degrees.sum()) // 2
        assert degree_sum == int(np.sum(g.degrees**2))


class TestWatertight:
    def test_icosphere_closed(self, ico162):
        assert is_watertight(ico162)

    def test_single_triangle_open(self):
        mesh = TriMesh(positions=np.eye(3), faces=np.array([[0, 1, 2]], dtype=np.int32))
        assert not is_watertight(mesh)

    def test_cube_missing_face_open(self):
        c = cube(1.0)
        holed = TriMesh(positions=c.positions, faces=c.faces[:-1])
        assert not is_watertight(holed)
        # oracle check: removing one triangle leaves exactly 3 boundary edges
        from specmesh.meshes import _edge_face_counts

        counts = _edge_face_counts(holed.faces)
        assert int(np.sum(counts == 1)) == 3

    def test_hand_template_open_at_wrist(self, hand_mesh):
        assert not is_watertight(hand_mesh)
        assert union_find_components(hand_mesh.n_vertices,
                                     edge_set(hand_mesh).edges) == 1
