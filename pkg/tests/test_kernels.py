import numpy as np
import pytest

from specmesh.kernels import BACKEND, _geomnp
from specmesh.primitives import cube, icosphere

try:
    from specmesh.kernels import _geomfast
    BACKENDS = [_geomnp, _geomfast]
except ImportError:  # extension not built; fallback still fully covered
    _geomfast = None
    BACKENDS = [_geomnp]


def _ray_workload(seed, n_pts=200):
    rng = np.random.default_rng(seed)
    mesh = icosphere(2, radius=0.75)
    tri = mesh.positions[mesh.faces]
    pts = rng.uniform(-1.2, 1.2, size=(n_pts, 3))
    dirs = rng.normal(size=(n_pts, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return pts, dirs, tri, mesh


class TestBackendsAgree:
    @pytest.mark.skipif(_geomfast is None, reason="compiled kernels unavailable")
    @pytest.mark.parametrize("seed", range(3))
    def test_ray_crossings_match(self, seed):
        pts, dirs, tri, _ = _ray_workload(seed)
        c1, g1 = _geomnp.ray_crossings(pts, dirs, tri)
        c2, g2 = _geomfast.ray_crossings(pts, dirs, tri)
        assert np.array_equal(c1, c2)
        assert np.array_equal(g1, g2)

    @pytest.mark.skipif(_geomfast is None, reason="compiled kernels unavailable")
    def test_ray_crossings_with_exclusions_match(self):
        n_pts = 162
        _, dirs, tri, mesh = _ray_workload(7, n_pts=n_pts)
        pts = mesh.positions
        indptr = np.arange(n_pts + 1, dtype=np.int64) * 2
        indices = np.tile(np.array([0, 1], dtype=np.int64), n_pts)
        c1, g1 = _geomnp.ray_crossings(pts, dirs, tri, indptr, indices)
        c2, g2 = _geomfast.ray_crossings(pts, dirs, tri, indptr, indices)
        assert np.array_equal(c1, c2)
        assert np.array_equal(g1, g2)

    @pytest.mark.skipif(_geomfast is None, reason="compiled kernels unavailable")
    @pytest.mark.parametrize("seed", range(3))
    def test_nearest_vertex_match(self, seed):
        rng = np.random.default_rng(seed)
        q = rng.normal(size=(50, 3))
        r = rng.normal(size=(80, 3))
        i1, d1 = _geomnp.nearest_vertex(q, r)
        i2, d2 = _geomfast.nearest_vertex(q, r)
        assert np.array_equal(i1, i2)
        assert np.allclose(d1, d2, atol=1e-14)
        excl = rng.integers(-1, 80, size=50)
        i1, d1 = _geomnp.nearest_vertex(q, r, excl)
        i2, d2 = _geomfast.nearest_vertex(q, r, excl)
        assert np.array_equal(i1, i2)

    @pytest.mark.skipif(_geomfast is None, reason="compiled kernels unavailable")
    @pytest.mark.parametrize("seed", range(3))
    def test_point_triangle_match(self, seed):
        rng = np.random.default_rng(seed)
        mesh = cube(0.8)
        tri = mesh.positions[mesh.faces]
        pts = rng.uniform(-1, 1, size=(60, 3))
        d1 = _geomnp.point_triangle_dists(pts, tri)
        d2 = _geomfast.point_triangle_dists(pts, tri)
        assert np.allclose(d1, d2, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.split("_")[-1])
class TestKernelSemantics:
    def test_parity_inside_outside(self, impl):
        mesh = icosphere(1)
        tri = mesh.positions[mesh.faces]
        pts = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
        dirs = np.array([[0.2, 0.3, 0.93], [0.5, 0.5, 0.7]])
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        counts, grazing = impl.ray_crossings(pts, dirs, tri)
        assert grazing[0] == 0 and grazing[1] == 0
        assert counts[0] % 2 == 1
        assert counts[1] % 2 == 0

    def test_grazing_flagged_on_vertex_hit(self, impl):
        mesh = icosphere(1)
        tri = mesh.positions[mesh.faces]
        # aim straight at a vertex: must be flagged, not silently counted
        origin = np.array([[2.0, 0.0, 0.0]])
        towards = mesh.positions[0] - origin[0]
        towards /= np.linalg.norm(towards)
        _, grazing = impl.ray_crossings(origin, towards[None, :], tri)
        assert grazing[0] == 1

    def test_nearest_vertex_brute_force(self, impl):
        rng = np.random.default_rng(11)
        q = rng.normal(size=(25, 3))
        r = rng.normal(size=(40, 3))
        idx, dist = impl.nearest_vertex(q, r)
        d2 = np.sum((q[:, None] - r[None]) ** 2, axis=2)
        assert np.array_equal(idx, np.argmin(d2, axis=1))
        assert np.allclose(dist, np.sqrt(d2.min(axis=1)), atol=1e-14)

    def test_nearest_vertex_excludes_self(self, impl):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
        idx, dist = impl.nearest_vertex(pts, pts, np.array([0, 1, 2]))
        assert idx.tolist() == [1, 0, 1]
        assert np.allclose(dist, [1.0, 1.0, 2.0])

    def test_point_triangle_analytic(self, impl):
        tri = np.array([[[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]]])
        pts = np.array([
            [0.25, 0.25, 0.5],   # above interior: distance = height
            [-1.0, -1.0, 0.0],   # beyond vertex a
            [0.5, -2.0, 0.0],    # below edge ab
            [2.0, 2.0, 0.0],     # beyond edge bc
        ])
        d = impl.point_triangle_dists(pts, tri)
        expected = [0.5, np.sqrt(2.0), 2.0, 1.5 * np.sqrt(2.0)]
        assert np.allclose(d, expected, atol=1e-12)

    def test_point_triangle_sampling_oracle(self, impl):
        rng = np.random.default_rng(5)
        tri = rng.normal(size=(3, 3, 3))
        pts = rng.normal(size=(10, 3)) * 1.5
        d = impl.point_triangle_dists(pts, tri)
        # oracle: dense barycentric sampling of each triangle
        grid = []
        n = 220
        for i in range(n + 1):
            for j in range(n + 1 - i):
                grid.append((i / n, j / n))
        grid = np.array(grid)
        samples = []
        for t in tri:
            samples.append((1 - grid[:, :1] - grid[:, 1:]) * t[0] + grid[:, :1] * t[1] + grid[:, 1:] * t[2])
        samples = np.concatenate(samples)
        brute = np.min(np.linalg.norm(pts[:, None] - samples[None], axis=2), axis=1)
        assert np.all(d <= brute + 1e-12)
        assert np.allclose(d, brute, atol=2e-2)  # sampling resolution bound


def test_backend_reports_name():
    assert BACKEND in ("numpy", "cython")
