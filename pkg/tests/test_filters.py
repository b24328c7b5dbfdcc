import numpy as np
import pytest

from conftest import random_mesh_graph
from oracles import central_difference, dense_chebyshev_reference
from specmesh.errors import ArgumentError
from specmesh.filters import (
    ChebyshevSpec,
    GaussianSpec,
    InverseSqrtSpec,
    chebyshev_filter,
    dense_spectral_filter,
    filter_gradient,
    gaussian_response,
    init_theta,
)
from specmesh.graphs import eigendecompose, lambda_max, laplacian, scaled_laplacian


def _full_setup(n, seed, f_in=3, f_out=3, order=3):
    g = random_mesh_graph(n, seed=seed)
    lap = laplacian(g)
    lam = lambda_max(lap)
    scaled = scaled_laplacian(lap, lam)
    spectrum = eigendecompose(lap, n)
    rng = np.random.default_rng(seed + 1000)
    theta = init_theta(order, f_in, f_out, rng)
    signal = rng.normal(size=(n, f_in))
    return lap, lam, scaled, spectrum, theta, signal


class TestDenseSpectralFilter:
    def test_all_pass_identity(self):
        _, _, _, spectrum, _, signal = _full_setup(20, seed=0)
        out = dense_spectral_filter(spectrum, InverseSqrtSpec(tolerance=1.0), signal)
        # tolerance=1.0 clamps nothing relevant; use explicit all-pass instead
        flat = ChebyshevSpec(np.eye(3)[None, :, :])  # order 1, identity channel map
        out = dense_spectral_filter(spectrum, flat, signal)
        assert np.max(np.abs(out - signal)) < 1e-8

    def test_gaussian_keeps_constant_signal(self):
        _, _, _, spectrum, _, _ = _full_setup(15, seed=1)
        const = np.ones((15, 2))
        out = dense_spectral_filter(spectrum, GaussianSpec(sigma=0.5), const)
        assert np.max(np.abs(out - const)) < 1e-8

    def test_inverse_sqrt_finite_on_null_component(self):
        _, _, _, spectrum, _, _ = _full_setup(12, seed=2)
        const = np.ones((12, 1))  # pure lambda=0 component
        out = dense_spectral_filter(spectrum, InverseSqrtSpec(tolerance=1e-8), const)
        assert np.all(np.isfinite(out))
        # the zero eigenvalue is clamped to the tolerance: gain 1/sqrt(tol)
        assert np.allclose(out, const / np.sqrt(1e-8))

    def test_partial_spectrum_rejected(self):
        lap, _, _, _, _, signal = _full_setup(10, seed=3)
        partial = eigendecompose(lap, 5)
        with pytest.raises(ArgumentError):
            dense_spectral_filter(partial, GaussianSpec(), signal)

    def test_gaussian_attenuates_high_frequencies(self):
        _, _, _, spectrum, _, _ = _full_setup(25, seed=4)
        gains = gaussian_response(spectrum.eigenvalues, sigma=0.5)
        nonzero = spectrum.eigenvalues > 1e-8
        assert np.all(gains[nonzero] < 1.0)
        for i in np.flatnonzero(nonzero):
            mode = spectrum.eigenvectors[:, i : i + 1]
            out = dense_spectral_filter(spectrum, GaussianSpec(sigma=0.5), mode)
            assert np.linalg.norm(out) < np.linalg.norm(mode)


class TestChebyshevFilter:
    def test_order_one_identity_map(self):
        _, _, scaled, _, _, signal = _full_setup(18, seed=5)
        theta = np.eye(3)[None, :, :]
        out = chebyshev_filter(scaled, theta, signal)
        assert np.max(np.abs(out - signal)) < 1e-12

    @pytest.mark.parametrize("order", [3, 4, 5, 6])
    def test_matches_dense_oracle(self, order):
        lap, lam, scaled, spectrum, theta, signal = _full_setup(50, seed=6, order=order)
        fast = chebyshev_filter(scaled, theta, signal)
        dense = dense_spectral_filter(spectrum, ChebyshevSpec(theta), signal)
        rel = np.linalg.norm(fast - dense) / np.linalg.norm(dense)
        assert rel < 1e-5
        reference = dense_chebyshev_reference(lap.matrix.toarray(), lam, theta, signal)
        assert np.linalg.norm(fast - reference) / np.linalg.norm(reference) < 1e-5

    def test_linear_in_signal(self):
        _, _, scaled, _, theta, signal = _full_setup(30, seed=7)
        rng = np.random.default_rng(8)
        other = rng.normal(size=signal.shape)
        a, b = 0.7, -1.3
        combined = chebyshev_filter(scaled, theta, a * signal + b * other)
        split = a * chebyshev_filter(scaled, theta, signal) + b * chebyshev_filter(scaled, theta, other)
        assert np.max(np.abs(combined - split)) < 1e-9

    def test_recurrence_bounded_in_eigenbasis(self):
        _, _, scaled, spectrum, _, _ = _full_setup(20, seed=9)
        lam_scaled = 2.0 * spectrum.eigenvalues / spectrum.eigenvalues[-1] - 1.0
        t_prev = np.ones_like(lam_scaled)
        t_cur = lam_scaled.copy()
        for _ in range(8):
            assert np.max(np.abs(t_prev)) <= 1.0 + 1e-9
            t_prev, t_cur = t_cur, 2.0 * lam_scaled * t_cur - t_prev

    def test_shape_mismatch_rejected(self):
        _, _, scaled, _, theta, signal = _full_setup(10, seed=10)
        with pytest.raises(ArgumentError):
            chebyshev_filter(scaled, theta, signal[:, :2])
        with pytest.raises(ArgumentError):
            chebyshev_filter(scaled, theta, signal[:-1])


class TestFilterGradient:
    def test_zero_upstream_zero_grads(self):
        _, _, scaled, _, theta, signal = _full_setup(12, seed=11)
        gt, gs = filter_gradient(scaled, theta, signal, np.zeros((12, 3)))
        assert np.all(gt == 0)
        assert np.all(gs == 0)

    def test_matches_finite_differences(self):
        _, _, scaled, _, theta, signal = _full_setup(14, seed=12, f_in=2, f_out=3)
        rng = np.random.default_rng(13)
        probe = rng.normal(size=(14, 3))
        gt, gs = filter_gradient(scaled, theta, signal, probe)

        def loss_theta(th):
            return float(np.sum(chebyshev_filter(scaled, th, signal) * probe))

        def loss_signal(x):
            return float(np.sum(chebyshev_filter(scaled, theta, x) * probe))

        num_t = central_difference(loss_theta, theta.copy(), h=1e-4)
        num_s = central_difference(loss_signal, signal.copy(), h=1e-4)
        rel_t = np.abs(gt - num_t) / np.maximum.reduce([np.abs(gt), np.abs(num_t), np.full_like(gt, 1e-6)])
        rel_s = np.abs(gs - num_s) / np.maximum.reduce([np.abs(gs), np.abs(num_s), np.full_like(gs, 1e-6)])
        assert rel_t.max() < 1e-4
        assert rel_s.max() < 1e-4

    def test_symmetry_preserved(self):
        # symmetric operator + symmetric perturbation pattern: gradient wrt a
        # signal shared by two symmetric vertices stays equal
        from specmesh.graphs import graph_from_edges

        g = graph_from_edges(np.zeros((4, 3)), [(0, 1), (1, 2), (2, 3), (3, 0)])
        lap = laplacian(g)
        scaled = scaled_laplacian(lap, lambda_max(lap))
        theta = init_theta(3, 1, 1, np.random.default_rng(0))
        signal = np.array([[1.0], [2.0], [1.0], [2.0]])
        upstream = np.array([[1.0], [1.0], [1.0], [1.0]])
        _, gs = filter_gradient(scaled, theta, signal, upstream)
        # vertices 0/2 and 1/3 are interchangeable in C4 with this signal
        assert abs(gs[0, 0] - gs[2, 0]) < 1e-12
        assert abs(gs[1, 0] - gs[3, 0]) < 1e-12


class TestSpecValidation:
    def test_bad_specs_rejected(self):
        with pytest.raises(ArgumentError):
            GaussianSpec(sigma=0.0)
        with pytest.raises(ArgumentError):
            InverseSqrtSpec(tolerance=0.0)
        with pytest.raises(ArgumentError):
            ChebyshevSpec(np.zeros((2, 2)))

    def test_theta_init_bounds(self):
        theta = init_theta(3, 4, 5, np.random.default_rng(0))
        assert theta.shape == (3, 4, 5)
        assert np.max(np.abs(theta)) <= 1.0 / np.sqrt(12)
