import numpy as np
import pytest

from wsvgae.graphs import SparseGraph, normalize
from wsvgae.ndmath import (
    RngStream,
    derive_seed,
    finite_diff_grad,
    gaussian_sample,
    glorot_init,
    relu,
    relu_backward,
    sigmoid,
    spmm,
)


def random_norm_adj(n: int, p: float, seed: int):
    rng = np.random.default_rng(seed)
    dense = np.triu(rng.random((n, n)) < p, 1)
    u, v = np.nonzero(dense)
    return normalize(SparseGraph.from_edges(n, u, v))


class TestSpmm:
    def test_identity_operator(self):
        a = normalize(SparseGraph.from_edges(3, np.array([], dtype=np.int64), np.array([], dtype=np.int64)))
        b = np.arange(6, dtype=np.float64).reshape(3, 2)
        assert np.array_equal(spmm(a, b), b)

    def test_two_node_hand_product(self):
        a = normalize(SparseGraph.from_edges(2, np.array([0]), np.array([1])))
        np.testing.assert_allclose(spmm(a, np.array([[1.0], [3.0]])), [[2.0], [2.0]], atol=1e-15)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(200):
            n = int(rng.integers(2, 17))
            a = random_norm_adj(n, 0.4, trial)
            b = rng.normal(size=(n, int(rng.integers(1, 6))))
            got = spmm(a, b)
            want = a.to_dense() @ b
            scale = np.abs(want).max() + 1e-30
            assert np.abs(got - want).max() / scale <= 1e-12

    def test_shape_mismatch(self):
        a = random_norm_adj(4, 0.5, 1)
        with pytest.raises(ValueError):
            spmm(a, np.ones((5, 2)))


class TestRelu:
    def test_forward(self):
        assert relu(np.array([[-1.0, 0.0, 2.0]])).tolist() == [[0.0, 0.0, 2.0]]

    def test_backward_mask(self):
        out = relu_backward(np.array([[-1.0, 2.0]]), np.array([[5.0, 7.0]]))
        assert out.tolist() == [[0.0, 7.0]]

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 5))
        x[np.abs(x) < 0.05] = 0.5  # stay away from the kink
        c = rng.normal(size=(5, 5))
        grad = relu_backward(x, c)
        fd = finite_diff_grad(lambda m: float((relu(m) * c).sum()), x, h=1e-6)
        assert np.abs(grad - fd).max() <= 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            relu_backward(np.ones((2, 2)), np.ones((2, 3)))


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_symmetry(self):
        for x in (1.0, -1.0, 10.0, -10.0, 100.0, -100.0):
            assert abs(sigmoid(np.array([x]))[0] + sigmoid(np.array([-x]))[0] - 1.0) <= 1e-15

    def test_symmetry_range(self):
        x = np.linspace(-30, 30, 2001)
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-15)

    def test_large_inputs_saturate_without_overflow(self):
        with np.errstate(over="raise"):
            val = sigmoid(np.array([500.0, 700.0, -700.0]))
        assert 1.0 - 1e-12 < val[0] <= 1.0
        assert val[1] == 1.0
        assert 0.0 < val[2] < 1e-300

    def test_outputs_in_open_unit_interval_for_moderate_inputs(self):
        x = np.linspace(-30, 30, 101)
        s = sigmoid(x)
        assert np.all(s > 0) and np.all(s < 1)


class TestInitializers:
    def test_glorot_bounds(self):
        limit = np.sqrt(6.0 / (40 + 30))
        for seed in (1, 2, 3):
            w = glorot_init(40, 30, RngStream(seed))
            assert w.shape == (40, 30)
            assert np.all(np.abs(w) <= limit)

    def test_glorot_mean_near_zero(self):
        w = glorot_init(200, 500, RngStream(11))
        limit = np.sqrt(6.0 / 700)
        sigma_mean = limit / np.sqrt(3.0 * w.size)
        assert abs(w.mean()) <= 3 * sigma_mean

    def test_glorot_deterministic(self):
        assert np.array_equal(glorot_init(7, 5, RngStream(4)), glorot_init(7, 5, RngStream(4)))

    def test_gaussian_moments(self):
        draws = gaussian_sample(1000, 1000, RngStream(8))
        assert abs(draws.mean()) <= 0.01
        assert abs(draws.var() - 1.0) <= 0.01

    def test_gaussian_deterministic_and_seed_sensitive(self):
        a = gaussian_sample(6, 6, RngStream(9))
        b = gaussian_sample(6, 6, RngStream(9))
        c = gaussian_sample(6, 6, RngStream(10))
        assert np.array_equal(a, b)
        assert np.any(a != c)

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            glorot_init(0, 3, RngStream(1))
        with pytest.raises(ValueError):
            gaussian_sample(3, 0, RngStream(1))


class TestFiniteDiff:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda x: float(0.5 * (x**2).sum()), np.array([3.0, -2.0]))
        np.testing.assert_allclose(grad, [3.0, -2.0], atol=1e-9)

    def test_constant(self):
        grad = finite_diff_grad(lambda x: 1.25, np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(grad, np.zeros(3))

    def test_linear(self):
        a = np.array([2.0, -0.5, 4.0])
        grad = finite_diff_grad(lambda x: float(a @ x), np.zeros(3))
        np.testing.assert_allclose(grad, a, atol=1e-10)

    def test_matrix_shaped_point(self):
        point = np.array([[1.0, 2.0], [3.0, 4.0]])
        grad = finite_diff_grad(lambda x: float((x**2).sum()), point)
        np.testing.assert_allclose(grad, 2 * point, atol=1e-8)


class TestRngStream:
    def test_algorithm_id(self):
        assert RngStream.algorithm == "pcg64"

    def test_derive_seed_stable_and_order_sensitive(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2) != derive_seed(2, 1)

    def test_stream_reproducibility(self):
        s1, s2 = RngStream(123), RngStream(123)
        assert np.array_equal(s1.random(100), s2.random(100))
        assert s1.spawn_seed() == s2.spawn_seed()
        assert np.array_equal(s1.permutation(50), s2.permutation(50))
