import numpy as np
import pytest

from wsvgae.graphs import FeatureMatrix, normalize, sbm_generate
from wsvgae.model import backward, init_params, recon_target
from wsvgae.ndmath import RngStream, gaussian_sample
from wsvgae.optim import Adam, NonFiniteGradientError


class TestAdamStep:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        w = {"a": np.array([[1.0, -2.0], [0.5, 3.0]])}
        before = w["a"].copy()
        Adam(lr=0.1).step(w, {"a": np.zeros((2, 2))})
        assert np.array_equal(w["a"], before)

    def test_first_step_equals_learning_rate(self):
        # bias correction makes m_hat = v_hat = 1, so the step is lr/(1+eps)
        w = {"a": np.array([[0.0]])}
        Adam(lr=0.1).step(w, {"a": np.array([[1.0]])})
        assert abs(w["a"][0, 0] + 0.1) <= 1e-8

    def test_quadratic_convergence(self):
        w = {"t": np.array([[5.0]])}
        adam = Adam(lr=0.05)
        for _ in range(500):
            adam.step(w, {"t": w["t"].copy()})  # gradient of 0.5*t^2 is t
        assert abs(w["t"][0, 0]) < 0.01

    @pytest.mark.parametrize("g", [1e-3, 1.0, 1e3])
    def test_constant_gradient_step_approaches_lr(self, g):
        w = {"a": np.array([[0.0]])}
        adam = Adam(lr=0.02)
        prev = w["a"][0, 0]
        for _ in range(1000):
            prev = w["a"][0, 0]
            adam.step(w, {"a": np.array([[g]])})
        step = abs(w["a"][0, 0] - prev)
        assert abs(step - 0.02) <= 0.01 * 0.02

    def test_non_finite_gradient_aborts_with_step_index(self):
        w = {"a": np.array([[0.0]])}
        adam = Adam(lr=0.1)
        adam.step(w, {"a": np.array([[1.0]])})
        with pytest.raises(NonFiniteGradientError) as err:
            adam.step(w, {"a": np.array([[np.nan]])})
        assert err.value.step == 2

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Adam(lr=0.1).step({"a": np.zeros((2, 2))}, {"a": np.zeros((2, 3))})

    def test_bad_learning_rate(self):
        with pytest.raises(ValueError):
            Adam(lr=0.0)


class TestSharedStateAliasing:
    def test_one_moment_buffer_per_shared_matrix(self):
        graph, _ = sbm_generate([3, 3], 0.9, 0.1, seed=1)
        a_norm = normalize(graph)
        x = FeatureMatrix.identity(graph.n)
        params = init_params(graph.n, [4], 2, True, RngStream(2))
        adam = Adam(lr=0.01)
        eps = gaussian_sample(graph.n, 2, RngStream(3))
        grads = backward(params, a_norm, x, recon_target(graph), eps)
        adam.step(params.named_weights(), grads)
        assert sorted(adam.m) == ["w_hidden_0", "w_out_mu", "w_out_sigma"]

    def test_shared_step_equals_tied_step_on_presummed_gradients(self):
        # 6-node case: updating the shared matrix must be bit-identical to
        # updating one tied copy with the two towers' gradients pre-summed
        graph, _ = sbm_generate([3, 3], 0.9, 0.1, seed=4)
        a_norm = normalize(graph)
        x = FeatureMatrix.identity(graph.n)
        shared = init_params(graph.n, [4], 2, True, RngStream(5))
        tied = init_params(graph.n, [4], 2, False, RngStream(6))
        tied.hidden_mu[0][...] = shared.hidden_mu[0]
        tied.hidden_sigma[0][...] = shared.hidden_mu[0]
        tied.out_mu[...] = shared.out_mu
        tied.out_sigma[...] = shared.out_sigma

        eps = gaussian_sample(graph.n, 2, RngStream(7))
        target = recon_target(graph)
        g_shared = backward(shared, a_norm, x, target, eps)
        g_tied = backward(tied, a_norm, x, target, eps)
        presummed = g_tied["w_hidden_mu_0"] + g_tied["w_hidden_sigma_0"]

        Adam(lr=0.05).step({"w": shared.hidden_mu[0]}, {"w": g_shared["w_hidden_0"]})
        manual = tied.hidden_mu[0].copy()
        Adam(lr=0.05).step({"w": manual}, {"w": presummed})
        # identical arithmetic only when the gradients agree bitwise
        if np.array_equal(g_shared["w_hidden_0"], presummed):
            assert np.array_equal(shared.hidden_mu[0], manual)
        else:
            np.testing.assert_allclose(shared.hidden_mu[0], manual, rtol=1e-12)
