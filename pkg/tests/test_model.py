import numpy as np
import pytest

from wsvgae.graphs import FeatureMatrix, SparseGraph, normalize, sbm_generate
from wsvgae.model import (
    EncoderParams,
    Posterior,
    ReconTarget,
    backward,
    decode_logits,
    elbo_loss,
    encode,
    init_params,
    load_checkpoint,
    param_count,
    recon_target,
    reparameterize,
    save_checkpoint,
)
from wsvgae.ndmath import RngStream, finite_diff_grad, gaussian_sample, sigmoid

from model_checks import max_grad_error, toy_setup


class TestInitParams:
    def test_shared_shapes(self):
        params = init_params(1433, [32], 16, True, RngStream(1))
        assert [w.shape for w in params.hidden_mu] == [(1433, 32)]
        assert params.hidden_sigma is params.hidden_mu
        assert params.out_mu.shape == (32, 16) and params.out_sigma.shape == (32, 16)
        assert params.out_mu is not params.out_sigma

    def test_unshared_duplication(self):
        params = init_params(1433, [32], 16, False, RngStream(1))
        assert params.hidden_sigma is not params.hidden_mu
        assert params.hidden_sigma[0].shape == (1433, 32)
        assert np.any(params.hidden_sigma[0] != params.hidden_mu[0])

    def test_deep_shared_both_hidden_layers(self):
        params = init_params(100, [32, 32], 16, True, RngStream(2))
        assert [w.shape for w in params.hidden_mu] == [(100, 32), (32, 32)]
        assert params.hidden_sigma is params.hidden_mu
        assert sorted(params.named_weights()) == [
            "w_hidden_0", "w_hidden_1", "w_out_mu", "w_out_sigma",
        ]

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            init_params(10, [], 4, True, RngStream(1))
        with pytest.raises(ValueError):
            init_params(10, [0], 4, True, RngStream(1))


class TestEncode:
    def test_single_node_hand_values(self):
        graph = SparseGraph.from_edges(1, np.array([], dtype=np.int64), np.array([], dtype=np.int64))
        a_norm = normalize(graph)
        params = EncoderParams(
            dims=[1, 1, 1],
            ws=True,
            hidden_mu=[np.array([[2.0]])],
            hidden_sigma=[np.array([[2.0]])],
            out_mu=np.array([[3.0]]),
            out_sigma=np.array([[-1.0]]),
        )
        post = encode(params, a_norm, FeatureMatrix.identity(1))
        assert post.mu[0, 0] == 6.0
        assert post.logvar[0, 0] == -2.0

    def test_zero_weights_give_unit_variance_prior(self):
        _, a_norm, x, params, _ = toy_setup(3)
        for w in params.named_weights().values():
            w[...] = 0.0
        post = encode(params, a_norm, x)
        assert np.all(post.mu == 0.0) and np.all(post.logvar == 0.0)

    def test_copied_towers_reproduce_shared_model_bit_exactly(self):
        for hidden in ([5], [5, 4]):
            _, a_norm, x, shared, _ = toy_setup(4, hidden=tuple(hidden), ws=True)
            unshared = init_params(x.f, hidden, 3, False, RngStream(99))
            for l, w in enumerate(shared.hidden_mu):
                unshared.hidden_mu[l][...] = w
                unshared.hidden_sigma[l][...] = w
            unshared.out_mu[...] = shared.out_mu
            unshared.out_sigma[...] = shared.out_sigma
            post_s = encode(shared, a_norm, x)
            post_u = encode(unshared, a_norm, x)
            assert np.array_equal(post_s.mu, post_u.mu)
            assert np.array_equal(post_s.logvar, post_u.logvar)

    def test_hidden_basis_factorization(self):
        _, a_norm, x, params, _ = toy_setup(5, hidden=(5, 4), ws=True)
        post, (b_mu, b_sigma) = encode(params, a_norm, x, return_hidden=True)
        assert b_mu is b_sigma  # shared basis computed once
        assert np.abs(b_mu @ params.out_mu - post.mu).max() <= 1e-12
        assert np.abs(b_mu @ params.out_sigma - post.logvar).max() <= 1e-12

    def test_featureless_matches_explicit_identity(self):
        graph, a_norm, x, params, _ = toy_setup(6)
        explicit = FeatureMatrix.dense(np.eye(graph.n))
        post_implicit = encode(params, a_norm, x)
        post_explicit = encode(params, a_norm, explicit)
        np.testing.assert_allclose(post_implicit.mu, post_explicit.mu, atol=1e-14)

    def test_dimension_mismatch(self):
        _, a_norm, _, params, _ = toy_setup(7)
        with pytest.raises(ValueError):
            encode(params, a_norm, FeatureMatrix.identity(params.dims[0] + 1))


class TestReparameterize:
    def test_vanishing_variance(self):
        post = Posterior(mu=np.full((3, 2), 1.5), logvar=np.full((3, 2), -60.0))
        sample = reparameterize(post, RngStream(1))
        assert np.abs(sample.z - post.mu).max() <= 1e-10

    def test_standard_posterior_returns_eps(self):
        post = Posterior(mu=np.zeros((4, 3)), logvar=np.zeros((4, 3)))
        sample = reparameterize(post, RngStream(2))
        assert np.array_equal(sample.z, sample.eps)

    def test_monte_carlo_mean(self):
        rng = np.random.default_rng(0)
        mu = rng.normal(size=(2, 3))
        logvar = rng.normal(size=(2, 3)) * 0.5
        post = Posterior(mu=mu, logvar=logvar)
        stream = RngStream(5)
        draws = np.stack([reparameterize(post, stream).z for _ in range(100000)])
        sigma = np.exp(0.5 * logvar)
        assert np.all(np.abs(draws.mean(axis=0) - mu) <= 3 * sigma / np.sqrt(100000))


class TestDecode:
    def test_zero_embeddings_give_half(self):
        logits = decode_logits(np.zeros((3, 2)))
        assert np.all(sigmoid(logits) == 0.5)

    def test_hand_dot_product(self):
        z = np.array([[1.0, 2.0], [3.0, -1.0]])
        logits = decode_logits(z, pairs=np.array([[0, 1]]))
        assert logits[0] == 1.0
        assert sigmoid(logits)[0] == pytest.approx(0.7310585786300049, abs=1e-12)

    def test_symmetry_and_diagonal(self):
        z = np.random.default_rng(3).normal(size=(40, 5))
        logits = decode_logits(z)
        assert np.array_equal(logits, logits.T)
        assert np.all(sigmoid(np.diag(logits)) >= 0.5)

    def test_pairs_mode_matches_full_matrix(self):
        # pair path and matrix path accumulate in different orders
        z = np.random.default_rng(4).normal(size=(10, 4))
        full = decode_logits(z)
        pairs = np.array([[0, 1], [2, 9], [5, 5]])
        got = decode_logits(z, pairs)
        np.testing.assert_allclose(got, full[pairs[:, 0], pairs[:, 1]], rtol=1e-12)

    def test_node_limit_refusal(self):
        z = np.zeros((101, 2))
        with pytest.raises(ValueError, match="refusing full"):
            decode_logits(z, node_limit=100)
        assert decode_logits(z, pairs=np.array([[0, 100]])).shape == (1,)


def unit_target(n: int) -> ReconTarget:
    diag = np.arange(n, dtype=np.int64)
    return ReconTarget(num_nodes=n, pos_rows=diag, pos_cols=diag, pos_weight=1.0, norm=1.0)


class TestElboLoss:
    def test_prior_posterior_has_zero_kl(self):
        post = Posterior(mu=np.zeros((4, 2)), logvar=np.zeros((4, 2)))
        loss = elbo_loss(np.zeros((4, 4)), unit_target(4), post)
        assert loss.kl == 0.0

    def test_single_node_kl_half(self):
        post = Posterior(mu=np.array([[1.0]]), logvar=np.array([[0.0]]))
        loss = elbo_loss(np.zeros((1, 1)), unit_target(1), post)
        assert loss.kl == pytest.approx(0.5, abs=1e-15)

    def test_perfect_reconstruction_floor(self):
        graph, _ = sbm_generate([4, 4], 0.9, 0.1, seed=2)
        target = recon_target(graph)
        logits = np.full((8, 8), -40.0)
        logits[target.pos_rows, target.pos_cols] = 40.0
        post = Posterior(mu=np.zeros((8, 2)), logvar=np.zeros((8, 2)))
        loss = elbo_loss(logits, target, post)
        assert 0.0 <= loss.recon < 1e-12
        assert loss.total < 1e-12

    def test_kl_nonnegative_fuzz(self):
        rng = np.random.default_rng(8)
        for _ in range(10000):
            post = Posterior(mu=rng.normal(size=(2, 2)) * 3, logvar=rng.normal(size=(2, 2)) * 4)
            assert elbo_loss(np.zeros((2, 2)), unit_target(2), post).kl >= 0.0

    def test_total_composition_and_weights(self):
        graph, _ = sbm_generate([5, 5], 0.7, 0.2, seed=3)
        target = recon_target(graph)
        rng = np.random.default_rng(9)
        post = Posterior(mu=rng.normal(size=(10, 3)), logvar=rng.normal(size=(10, 3)))
        z = post.mu
        loss = elbo_loss(z @ z.T, target, post, kl_scale=0.25)
        assert loss.total == pytest.approx(loss.norm * loss.recon + 0.25 * loss.kl, rel=1e-15)
        s = target.positives
        assert loss.pos_weight == pytest.approx((100 - s) / s)
        assert loss.norm == pytest.approx(100 / (2.0 * (100 - s)))

    def test_matches_naive_weighted_cross_entropy(self):
        # dense oracle: -[pw*T*log(p) + (1-T)*log(1-p)] averaged over entries
        graph, _ = sbm_generate([4, 3], 0.8, 0.3, seed=4)
        n = graph.n
        target = recon_target(graph)
        rng = np.random.default_rng(10)
        z = rng.normal(size=(n, 3))
        post = Posterior(mu=z, logvar=np.zeros((n, 3)))
        logits = z @ z.T
        t = np.zeros((n, n))
        t[target.pos_rows, target.pos_cols] = 1.0
        p = sigmoid(logits)
        naive = -(target.pos_weight * t * np.log(p) + (1 - t) * np.log(1 - p)).mean()
        loss = elbo_loss(logits, target, post)
        assert loss.recon == pytest.approx(naive, rel=1e-12)

    def test_non_finite_logits_rejected(self):
        post = Posterior(mu=np.zeros((2, 2)), logvar=np.zeros((2, 2)))
        bad = np.array([[0.0, np.inf], [np.inf, 0.0]])
        with pytest.raises(ValueError, match="non-finite"):
            elbo_loss(bad, unit_target(2), post)

    def test_degenerate_target_guard(self):
        graph, _ = sbm_generate([2], 1.0, 1.0, seed=1)  # single edge, n=2
        with pytest.raises(ValueError, match="degenerate"):
            recon_target(graph)  # A+I is all-ones
        override = recon_target(graph, pos_weight=1.0, norm=1.0)
        assert override.pos_weight == 1.0

    def test_subset_target_matches_induced_subgraph(self):
        from wsvgae.graphs import induced_subgraph

        graph, _ = sbm_generate([5, 5], 0.7, 0.2, seed=6)
        nodes = np.array([0, 2, 3, 7, 9])
        target = recon_target(graph, nodes=nodes)
        sub, _ = induced_subgraph(graph, nodes)
        off_diag = target.pos_rows != target.pos_cols
        got = set(zip(target.pos_rows[off_diag].tolist(), target.pos_cols[off_diag].tolist()))
        su, sv = sub.edges()
        want = set(zip(su.tolist(), sv.tolist())) | set(zip(sv.tolist(), su.tolist()))
        assert got == want
        assert (~off_diag).sum() == nodes.size  # one diagonal positive per node


class TestBackward:
    def test_gradients_match_finite_differences(self):
        for seed in range(4):
            for ws in (True, False):
                for hidden in ((5,), (5, 4)):
                    graph, a_norm, x, params, rng = toy_setup(
                        20 + seed, hidden=hidden, ws=ws
                    )
                    eps = gaussian_sample(graph.n, 3, rng)
                    target = recon_target(graph)
                    err = max_grad_error(params, a_norm, x, target, eps)
                    assert err <= 1e-5, f"seed={seed} ws={ws} hidden={hidden}: {err}"

    def test_gradients_with_features_and_subset(self):
        graph, a_norm, x, params, rng = toy_setup(31, ws=True, features=4)
        eps = gaussian_sample(graph.n, 3, rng)
        nodes = np.sort(rng.permutation(graph.n)[:8])
        target = recon_target(graph, nodes=nodes)
        assert max_grad_error(params, a_norm, x, target, eps) <= 1e-5

    def test_gradients_with_dropout_masks(self):
        graph, a_norm, x, params, rng = toy_setup(33, ws=False)
        eps = gaussian_sample(graph.n, 3, rng)
        keep = 0.8
        masks = {
            "mu": [(rng.random(graph.n * 5).reshape(graph.n, 5) < keep) / keep],
            "sigma": [(rng.random(graph.n * 5).reshape(graph.n, 5) < keep) / keep],
        }
        target = recon_target(graph)
        grads = backward(params, a_norm, x, target, eps, dropout_masks=masks)
        worst = 0.0
        for name, w in params.named_weights().items():
            def loss_at(mat, w=w):
                saved = w.copy()
                w[...] = mat
                post = encode(params, a_norm, x, dropout_masks=masks)
                z = post.mu + np.exp(0.5 * post.logvar) * eps
                val = elbo_loss(z @ z.T, target, post).total
                w[...] = saved
                return val
            fd = finite_diff_grad(loss_at, w.copy(), h=1e-5)
            denom = np.maximum(np.maximum(np.abs(grads[name]), np.abs(fd)), 1e-3)
            worst = max(worst, float((np.abs(grads[name] - fd) / denom).max()))
        assert worst <= 1e-5

    def test_zero_weight_network_has_zero_weight_gradients(self):
        # dead ReLU hidden layer: basis B is zero, so every weight gradient
        # vanishes even though the embedding sample (z = eps) does not
        graph, a_norm, x, params, rng = toy_setup(32)
        for w in params.named_weights().values():
            w[...] = 0.0
        eps = gaussian_sample(graph.n, 3, rng)
        grads = backward(params, a_norm, x, recon_target(graph), eps)
        for name, g in grads.items():
            assert np.array_equal(g, np.zeros_like(g)), name

    def test_shared_gradient_is_sum_of_tower_gradients(self):
        for hidden in ((5,), (5, 4)):
            graph, a_norm, x, shared, rng = toy_setup(34, hidden=hidden, ws=True)
            eps = gaussian_sample(graph.n, 3, rng)
            target = recon_target(graph)
            unshared = init_params(x.f, list(hidden), 3, False, RngStream(50))
            for l, w in enumerate(shared.hidden_mu):
                unshared.hidden_mu[l][...] = w
                unshared.hidden_sigma[l][...] = w
            unshared.out_mu[...] = shared.out_mu
            unshared.out_sigma[...] = shared.out_sigma
            g_shared = backward(shared, a_norm, x, target, eps)
            g_unshared = backward(unshared, a_norm, x, target, eps)
            for l in range(len(hidden)):
                summed = g_unshared[f"w_hidden_mu_{l}"] + g_unshared[f"w_hidden_sigma_{l}"]
                np.testing.assert_allclose(
                    g_shared[f"w_hidden_{l}"], summed, rtol=1e-12, atol=1e-15
                )


class TestParamCount:
    def test_featureless_5000_example(self):
        params = init_params(5000, [32], 16, True, RngStream(1))
        assert param_count(params) == 161024
        params = init_params(5000, [32], 16, False, RngStream(1))
        assert param_count(params) == 321024

    def test_minimal_model(self):
        params = init_params(1, [1], 1, True, RngStream(1))
        assert param_count(params) == 3

    @pytest.mark.parametrize("n,dh", [(100, 8), (5000, 32), (777, 5)])
    def test_sharing_saves_n_times_dh(self, n, dh):
        ws = param_count(init_params(n, [dh], 4, True, RngStream(1)))
        nows = param_count(init_params(n, [dh], 4, False, RngStream(1)))
        assert nows - ws == n * dh


class TestCheckpoint:
    def test_roundtrip_reproduces_encode_exactly(self, tmp_path):
        for ws in (True, False):
            graph, a_norm, x, params, _ = toy_setup(40, hidden=(5, 4), ws=ws)
            path = tmp_path / f"ckpt_{ws}.npz"
            save_checkpoint(path, params)
            loaded = load_checkpoint(path)
            assert loaded.ws == ws and loaded.dims == params.dims
            if ws:
                assert loaded.hidden_sigma is loaded.hidden_mu
            before = encode(params, a_norm, x)
            after = encode(loaded, a_norm, x)
            assert np.array_equal(before.mu, after.mu)
            assert np.array_equal(before.logvar, after.logvar)
