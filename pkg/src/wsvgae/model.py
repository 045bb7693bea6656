"""Variational graph autoencoder with optional hidden-weight sharing.

The encoder is an L-layer graph convolution stack (L >= 2): hidden layers
``H = ReLU(A_norm @ H @ W)`` followed by a linear output layer producing
per-node Gaussian parameters (mean and log-variance). With weight sharing
the mean and log-variance towers use the same hidden weight matrices and
differ only in their output layer, so both heads become linear maps of a
single hidden basis ``B = A_norm @ H_last``.

Decoding scores node pairs by inner products of sampled embeddings;
training minimizes the negative evidence lower bound (weighted
reconstruction cross-entropy plus a unit-Gaussian KL penalty). Gradients
are computed analytically in :func:`backward`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import FeatureMatrix, NormalizedAdjacency, SparseGraph
from .ndmath import RngStream, gaussian_sample, glorot_init, relu, relu_backward, spmm

__all__ = [
    "EncoderParams",
    "Posterior",
    "EmbeddingSample",
    "LossBreakdown",
    "ReconTarget",
    "init_params",
    "encode",
    "reparameterize",
    "decode_logits",
    "recon_target",
    "elbo_loss",
    "backward",
    "param_count",
    "save_checkpoint",
    "load_checkpoint",
]

DEFAULT_NODE_LIMIT = 20000


@dataclass
class EncoderParams:
    """Encoder weights for both towers, with optional hidden sharing.

    ``dims`` chains input through hidden sizes to the embedding size d.
    When ``ws`` is true, ``hidden_mu`` and ``hidden_sigma`` are the same
    list object (one storage per hidden layer); output weights are always
    separate.
    """

    dims: list[int]
    ws: bool
    hidden_mu: list[np.ndarray]
    hidden_sigma: list[np.ndarray]
    out_mu: np.ndarray
    out_sigma: np.ndarray

    @property
    def layers(self) -> int:
        return len(self.dims) - 1

    def named_weights(self) -> dict[str, np.ndarray]:
        """Distinct weight matrices under stable names (shared counted once)."""
        named: dict[str, np.ndarray] = {}
        if self.ws:
            for l, w in enumerate(self.hidden_mu):
                named[f"w_hidden_{l}"] = w
        else:
            for l, w in enumerate(self.hidden_mu):
                named[f"w_hidden_mu_{l}"] = w
            for l, w in enumerate(self.hidden_sigma):
                named[f"w_hidden_sigma_{l}"] = w
        named["w_out_mu"] = self.out_mu
        named["w_out_sigma"] = self.out_sigma
        return named

    def copy(self) -> "EncoderParams":
        hidden_mu = [w.copy() for w in self.hidden_mu]
        hidden_sigma = hidden_mu if self.ws else [w.copy() for w in self.hidden_sigma]
        return EncoderParams(
            dims=list(self.dims),
            ws=self.ws,
            hidden_mu=hidden_mu,
            hidden_sigma=hidden_sigma,
            out_mu=self.out_mu.copy(),
            out_sigma=self.out_sigma.copy(),
        )


@dataclass(frozen=True)
class Posterior:
    """Per-node Gaussian parameters: mean and log-variance, both n-by-d."""

    mu: np.ndarray
    logvar: np.ndarray


@dataclass(frozen=True)
class EmbeddingSample:
    """One reparameterized draw z = mu + exp(logvar/2) * eps."""

    z: np.ndarray
    eps: np.ndarray


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    recon: float
    kl: float
    norm: float
    pos_weight: float
    kl_scale: float = 1.0


@dataclass(frozen=True)
class ReconTarget:
    """Positive entries of the reconstruction target over the decode block.

    ``num_nodes`` is the decode block size N; (``pos_rows``, ``pos_cols``)
    list every positive entry of the N-by-N binary target, including both
    symmetric copies and, by convention, the diagonal. ``nodes`` gives the
    original-graph indices of the block (None when decoding all nodes).
    """

    num_nodes: int
    pos_rows: np.ndarray
    pos_cols: np.ndarray
    pos_weight: float
    norm: float
    nodes: np.ndarray | None = None

    @property
    def positives(self) -> int:
        return self.pos_rows.size


def recon_target(
    graph: SparseGraph,
    include_self_loops: bool = True,
    nodes: np.ndarray | None = None,
    pos_weight: float | None = None,
    norm: float | None = None,
) -> ReconTarget:
    """Build the reconstruction target (and class weights) for a train graph.

    The target is the adjacency restricted to ``nodes`` (all nodes when
    None) plus, by default, the diagonal. Unless overridden, the class
    weights follow the sparse-graph convention pos_weight = (N^2 - s)/s
    and norm = N^2 / (2 (N^2 - s)), with s the positive-entry count.
    """
    adj = graph.matrix()
    if nodes is not None:
        nodes = np.asarray(nodes, dtype=np.int64)
        adj = adj[nodes][:, nodes].tocoo()
        n = nodes.size
    else:
        adj = adj.tocoo()
        n = graph.n
    rows = adj.row.astype(np.int64)
    cols = adj.col.astype(np.int64)
    if include_self_loops:
        diag = np.arange(n, dtype=np.int64)
        rows = np.concatenate([rows, diag])
        cols = np.concatenate([cols, diag])
    s = rows.size
    total = n * n
    if pos_weight is None or norm is None:
        if s == 0 or s == total:
            raise ValueError(
                "degenerate reconstruction target (all-positive or all-negative); "
                "pass pos_weight/norm explicitly"
            )
        pos_weight = float(total - s) / s if pos_weight is None else pos_weight
        norm = total / (2.0 * (total - s)) if norm is None else norm
    return ReconTarget(
        num_nodes=n,
        pos_rows=rows,
        pos_cols=cols,
        pos_weight=float(pos_weight),
        norm=float(norm),
        nodes=nodes,
    )


def init_params(
    input_dim: int,
    hidden_dims: list[int],
    d: int,
    ws: bool,
    rng: RngStream,
) -> EncoderParams:
    """Glorot-initialized encoder weights; hidden towers aliased when ws."""
    if input_dim <= 0 or d <= 0 or not hidden_dims or any(h <= 0 for h in hidden_dims):
        raise ValueError("all layer dimensions must be positive")
    dims = [input_dim, *hidden_dims, d]
    hidden_mu = [glorot_init(dims[l], dims[l + 1], rng) for l in range(len(hidden_dims))]
    if ws:
        hidden_sigma = hidden_mu
    else:
        hidden_sigma = [glorot_init(dims[l], dims[l + 1], rng) for l in range(len(hidden_dims))]
    out_mu = glorot_init(dims[-2], dims[-1], rng)
    out_sigma = glorot_init(dims[-2], dims[-1], rng)
    return EncoderParams(
        dims=dims,
        ws=ws,
        hidden_mu=hidden_mu,
        hidden_sigma=hidden_sigma,
        out_mu=out_mu,
        out_sigma=out_sigma,
    )


def _tower_forward(
    weights: list[np.ndarray],
    a_norm: NormalizedAdjacency,
    x: FeatureMatrix,
    masks: list[np.ndarray] | None,
):
    """Hidden stack of one tower; returns (basis B, cache for backward)."""
    pres: list[np.ndarray] = []
    acts: list[np.ndarray] = []  # post-ReLU (and post-dropout) activations
    aggs: list[np.ndarray | None] = []  # A_norm @ activation feeding each layer
    h: np.ndarray | None = None
    for l, w in enumerate(weights):
        if l == 0:
            if x.identity_flag:
                pre = spmm(a_norm, w)
            else:
                pre = spmm(a_norm, x.values @ w)
            aggs.append(None)
        else:
            m = spmm(a_norm, h)
            aggs.append(m)
            pre = m @ w
        pres.append(pre)
        h = relu(pre)
        if masks is not None:
            h = h * masks[l]
        acts.append(h)
    basis = spmm(a_norm, h)
    return basis, {"pres": pres, "acts": acts, "aggs": aggs}


def _tower_backward(
    weights: list[np.ndarray],
    a_norm: NormalizedAdjacency,
    x: FeatureMatrix,
    cache: dict,
    g_basis: np.ndarray,
    masks: list[np.ndarray] | None,
) -> list[np.ndarray]:
    """Gradients of all hidden weights of one tower given d(loss)/d(basis)."""
    grads: list[np.ndarray | None] = [None] * len(weights)
    g_h = spmm(a_norm, g_basis)
    for l in range(len(weights) - 1, -1, -1):
        if masks is not None:
            g_h = g_h * masks[l]
        g_pre = relu_backward(cache["pres"][l], g_h)
        if l == 0:
            agg = spmm(a_norm, g_pre)
            grads[0] = agg if x.identity_flag else x.values.T @ agg
        else:
            grads[l] = cache["aggs"][l].T @ g_pre
            g_h = spmm(a_norm, g_pre @ weights[l].T)
    return grads


def _forward(
    params: EncoderParams,
    a_norm: NormalizedAdjacency,
    x: FeatureMatrix,
    dropout_masks: dict | None = None,
):
    if a_norm.n != x.n:
        raise ValueError("adjacency and features disagree on node count")
    if x.f != params.dims[0]:
        raise ValueError(f"feature dim {x.f} does not match input dim {params.dims[0]}")
    masks_mu = masks_sigma = None
    if dropout_masks is not None:
        masks_mu = dropout_masks.get("mu")
        masks_sigma = dropout_masks.get("sigma", masks_mu)
    b_mu, cache_mu = _tower_forward(params.hidden_mu, a_norm, x, masks_mu)
    if params.ws:
        b_sigma, cache_sigma = b_mu, cache_mu
    else:
        b_sigma, cache_sigma = _tower_forward(params.hidden_sigma, a_norm, x, masks_sigma)
    post = Posterior(mu=b_mu @ params.out_mu, logvar=b_sigma @ params.out_sigma)
    return post, (b_mu, b_sigma, cache_mu, cache_sigma, masks_mu, masks_sigma)


def encode(
    params: EncoderParams,
    a_norm: NormalizedAdjacency,
    x: FeatureMatrix,
    return_hidden: bool = False,
    dropout_masks: dict | None = None,
):
    """Run the encoder; returns the Posterior (and hidden bases on request).

    With weight sharing the hidden basis is computed once and both heads
    are linear in it; ``return_hidden`` exposes the per-tower bases
    (identical objects under sharing) for verification.
    """
    post, cache = _forward(params, a_norm, x, dropout_masks)
    if return_hidden:
        return post, (cache[0], cache[1])
    return post


def reparameterize(post: Posterior, rng: RngStream) -> EmbeddingSample:
    """Draw z = mu + exp(logvar/2) * eps with eps standard normal."""
    eps = gaussian_sample(post.mu.shape[0], post.mu.shape[1], rng)
    z = post.mu + np.exp(0.5 * post.logvar) * eps
    return EmbeddingSample(z=z, eps=eps)


def decode_logits(
    z: np.ndarray,
    pairs: np.ndarray | None = None,
    node_limit: int = DEFAULT_NODE_LIMIT,
) -> np.ndarray:
    """Inner-product edge logits; apply a sigmoid for probabilities.

    With ``pairs`` (a (k, 2) index array) returns one logit per pair;
    without, returns the full n-by-n logit matrix, refused above
    ``node_limit`` nodes (use subgraph decoding instead).
    """
    z = np.asarray(z, dtype=np.float64)
    if pairs is not None:
        pairs = np.asarray(pairs, dtype=np.int64)
        return np.einsum("ij,ij->i", z[pairs[:, 0]], z[pairs[:, 1]])
    if z.shape[0] > node_limit:
        raise ValueError(
            f"refusing full {z.shape[0]}x{z.shape[0]} decode (limit {node_limit}); "
            "decode a sampled subgraph instead"
        )
    return z @ z.T


def elbo_loss(
    logits: np.ndarray,
    target: ReconTarget,
    post: Posterior,
    kl_scale: float = 1.0,
) -> LossBreakdown:
    """Negative-ELBO breakdown under the class-weighting conventions.

    recon is the mean over all N^2 decode entries of the pos_weight-ed
    binary cross-entropy; kl averages the per-node unit-Gaussian KL over
    all encoded nodes. total = norm * recon + kl_scale * kl, to minimize.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    n_block = target.num_nodes
    if logits.shape != (n_block, n_block):
        raise ValueError(f"logits shape {logits.shape} does not match target block {n_block}")
    # negative-class cross-entropy everywhere, then swap in the positive
    # class at target entries: softplus(x) -> pos_weight * softplus(-x)
    neg_sum = float(np.logaddexp(0.0, logits).sum())
    x_pos = logits[target.pos_rows, target.pos_cols]
    pos_adjust = float(
        (target.pos_weight * np.logaddexp(0.0, -x_pos) - np.logaddexp(0.0, x_pos)).sum()
    )
    recon = (neg_sum + pos_adjust) / (n_block * n_block)

    n = post.mu.shape[0]
    kl = 0.5 / n * float((np.exp(post.logvar) + post.mu**2 - 1.0 - post.logvar).sum())
    total = target.norm * recon + kl_scale * kl
    return LossBreakdown(
        total=float(total),
        recon=float(recon),
        kl=float(kl),
        norm=target.norm,
        pos_weight=target.pos_weight,
        kl_scale=float(kl_scale),
    )


class Workspace:
    """Reusable n-by-n scratch buffers for the decode-heavy training path."""

    def __init__(self):
        self._buffers: dict[tuple[str, int], np.ndarray] = {}

    def get(self, name: str, n: int) -> np.ndarray:
        key = (name, n)
        buf = self._buffers.get(key)
        if buf is None:
            buf = np.empty((n, n), dtype=np.float64)
            self._buffers[key] = buf
        return buf


def backward(
    params: EncoderParams,
    a_norm: NormalizedAdjacency,
    x: FeatureMatrix,
    target: ReconTarget,
    eps: np.ndarray,
    kl_scale: float = 1.0,
    workspace: Workspace | None = None,
    dropout_masks: dict | None = None,
) -> dict[str, np.ndarray]:
    """Analytic gradients of the total loss for every distinct weight.

    The gradient keys match :meth:`EncoderParams.named_weights`; under
    weight sharing each shared matrix receives the sum of both towers'
    contributions in a single buffer. Deterministic given the frozen
    ``eps`` draw.
    """
    post, (b_mu, b_sigma, cache_mu, cache_sigma, masks_mu, masks_sigma) = _forward(
        params, a_norm, x, dropout_masks
    )
    n, d = post.mu.shape
    if eps.shape != (n, d):
        raise ValueError("eps shape mismatch")
    sig_half = np.exp(0.5 * post.logvar)
    z = post.mu + sig_half * eps

    if target.nodes is not None:
        z_block = z[target.nodes]
    else:
        z_block = z
    n_block = target.num_nodes
    if z_block.shape[0] != n_block:
        raise ValueError("target block does not match decode node count")

    ws = workspace or Workspace()
    logits = ws.get("logits", n_block)
    np.dot(z_block, z_block.T, out=logits)
    g = ws.get("grad", n_block)
    # G = d(recon_sum)/d(logit): sigmoid everywhere, then the positive-class
    # correction pos_weight*(sigmoid-1) at target entries; symmetric.
    np.negative(logits, out=g)
    with np.errstate(over="ignore"):
        np.exp(g, out=g)
    g += 1.0
    np.reciprocal(g, out=g)
    s_pos = g[target.pos_rows, target.pos_cols]
    g[target.pos_rows, target.pos_cols] = target.pos_weight * (s_pos - 1.0)

    coef = target.norm * 2.0 / (n_block * n_block)
    gz_block = coef * (g @ z_block)
    if target.nodes is not None:
        gz = np.zeros((n, d), dtype=np.float64)
        gz[target.nodes] = gz_block
    else:
        gz = gz_block

    g_mu = gz + (kl_scale / n) * post.mu
    g_logvar = gz * (0.5 * sig_half * eps) + (kl_scale * 0.5 / n) * (np.exp(post.logvar) - 1.0)

    grads: dict[str, np.ndarray] = {
        "w_out_mu": b_mu.T @ g_mu,
        "w_out_sigma": b_sigma.T @ g_logvar,
    }
    g_b_mu = g_mu @ params.out_mu.T
    g_b_sigma = g_logvar @ params.out_sigma.T
    if params.ws:
        hidden = _tower_backward(
            params.hidden_mu, a_norm, x, cache_mu, g_b_mu + g_b_sigma, masks_mu
        )
        for l, g_w in enumerate(hidden):
            grads[f"w_hidden_{l}"] = g_w
    else:
        hidden_mu = _tower_backward(params.hidden_mu, a_norm, x, cache_mu, g_b_mu, masks_mu)
        hidden_sigma = _tower_backward(
            params.hidden_sigma, a_norm, x, cache_sigma, g_b_sigma, masks_sigma
        )
        for l, g_w in enumerate(hidden_mu):
            grads[f"w_hidden_mu_{l}"] = g_w
        for l, g_w in enumerate(hidden_sigma):
            grads[f"w_hidden_sigma_{l}"] = g_w
    return grads


def param_count(params: EncoderParams) -> int:
    """Distinct scalar weight count (shared matrices counted once)."""
    return sum(w.size for w in params.named_weights().values())


def save_checkpoint(path, params: EncoderParams) -> None:
    """Write weights to an .npz container with stable array names."""
    arrays = {name: w for name, w in params.named_weights().items()}
    np.savez(
        path,
        dims=np.asarray(params.dims, dtype=np.int64),
        ws=np.asarray([params.ws]),
        **arrays,
    )


def load_checkpoint(path) -> EncoderParams:
    """Reload a checkpoint; encode output is bit-identical to the original."""
    with np.load(path) as data:
        dims = [int(v) for v in data["dims"]]
        ws = bool(data["ws"][0])
        n_hidden = len(dims) - 2
        if ws:
            hidden_mu = [data[f"w_hidden_{l}"].copy() for l in range(n_hidden)]
            hidden_sigma = hidden_mu
        else:
            hidden_mu = [data[f"w_hidden_mu_{l}"].copy() for l in range(n_hidden)]
            hidden_sigma = [data[f"w_hidden_sigma_{l}"].copy() for l in range(n_hidden)]
        return EncoderParams(
            dims=dims,
            ws=ws,
            hidden_mu=hidden_mu,
            hidden_sigma=hidden_sigma,
            out_mu=data["w_out_mu"].copy(),
            out_sigma=data["w_out_sigma"].copy(),
        )
