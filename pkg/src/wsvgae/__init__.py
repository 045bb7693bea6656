"""Variational graph autoencoder engine with a weight-sharing toggle.

Subpackages:
  graphs   -- sparse graph containers, ingestion, splitting, SBM generation
  ndmath   -- dense kernels, seeded randomness, finite-difference oracle
  model    -- encoder/decoder, loss, analytic gradients, checkpoints
  optim    -- Adam with per-matrix state
  metrics  -- AUC/AP ranking scores, k-means, AMI/ARI
  datasets -- directory-per-dataset registry
  harness  -- seeded benchmark runs, aggregation, reports
  cli      -- command-line entry point
"""

__version__ = "0.1.0"

from .graphs import (  # noqa: F401
    CommunityLabels,
    EdgeSplit,
    FeatureMatrix,
    NormalizedAdjacency,
    SparseGraph,
    degree_sample,
    induced_subgraph,
    load_edge_list,
    normalize,
    sbm_generate,
    split_edges,
)
from .model import (  # noqa: F401
    EncoderParams,
    EmbeddingSample,
    LossBreakdown,
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
from .ndmath import RngStream, derive_seed, finite_diff_grad  # noqa: F401
from .optim import Adam, NonFiniteGradientError  # noqa: F401
from .metrics import ScoredPairs, ami, ari, average_precision, kmeans, roc_auc  # noqa: F401
