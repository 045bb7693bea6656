"""Dense numeric kernels and seeded randomness shared by the model code.

Matrices are plain 2-D float64 ``numpy.ndarray`` objects (row-major). All
randomized routines draw from an explicit :class:`RngStream`, so any
computation is bit-reproducible from ``(seed, algorithm)`` alone.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "RngStream",
    "derive_seed",
    "spmm",
    "relu",
    "relu_backward",
    "sigmoid",
    "glorot_init",
    "gaussian_sample",
    "finite_diff_grad",
]


class RngStream:
    """Deterministic random stream: one seed, one named generator.

    The algorithm id is recorded alongside results so that a run can be
    replayed on another machine. A stream is single-consumer: draws advance
    internal state, so never share one stream between concurrent runs.
    """

    algorithm = "pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, rows: int, cols: int) -> np.ndarray:
        return self._gen.standard_normal((rows, cols), dtype=np.float64)

    def uniform(self, low: float, high: float, rows: int, cols: int) -> np.ndarray:
        return self._gen.uniform(low, high, size=(rows, cols))

    def random(self, size: int) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size: int | None = None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def binomial(self, n: int, p: float) -> int:
        return int(self._gen.binomial(n, p))

    def spawn_seed(self) -> int:
        """Draw a fresh 63-bit seed for a derived stream."""
        return int(self._gen.integers(0, 2**63 - 1))


def derive_seed(*parts: int) -> int:
    """Mix integer parts into one stable 64-bit seed.

    Uses ``numpy.random.SeedSequence`` hashing, which is documented to be
    stable across platforms and numpy versions.
    """
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


def spmm(a, b: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``a @ b`` for a normalized adjacency operator.

    ``a`` is any object exposing ``n`` and ``matrix()`` returning an n-by-n
    ``scipy.sparse.csr_matrix`` (see ``wsvgae.graphs.NormalizedAdjacency``).
    """
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != a.n:
        raise ValueError(f"spmm shape mismatch: operator is {a.n}x{a.n}, dense is {b.shape}")
    return a.matrix().dot(b)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Pass upstream gradient where x > 0; subgradient 0 at x = 0."""
    if x.shape != upstream.shape:
        raise ValueError(f"relu_backward shape mismatch: {x.shape} vs {upstream.shape}")
    return np.where(x > 0.0, upstream, 0.0)


def sigmoid(x):
    """Elementwise logistic function, stable for any finite input.

    ``exp(-x)`` saturates to inf/0 outside ~[-745, 745]; the naive form then
    still yields the correctly rounded 0.0 or 1.0, so only the overflow
    warning needs suppressing.
    """
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-x))
    return out


def glorot_init(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """Uniform Glorot initialization on [-sqrt(6/(rows+cols)), +sqrt(...)]."""
    if rows <= 0 or cols <= 0:
        raise ValueError("glorot_init needs positive dimensions")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, rows, cols)


def gaussian_sample(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """i.i.d. standard normal matrix, deterministic per stream state."""
    if rows <= 0 or cols <= 0:
        raise ValueError("gaussian_sample needs positive dimensions")
    return rng.normal(rows, cols)


def finite_diff_grad(
    loss_fn: Callable[[np.ndarray], float],
    point: np.ndarray,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    ``loss_fn`` must be pure and deterministic (freeze any random draws
    inside the closure). The flattened coordinate order of ``point`` is
    preserved in the returned estimate.
    """
    flat = np.asarray(point, dtype=np.float64).ravel().copy()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn(flat.reshape(point.shape))
        flat[i] = orig - h
        down = loss_fn(flat.reshape(point.shape))
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(point.shape)
