"""Undirected graph representation, ingestion, normalization and sampling.

Graphs are stored in compressed sparse row form over the symmetric
adjacency. All containers are immutable after construction and safe to
share across threads; node ids are dense integers in ``[0, n)``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Sequence

import numpy as np
import scipy.sparse as sp

from .ndmath import RngStream

__all__ = [
    "SparseGraph",
    "FeatureMatrix",
    "NormalizedAdjacency",
    "EdgeSplit",
    "CommunityLabels",
    "GraphFormatError",
    "load_edge_list",
    "normalize",
    "split_edges",
    "degree_sample",
    "induced_subgraph",
    "sbm_generate",
]


class GraphFormatError(ValueError):
    """Malformed edge-list / label / feature input."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SparseGraph:
    """Immutable undirected graph in CSR form.

    ``row_offsets``/``col_indices`` store both directions of every edge
    (2m entries), sorted within each row, without self-loops or
    duplicates. ``weights`` is None for binary graphs.
    """

    n: int
    m: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray | None = None

    @staticmethod
    def from_edges(
        n: int,
        u: np.ndarray,
        v: np.ndarray,
        w: np.ndarray | None = None,
    ) -> "SparseGraph":
        """Build a graph from endpoint arrays, canonicalizing the input.

        Self-loops are dropped, duplicate pairs merged (first weight
        wins), and the adjacency is symmetrized.
        """
        if n <= 0:
            raise ValueError("graph needs at least one node")
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if u.shape != v.shape:
            raise ValueError("endpoint arrays differ in length")
        if u.size and (u.min() < 0 or v.min() < 0 or u.max() >= n or v.max() >= n):
            raise ValueError("edge endpoint out of range")
        keep = u != v
        u, v = u[keep], v[keep]
        if w is not None:
            w = np.asarray(w, dtype=np.float64)[keep]
            if w.size and w.min() < 0:
                raise ValueError("negative edge weight")
            nz = w > 0
            u, v, w = u[nz], v[nz], w[nz]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        codes = lo * n + hi
        order = np.argsort(codes, kind="stable")
        codes = codes[order]
        first = np.ones(codes.size, dtype=bool)
        first[1:] = codes[1:] != codes[:-1]
        codes = codes[first]
        if w is not None:
            w = w[order][first]
        lo, hi = codes // n, codes % n
        m = int(codes.size)

        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        vals = np.concatenate([w, w]) if w is not None else None
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        if vals is not None:
            vals = vals[order]
        counts = np.bincount(src, minlength=n) if src.size else np.zeros(n, dtype=np.int64)
        row_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return SparseGraph(
            n=n,
            m=m,
            row_offsets=_freeze(row_offsets),
            col_indices=_freeze(dst),
            weights=_freeze(vals) if vals is not None else None,
        )

    def degrees(self) -> np.ndarray:
        """Number of neighbors per node."""
        return np.diff(self.row_offsets)

    def weighted_degrees(self) -> np.ndarray:
        """Row sums of the adjacency (equals degrees for binary graphs)."""
        if self.weights is None:
            return self.degrees().astype(np.float64)
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_offsets))
        return np.bincount(rows, weights=self.weights, minlength=self.n)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Undirected edge list as (u, v) arrays with u < v."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_offsets))
        mask = rows < self.col_indices
        return rows[mask], self.col_indices[mask]

    @cached_property
    def _edge_codes(self) -> np.ndarray:
        # sorted codes lo*n+hi of all undirected edges, for membership tests
        u, v = self.edges()
        return np.sort(u * self.n + v)

    def has_edges(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorized membership test for node pairs (order-insensitive)."""
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        codes = lo * self.n + hi
        if self._edge_codes.size == 0:
            return np.zeros(codes.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self._edge_codes, codes), self._edge_codes.size - 1)
        return self._edge_codes[pos] == codes

    def matrix(self) -> sp.csr_matrix:
        """Adjacency as a scipy CSR matrix (binary graphs get 1.0 entries)."""
        data = self.weights if self.weights is not None else np.ones(self.col_indices.size)
        return sp.csr_matrix((data, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        return self.matrix().toarray()

    def validate(self) -> None:
        """Check structural invariants; raises AssertionError on violation."""
        assert self.row_offsets.shape == (self.n + 1,)
        assert self.row_offsets[0] == 0 and self.row_offsets[-1] == self.col_indices.size
        assert self.col_indices.size == 2 * self.m
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        assert not np.any(rows == self.col_indices), "self-loop stored"
        for i in range(self.n):
            row = self.col_indices[self.row_offsets[i] : self.row_offsets[i + 1]]
            assert np.all(np.diff(row) > 0), "row not strictly sorted (dup or unsorted)"
        a = self.matrix()
        assert (a != a.T).nnz == 0, "adjacency not symmetric"


@dataclass(frozen=True)
class FeatureMatrix:
    """Node features; the featureless case is an implicit identity."""

    n: int
    f: int
    values: np.ndarray | None = None
    identity_flag: bool = False

    @staticmethod
    def identity(n: int) -> "FeatureMatrix":
        return FeatureMatrix(n=n, f=n, values=None, identity_flag=True)

    @staticmethod
    def dense(values: np.ndarray) -> "FeatureMatrix":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite feature value")
        return FeatureMatrix(n=values.shape[0], f=values.shape[1], values=_freeze(values.copy()))


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically normalized adjacency with self-connections.

    Values are (D+I)^(-1/2) (A+I) (D+I)^(-1/2) in the same CSR layout as
    :class:`SparseGraph`, diagonal included.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        return self.matrix().toarray()


@dataclass(frozen=True)
class EdgeSplit:
    """Train graph plus held-out positive/negative pairs (i < j rows)."""

    train_graph: SparseGraph
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray
    seed: int


@dataclass(frozen=True)
class CommunityLabels:
    n: int
    k: int
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.n,):
            raise ValueError("labels length must equal node count")
        if self.k < 2:
            raise ValueError("need at least two communities")
        if labels.min() < 0 or labels.max() >= self.k:
            raise ValueError("label out of range")
        object.__setattr__(self, "labels", _freeze(labels.copy()))


def load_edge_list(
    source: IO[str] | IO[bytes] | str,
    format: str = "tsv-pairs",
) -> tuple[SparseGraph, np.ndarray]:
    """Parse a whitespace-separated edge list into a SparseGraph.

    Lines hold ``u v`` (tsv-pairs) or ``u v w`` (tsv-weighted); ``#``
    starts a comment. Node ids are re-indexed to [0, n) in order of first
    appearance; the returned array maps new index -> original id.

    Raises GraphFormatError on malformed lines (with line number), empty
    graphs, or negative weights.
    """
    if format not in ("tsv-pairs", "tsv-weighted"):
        raise ValueError(f"unknown edge-list format: {format!r}")
    want_weight = format == "tsv-weighted"
    if isinstance(source, str):
        stream: IO = io.StringIO(source)
    else:
        stream = source

    id_map: dict[int, int] = {}
    original_ids: list[int] = []
    us: list[int] = []
    vs: list[int] = []
    ws: list[float] = []

    def intern(raw: str, lineno: int) -> int:
        try:
            node = int(raw)
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer node id {raw!r}") from None
        if node < 0:
            raise GraphFormatError(f"line {lineno}: negative node id {node}")
        idx = id_map.get(node)
        if idx is None:
            idx = len(id_map)
            id_map[node] = idx
            original_ids.append(node)
        return idx

    for lineno, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != (3 if want_weight else 2):
            raise GraphFormatError(
                f"line {lineno}: expected {3 if want_weight else 2} fields, got {len(parts)}"
            )
        us.append(intern(parts[0], lineno))
        vs.append(intern(parts[1], lineno))
        if want_weight:
            try:
                w = float(parts[2])
            except ValueError:
                raise GraphFormatError(f"line {lineno}: non-numeric weight {parts[2]!r}") from None
            if w < 0:
                raise GraphFormatError(f"line {lineno}: negative weight {w}")
            ws.append(w)

    if not original_ids:
        raise GraphFormatError("empty edge list")
    graph = SparseGraph.from_edges(
        n=len(original_ids),
        u=np.array(us, dtype=np.int64),
        v=np.array(vs, dtype=np.int64),
        w=np.array(ws, dtype=np.float64) if want_weight else None,
    )
    if graph.m == 0:
        raise GraphFormatError("edge list contains no usable edges")
    return graph, np.array(original_ids, dtype=np.int64)


def normalize(graph: SparseGraph) -> NormalizedAdjacency:
    """Symmetric normalization (D+I)^(-1/2) (A+I) (D+I)^(-1/2).

    Diagonal entries are included; an isolated node normalizes to a
    diagonal value of exactly 1.
    """
    aug = (graph.matrix() + sp.identity(graph.n, format="csr")).tocsr()
    aug.sort_indices()
    d_inv_sqrt = 1.0 / np.sqrt(graph.weighted_degrees() + 1.0)
    rows = np.repeat(np.arange(graph.n, dtype=np.int64), np.diff(aug.indptr))
    values = aug.data * d_inv_sqrt[rows] * d_inv_sqrt[aug.indices]
    return NormalizedAdjacency(
        n=graph.n,
        row_offsets=_freeze(aug.indptr.astype(np.int64)),
        col_indices=_freeze(aug.indices.astype(np.int64)),
        values=_freeze(values),
    )


def split_edges(
    graph: SparseGraph,
    val_frac: float,
    test_frac: float,
    seed: int,
) -> EdgeSplit:
    """Mask round(m*frac) edges for validation (filled first) and test.

    Positives are drawn uniformly without replacement; negatives are
    distinct non-edges of the original graph, equal in count to the
    positives of each bucket. Deterministic given seed.
    """
    if not (0 <= val_frac < 1 and 0 <= test_frac < 1 and val_frac + test_frac < 1):
        raise ValueError("fractions must be nonnegative and sum below 1")
    n_val = round(graph.m * val_frac)
    n_test = round(graph.m * test_frac)
    rng = RngStream(seed)

    u, v = graph.edges()
    perm = rng.permutation(graph.m)
    val_idx = perm[:n_val]
    test_idx = perm[n_val : n_val + n_test]
    train_idx = perm[n_val + n_test :]

    val_pos = np.column_stack([u[val_idx], v[val_idx]])
    test_pos = np.column_stack([u[test_idx], v[test_idx]])
    tw = graph.weights
    if tw is not None:
        # recover per-undirected-edge weights aligned with edges()
        rows = np.repeat(np.arange(graph.n, dtype=np.int64), np.diff(graph.row_offsets))
        mask = rows < graph.col_indices
        ew = tw[mask]
        train_w = ew[train_idx]
    else:
        train_w = None
    train_graph = SparseGraph.from_edges(graph.n, u[train_idx], v[train_idx], train_w)

    negs = _sample_non_edges(graph, n_val + n_test, rng)
    return EdgeSplit(
        train_graph=train_graph,
        val_pos=_freeze(val_pos),
        val_neg=_freeze(negs[:n_val]),
        test_pos=_freeze(test_pos),
        test_neg=_freeze(negs[n_val:]),
        seed=seed,
    )


def _sample_non_edges(graph: SparseGraph, count: int, rng: RngStream) -> np.ndarray:
    """Uniform distinct non-edges (i < j) of the original graph."""
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    n = graph.n
    total_pairs = n * (n - 1) // 2
    available = total_pairs - graph.m
    if available < count:
        raise ValueError(
            f"graph too dense: need {count} negative pairs but only {available} non-edges exist"
        )
    chosen: list[np.ndarray] = []
    chosen_sorted = np.empty(0, dtype=np.int64)
    remaining = count
    for _ in range(200):
        batch = max(2 * remaining, 64)
        i = rng.integers(0, n, batch)
        j = rng.integers(0, n, batch)
        ok = i != j
        i, j = i[ok], j[ok]
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        codes = lo * n + hi
        ok = ~graph.has_edges(lo, hi)
        codes = codes[ok]
        if chosen_sorted.size:
            pos = np.searchsorted(chosen_sorted, codes)
            pos = np.minimum(pos, chosen_sorted.size - 1)
            codes = codes[chosen_sorted[pos] != codes]
        # in-batch dedup keeping first-draw order
        _, first_idx = np.unique(codes, return_index=True)
        codes = codes[np.sort(first_idx)]
        if codes.size:
            take = codes[:remaining]
            chosen.append(take)
            chosen_sorted = np.sort(np.concatenate([chosen_sorted, take]))
            remaining -= take.size
        if remaining == 0:
            picked = np.concatenate(chosen)
            return np.column_stack([picked // n, picked % n])
    raise ValueError(f"negative sampling did not converge; graph too dense ({remaining} pairs short)")


def degree_sample(graph: SparseGraph, n_s: int, alpha: float, seed: int) -> np.ndarray:
    """Sample n_s distinct nodes with probability proportional to deg^alpha.

    Uses exponential-key weighted reservoir selection (keys u^(1/w)),
    which realizes sequential weighted sampling without replacement.
    Isolated nodes get the smallest positive degree weight so they stay
    reachable. Returns a sorted index array; deterministic given seed.
    """
    if not (1 <= n_s <= graph.n):
        raise ValueError(f"sample size {n_s} out of range for {graph.n} nodes")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    deg = graph.weighted_degrees()
    w = np.power(deg, alpha, where=deg > 0, out=np.zeros_like(deg))
    positive = w[w > 0]
    w[w == 0] = positive.min() if positive.size else 1.0
    rng = RngStream(seed)
    keys = np.power(rng.random(graph.n), 1.0 / w)
    if n_s == graph.n:
        return np.arange(graph.n, dtype=np.int64)
    top = np.argpartition(keys, graph.n - n_s)[graph.n - n_s :]
    return np.sort(top).astype(np.int64)


def induced_subgraph(
    graph: SparseGraph, nodes: np.ndarray
) -> tuple[SparseGraph, np.ndarray]:
    """Subgraph on the given nodes, densely re-indexed.

    Returns the subgraph and the old->new map as an array ordered by new
    index (new index i corresponds to original node map[i]).
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("node set must be nonempty")
    if np.unique(nodes).size != nodes.size:
        raise ValueError("duplicate node index")
    if nodes.min() < 0 or nodes.max() >= graph.n:
        raise ValueError("node index out of range")
    lookup = -np.ones(graph.n, dtype=np.int64)
    lookup[nodes] = np.arange(nodes.size)
    u, v = graph.edges()
    keep = (lookup[u] >= 0) & (lookup[v] >= 0)
    if graph.weights is not None:
        rows = np.repeat(np.arange(graph.n, dtype=np.int64), np.diff(graph.row_offsets))
        mask = rows < graph.col_indices
        ew = graph.weights[mask][keep]
    else:
        ew = None
    sub = SparseGraph.from_edges(nodes.size, lookup[u[keep]], lookup[v[keep]], ew)
    return sub, nodes.copy()


def sbm_generate(
    block_sizes: Sequence[int],
    p_in: float,
    p_out: float,
    seed: int,
) -> tuple[SparseGraph, CommunityLabels]:
    """Stochastic block model: intra-block edges w.p. p_in, inter w.p. p_out.

    Edge counts per block pair are binomial draws; the edges themselves
    are a uniform distinct subset of the pair universe, so the result
    matches independent Bernoulli sampling. Deterministic given seed.
    """
    sizes = np.asarray(block_sizes, dtype=np.int64)
    if sizes.size < 1 or np.any(sizes <= 0):
        raise ValueError("block sizes must be positive")
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ValueError("need 0 <= p_out <= p_in <= 1")
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offsets[-1])
    rng = RngStream(seed)
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    for r in range(sizes.size):
        br = int(sizes[r])
        # intra-block upper-triangle pairs
        n_pairs = br * (br - 1) // 2
        e = rng.binomial(n_pairs, p_in) if n_pairs else 0
        if e:
            t = _distinct_uniform(rng, n_pairs, e)
            i, j = _triu_decode(t, br)
            us.append(i + offsets[r])
            vs.append(j + offsets[r])
        for s in range(r + 1, sizes.size):
            bs = int(sizes[s])
            n_pairs = br * bs
            e = rng.binomial(n_pairs, p_out) if n_pairs else 0
            if e:
                t = _distinct_uniform(rng, n_pairs, e)
                us.append(t // bs + offsets[r])
                vs.append(t % bs + offsets[s])
    if us:
        u = np.concatenate(us)
        v = np.concatenate(vs)
    else:
        u = v = np.empty(0, dtype=np.int64)
    graph = SparseGraph.from_edges(n, u, v)
    labels = np.repeat(np.arange(sizes.size, dtype=np.int64), sizes)
    if sizes.size >= 2:
        communities = CommunityLabels(n=n, k=sizes.size, labels=labels)
    else:
        communities = CommunityLabels(n=n, k=2, labels=labels)  # degenerate 1-block case
    return graph, communities


def _distinct_uniform(rng: RngStream, universe: int, count: int) -> np.ndarray:
    """Uniform distinct draw of `count` indices from range(universe)."""
    if count > universe:
        raise ValueError("cannot draw more distinct indices than exist")
    if count > universe // 3:
        return rng.permutation(universe)[:count].astype(np.int64)
    picked = np.empty(0, dtype=np.int64)
    while picked.size < count:
        extra = rng.integers(0, universe, 2 * (count - picked.size))
        picked = np.unique(np.concatenate([picked, extra]))
    # uniform subset of fixed size: thin with a permutation to stay unbiased
    sel = rng.permutation(picked.size)[:count]
    return picked[np.sort(sel)]


def _triu_decode(t: np.ndarray, b: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode linear upper-triangle indices (row-major, i<j) for a b-by-b block."""
    counts = np.arange(b - 1, 0, -1, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)])
    i = np.searchsorted(starts, t, side="right") - 1
    j = t - starts[i] + i + 1
    return i.astype(np.int64), j.astype(np.int64)
