"""Directory-per-dataset registry.

Each dataset lives in ``<root>/<id>/`` with a flat key-value ``manifest``
naming its files:

    name = cora
    edges = edges.txt            # required; "u v" or "u v w" lines
    format = tsv-pairs           # or tsv-weighted (default tsv-pairs)
    features = features.txt      # optional; "node_id dim value" triplets
    labels = labels.txt          # optional; "node_id label_id" lines

Node ids may be arbitrary nonnegative integers; they are re-indexed
densely in order of first appearance (edge file first, then labels, then
features), so labeled nodes absent from the edge file become isolated
nodes of the graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import (
    CommunityLabels,
    FeatureMatrix,
    GraphFormatError,
    SparseGraph,
    load_edge_list,
)

__all__ = ["Dataset", "load_dataset", "write_sbm_dataset", "parse_kv", "read_kv_file"]


@dataclass(frozen=True)
class Dataset:
    name: str
    graph: SparseGraph
    features: FeatureMatrix | None
    labels: CommunityLabels | None
    node_ids: np.ndarray  # new index -> original id


def parse_kv(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise GraphFormatError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_kv_file(path: Path | str) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def _parse_pairs(path: Path, what: str) -> list[tuple[int, int]]:
    pairs = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{what} line {lineno}: expected 2 fields, got {len(parts)}")
        pairs.append((int(parts[0]), int(parts[1])))
    return pairs


def _parse_triplets(path: Path) -> list[tuple[int, int, float]]:
    triplets = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 3:
            raise GraphFormatError(f"feature line {lineno}: expected 3 fields, got {len(parts)}")
        triplets.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return triplets


def load_dataset(root: Path | str, dataset_id: str) -> Dataset:
    """Load a dataset directory per its manifest."""
    base = Path(root) / dataset_id
    manifest_path = base / "manifest"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no manifest for dataset {dataset_id!r} under {root}")
    manifest = read_kv_file(manifest_path)
    if "edges" not in manifest:
        raise GraphFormatError(f"manifest for {dataset_id!r} names no edges file")
    fmt = manifest.get("format", "tsv-pairs")

    with open(base / manifest["edges"], "r", encoding="utf-8") as fh:
        graph, original_ids = load_edge_list(fh, format=fmt)
    id_map = {int(orig): idx for idx, orig in enumerate(original_ids)}

    label_pairs = _parse_pairs(base / manifest["labels"], "label") if "labels" in manifest else None
    triplets = _parse_triplets(base / manifest["features"]) if "features" in manifest else None

    # ids seen only in label/feature files become isolated nodes
    extra: list[int] = []
    for node in [p[0] for p in (label_pairs or [])] + [t[0] for t in (triplets or [])]:
        if node not in id_map:
            id_map[node] = len(id_map)
            extra.append(node)
    if extra:
        u, v = graph.edges()
        weights = None
        if graph.weights is not None:
            rows = np.repeat(np.arange(graph.n, dtype=np.int64), np.diff(graph.row_offsets))
            weights = graph.weights[rows < graph.col_indices]
        graph = SparseGraph.from_edges(len(id_map), u, v, weights)
        original_ids = np.concatenate([original_ids, np.array(extra, dtype=np.int64)])
    n = graph.n

    labels = None
    if label_pairs is not None:
        raw = np.full(n, -1, dtype=np.int64)
        for node, lab in label_pairs:
            raw[id_map[node]] = lab
        if np.any(raw < 0):
            missing = int((raw < 0).sum())
            raise GraphFormatError(f"label file covers only {n - missing} of {n} nodes")
        classes = np.unique(raw)
        dense = np.searchsorted(classes, raw)
        labels = CommunityLabels(n=n, k=int(classes.size), labels=dense)

    features = None
    if triplets is not None:
        f = max(t[1] for t in triplets) + 1
        values = np.zeros((n, f), dtype=np.float64)
        for node, dim, val in triplets:
            if dim < 0:
                raise GraphFormatError("negative feature dimension")
            values[id_map[node], dim] = val
        features = FeatureMatrix.dense(values)

    return Dataset(
        name=manifest.get("name", dataset_id),
        graph=graph,
        features=features,
        labels=labels,
        node_ids=original_ids,
    )


def write_sbm_dataset(
    root: Path | str,
    dataset_id: str,
    graph: SparseGraph,
    labels: CommunityLabels,
) -> Path:
    """Materialize a generated graph as a registry dataset directory."""
    base = Path(root) / dataset_id
    base.mkdir(parents=True, exist_ok=True)
    u, v = graph.edges()
    with open(base / "edges.txt", "w", encoding="utf-8") as fh:
        for a, b in zip(u.tolist(), v.tolist()):
            fh.write(f"{a} {b}\n")
    with open(base / "labels.txt", "w", encoding="utf-8") as fh:
        for node, lab in enumerate(labels.labels.tolist()):
            fh.write(f"{node} {lab}\n")
    (base / "manifest").write_text(
        f"name = {dataset_id}\nedges = edges.txt\nlabels = labels.txt\n",
        encoding="utf-8",
    )
    return base
