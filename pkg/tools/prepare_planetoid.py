#!/usr/bin/env python3
"""Convert the public LINQS citation archives into registry datasets.

Input: the classic ``<name>.content`` / ``<name>.cites`` pair (as shipped
in cora.tgz and citeseer.tgz from https://linqs.org/datasets/), either as
an extracted directory or the .tgz itself.

Output: ``<data-dir>/<name>[ suffix]/`` with edges.txt, labels.txt,
features.txt and a manifest, in the package's edge-list / label / feature
formats. Node ids are densified in content-file order; citation lines
whose endpoints never appear in the content file are dropped (a handful
exist in citeseer) and reported.

Usage:
    python tools/prepare_planetoid.py cora.tgz --data-dir data
    python tools/prepare_planetoid.py citeseer/ --name citeseer --data-dir data
"""

from __future__ import annotations

import argparse
import sys
import tarfile
import tempfile
from pathlib import Path


def find_pair(root: Path) -> tuple[Path, Path]:
    contents = sorted(root.rglob("*.content"))
    cites = sorted(root.rglob("*.cites"))
    if not contents or not cites:
        raise SystemExit(f"no .content/.cites pair found under {root}")
    return contents[0], cites[0]


def convert(content_path: Path, cites_path: Path, out_dir: Path, name: str) -> None:
    node_index: dict[str, int] = {}
    labels: list[str] = []
    feature_rows: list[tuple[int, list[int]]] = []
    with open(content_path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            node_id, *features, label = parts
            idx = len(node_index)
            node_index[node_id] = idx
            labels.append(label)
            nonzero = [dim for dim, v in enumerate(features) if v not in ("0", "0.0")]
            feature_rows.append((idx, nonzero))
    feature_dim = len(parts) - 2

    kept, dropped = [], 0
    with open(cites_path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                continue
            a, b = node_index.get(parts[0]), node_index.get(parts[1])
            if a is None or b is None:
                dropped += 1
                continue
            kept.append((a, b))

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "edges.txt", "w", encoding="utf-8") as fh:
        for a, b in kept:
            fh.write(f"{a} {b}\n")
    label_ids = {lab: i for i, lab in enumerate(sorted(set(labels)))}
    with open(out_dir / "labels.txt", "w", encoding="utf-8") as fh:
        for idx, lab in enumerate(labels):
            fh.write(f"{idx} {label_ids[lab]}\n")
    with open(out_dir / "features.txt", "w", encoding="utf-8") as fh:
        for idx, nonzero in feature_rows:
            for dim in nonzero:
                fh.write(f"{idx} {dim} 1\n")
        # anchor the feature dimension even if the last columns are all zero
        if feature_dim and all(feature_dim - 1 not in row for _, row in feature_rows):
            fh.write(f"0 {feature_dim - 1} 0\n")
    (out_dir / "manifest").write_text(
        f"name = {name}\nedges = edges.txt\nlabels = labels.txt\nfeatures = features.txt\n",
        encoding="utf-8",
    )
    print(
        f"{name}: {len(node_index)} nodes, {len(kept)} citation lines kept "
        f"({dropped} dropped), {len(label_ids)} classes, {feature_dim} feature dims -> {out_dir}"
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("source", type=Path, help=".tgz archive or extracted directory")
    parser.add_argument("--name", help="dataset id (default: archive/directory stem)")
    parser.add_argument("--data-dir", type=Path, default=Path("data"))
    args = parser.parse_args(argv)

    if args.source.is_file():
        name = args.name or args.source.name.split(".")[0]
        with tempfile.TemporaryDirectory() as tmp:
            with tarfile.open(args.source) as tar:
                tar.extractall(tmp)
            content, cites = find_pair(Path(tmp))
            convert(content, cites, args.data_dir / name, name)
    else:
        name = args.name or args.source.name
        content, cites = find_pair(args.source)
        convert(content, cites, args.data_dir / name, name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
