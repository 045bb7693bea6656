"""Benchmark orchestration: seeded runs, learning-rate search, aggregation.

A run trains one model configuration on one dataset and scores the
configured tasks. Link prediction masks 15% of edges by default (5%
validation, 10% test) and scores held-out pairs by decoded probability;
community detection trains on the full graph and clusters the posterior
means. Paired WS / no-WS runs with the same per-run seed share the exact
edge split (weight initialization stays independent), so comparisons
isolate the sharing toggle.

Aggregates report mean and sample standard deviation per metric in
percent. The equivalence verdict for a paired cell checks whether the WS
mean falls within one standard deviation of the no-WS mean.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import subprocess
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .datasets import Dataset, load_dataset
from .graphs import (
    FeatureMatrix,
    NormalizedAdjacency,
    SparseGraph,
    degree_sample,
    normalize,
    split_edges,
)
from .metrics import ScoredPairs, average_precision, kmeans, roc_auc, ami, ari
from .model import (
    EncoderParams,
    Workspace,
    backward,
    decode_logits,
    elbo_loss,
    encode,
    init_params,
    recon_target,
)
from .ndmath import RngStream, derive_seed, gaussian_sample, sigmoid
from .optim import Adam, NonFiniteGradientError

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "RunError",
    "CellAggregate",
    "AggregateReport",
    "run_single",
    "run_many",
    "grid_search_lr",
    "aggregate",
    "one_std_verdict",
    "emit_report",
    "TASK_LINK_PREDICTION",
    "TASK_COMMUNITY_DETECTION",
]

TASK_LINK_PREDICTION = "link_prediction"
TASK_COMMUNITY_DETECTION = "community_detection"

# seed-derivation tags: split is shared across the WS pair, the rest are not
_TAG_SPLIT = 101
_TAG_MODEL = 202
_TAG_KMEANS = 303
_TAG_EVAL = 404

_METRIC_TASK = {
    "auc": TASK_LINK_PREDICTION,
    "ap": TASK_LINK_PREDICTION,
    "val_auc": TASK_LINK_PREDICTION,
    "val_ap": TASK_LINK_PREDICTION,
    "ami": TASK_COMMUNITY_DETECTION,
    "ari": TASK_COMMUNITY_DETECTION,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run except its seed."""

    dataset: str
    use_features: bool = False
    model: str = "vgae"  # vgae | deep-vgae
    ws: bool = True
    d: int = 16
    dh: tuple[int, ...] | None = None  # default (32,), deep models (32, 32)
    iterations: int = 300
    lr: float = 0.01
    lr_grid: tuple[float, ...] | None = None
    runs: int = 100
    seed: int = 1
    mask_val: float = 0.05
    mask_test: float = 0.10
    fastgae: bool | None = None  # None = automatic by node threshold
    fastgae_ns: int = 5000
    fastgae_alpha: float = 1.0
    fastgae_threshold: int = 20000
    tasks: tuple[str, ...] = (TASK_LINK_PREDICTION,)
    kl_scale: float | None = None  # weight of the per-node-mean KL; None = 1/n
    dropout: float = 0.0
    include_self_loops: bool = True
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300

    def __post_init__(self):
        if self.model not in ("vgae", "deep-vgae"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.dh is None:
            object.__setattr__(self, "dh", (32, 32) if self.model == "deep-vgae" else (32,))
        else:
            object.__setattr__(self, "dh", tuple(int(v) for v in self.dh))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.lr_grid is not None:
            object.__setattr__(self, "lr_grid", tuple(float(v) for v in self.lr_grid))
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        for task in self.tasks:
            if task not in (TASK_LINK_PREDICTION, TASK_COMMUNITY_DETECTION):
                raise ValueError(f"unknown task {task!r}")

    def hidden_dims(self) -> list[int]:
        return list(self.dh)

    def fastgae_active(self, n: int) -> bool:
        """Subgraph decoding applies iff forced on, or n exceeds the threshold."""
        if self.fastgae is not None:
            return self.fastgae
        return n > self.fastgae_threshold

    def kl_weight(self, n: int) -> float:
        """Weight of the per-node-mean KL term in the total loss.

        Defaults to 1/n, which puts the KL on the same per-entry mean
        scale as the reconstruction term (the balance of the reference
        VGAE implementations); sparse graphs fail to learn when the KL is
        left a factor n heavier.
        """
        return self.kl_scale if self.kl_scale is not None else 1.0 / n

    def config_hash(self) -> str:
        payload = asdict(self)
        payload.pop("seed")
        payload.pop("runs")
        canon = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        data = dict(data)
        for key in ("dh", "lr_grid", "tasks"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return ExperimentConfig(**data)


@dataclass(frozen=True)
class RunResult:
    """Outcome of one seeded run: metric values plus replay information."""

    dataset: str
    model: str
    ws: bool
    seed: int
    metrics: dict[str, float]
    lr: float
    iterations: int
    initial_loss: float
    final_loss: float
    train_seconds: float
    wall_seconds: float
    config_hash: str
    rng_algorithm: str
    n_nodes: int
    m_edges: int
    fastgae_used: bool
    config: dict | None = None  # full configuration snapshot
    version: str = __version__
    commit: str = "unknown"

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "RunResult":
        return RunResult(**data)


class RunError(RuntimeError):
    """A run failed; the message carries the run context, the cause the error."""


@dataclass(frozen=True)
class CellAggregate:
    dataset: str
    model: str
    ws: bool
    runs: int
    metrics: dict[str, dict[str, float | None]]  # name -> {mean, std}, percent
    mean_train_seconds: float
    mean_wall_seconds: float
    config_hash: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AggregateReport:
    cells: tuple[CellAggregate, ...]
    rng_algorithm: str = "pcg64"
    version: str = __version__
    commit: str = "unknown"

    def to_dict(self) -> dict:
        return {
            "cells": [c.to_dict() for c in self.cells],
            "rng_algorithm": self.rng_algorithm,
            "version": self.version,
            "commit": self.commit,
        }

    @staticmethod
    def from_dict(data: dict) -> "AggregateReport":
        cells = tuple(CellAggregate(**c) for c in data["cells"])
        return AggregateReport(
            cells=cells,
            rng_algorithm=data.get("rng_algorithm", "pcg64"),
            version=data.get("version", "unknown"),
            commit=data.get("commit", "unknown"),
        )


def package_commit() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def _resolve_features(dataset: Dataset, use_features: bool) -> FeatureMatrix:
    if not use_features:
        return FeatureMatrix.identity(dataset.graph.n)
    if dataset.features is None:
        raise ValueError(f"dataset {dataset.name!r} has no feature file")
    return dataset.features


def _train(
    config: ExperimentConfig,
    train_graph: SparseGraph,
    a_norm: NormalizedAdjacency,
    x: FeatureMatrix,
    model_seed: int,
    eval_seed: int,
    workspace: Workspace,
) -> tuple[EncoderParams, float, float, bool, float]:
    """Train one model; returns (params, initial/final loss, fastgae flag, seconds).

    Losses are evaluated with one frozen eps draw (the same for both
    checkpoints) so the before/after comparison is deterministic. Under
    subgraph decoding the loss checkpoints use a fixed degree-sampled
    block, since the full reconstruction term is intractable there.
    """
    n = train_graph.n
    rng = RngStream(model_seed)
    params = init_params(x.f, config.hidden_dims(), config.d, config.ws, rng)
    use_fastgae = config.fastgae_active(n)
    kl_weight = config.kl_weight(n)

    eval_rng = RngStream(eval_seed)
    eps_eval = gaussian_sample(n, config.d, eval_rng)
    if use_fastgae:
        eval_nodes = degree_sample(
            train_graph, min(config.fastgae_ns, n), config.fastgae_alpha, eval_rng.spawn_seed()
        )
        eval_target = recon_target(train_graph, config.include_self_loops, nodes=eval_nodes)
    else:
        eval_target = recon_target(train_graph, config.include_self_loops)

    def checkpoint_loss() -> float:
        post = encode(params, a_norm, x)
        z = post.mu + np.exp(0.5 * post.logvar) * eps_eval
        z_block = z[eval_target.nodes] if eval_target.nodes is not None else z
        logits = z_block @ z_block.T
        return elbo_loss(logits, eval_target, post, kl_weight).total

    initial_loss = checkpoint_loss()
    adam = Adam(config.lr)
    named = params.named_weights()
    train_target = None if use_fastgae else eval_target

    start = time.perf_counter()
    for _ in range(config.iterations):
        eps = gaussian_sample(n, config.d, rng)
        if use_fastgae:
            nodes = degree_sample(
                train_graph, min(config.fastgae_ns, n), config.fastgae_alpha, rng.spawn_seed()
            )
            target = recon_target(train_graph, config.include_self_loops, nodes=nodes)
        else:
            target = train_target
        masks = _dropout_masks(config, params, n, rng)
        grads = backward(
            params, a_norm, x, target, eps,
            kl_scale=kl_weight, workspace=workspace, dropout_masks=masks,
        )
        adam.step(named, grads)
    train_seconds = time.perf_counter() - start
    final_loss = checkpoint_loss()
    return params, initial_loss, final_loss, use_fastgae, train_seconds


def _dropout_masks(
    config: ExperimentConfig, params: EncoderParams, n: int, rng: RngStream
) -> dict | None:
    if config.dropout <= 0.0:
        return None
    keep = 1.0 - config.dropout
    def tower():
        return [
            (rng.random(n * params.dims[l + 1]).reshape(n, params.dims[l + 1]) < keep) / keep
            for l in range(len(params.dims) - 2)
        ]
    masks = {"mu": tower()}
    if not params.ws:
        masks["sigma"] = tower()
    return masks


def _score_pairs(mu: np.ndarray, pos: np.ndarray, neg: np.ndarray) -> ScoredPairs:
    pos_scores = sigmoid(decode_logits(mu, pos))
    neg_scores = sigmoid(decode_logits(mu, neg))
    return ScoredPairs.from_pos_neg(pos_scores, neg_scores)


def run_single(
    config: ExperimentConfig,
    seed: int,
    dataset: Dataset | None = None,
    data_dir: Path | str | None = None,
    workspace: Workspace | None = None,
    commit: str = "unknown",
) -> RunResult:
    """Execute one seeded run of every configured task.

    The split seed is derived from ``seed`` alone, so the WS and no-WS
    variants of a configuration see identical edge splits; model
    initialization and training draws additionally depend on the ws flag.
    """
    wall_start = time.perf_counter()
    if dataset is None:
        dataset = load_dataset(data_dir if data_dir is not None else "data", config.dataset)
    try:
        return _run_single(config, seed, dataset, workspace, commit, wall_start)
    except Exception as err:
        raise RunError(
            f"run failed (dataset={config.dataset!r}, model={config.model}, "
            f"ws={config.ws}, seed={seed}): {err}"
        ) from err


def _run_single(
    config: ExperimentConfig,
    seed: int,
    dataset: Dataset,
    workspace: Workspace | None,
    commit: str,
    wall_start: float,
) -> RunResult:
    graph = dataset.graph
    x = _resolve_features(dataset, config.use_features)
    workspace = workspace or Workspace()

    split_seed = derive_seed(seed, _TAG_SPLIT)
    model_seed = derive_seed(seed, _TAG_MODEL, int(config.ws))
    eval_seed = derive_seed(seed, _TAG_EVAL, int(config.ws))

    metrics: dict[str, float] = {}
    train_seconds = 0.0
    initial_loss = final_loss = float("nan")
    fastgae_used = False

    if TASK_LINK_PREDICTION in config.tasks:
        split = split_edges(graph, config.mask_val, config.mask_test, split_seed)
        a_norm = normalize(split.train_graph)
        params, initial_loss, final_loss, fastgae_used, secs = _train(
            config, split.train_graph, a_norm, x, model_seed, eval_seed, workspace
        )
        train_seconds += secs
        mu = encode(params, a_norm, x).mu
        sp_test = _score_pairs(mu, split.test_pos, split.test_neg)
        metrics["auc"] = roc_auc(sp_test)
        metrics["ap"] = average_precision(sp_test)
        if len(split.val_pos):
            sp_val = _score_pairs(mu, split.val_pos, split.val_neg)
            metrics["val_auc"] = roc_auc(sp_val)
            metrics["val_ap"] = average_precision(sp_val)

    if TASK_COMMUNITY_DETECTION in config.tasks:
        if dataset.labels is None:
            raise ValueError(f"dataset {dataset.name!r} has no community labels")
        a_norm = normalize(graph)
        cd_model_seed = derive_seed(model_seed, 1)
        cd_eval_seed = derive_seed(eval_seed, 1)
        params, cd_init, cd_final, cd_fast, secs = _train(
            config, graph, a_norm, x, cd_model_seed, cd_eval_seed, workspace
        )
        train_seconds += secs
        fastgae_used = fastgae_used or cd_fast
        if TASK_LINK_PREDICTION not in config.tasks:
            initial_loss, final_loss = cd_init, cd_final
        mu = encode(params, a_norm, x).mu
        clustering = kmeans(
            mu,
            dataset.labels.k,
            restarts=config.kmeans_restarts,
            max_iter=config.kmeans_max_iter,
            rng=RngStream(derive_seed(seed, _TAG_KMEANS, int(config.ws))),
        )
        metrics["ami"] = ami(dataset.labels.labels, clustering.assignments)
        metrics["ari"] = ari(dataset.labels.labels, clustering.assignments)

    return RunResult(
        dataset=config.dataset,
        model=config.model,
        ws=config.ws,
        seed=seed,
        metrics=metrics,
        lr=config.lr,
        iterations=config.iterations,
        initial_loss=initial_loss,
        final_loss=final_loss,
        train_seconds=train_seconds,
        wall_seconds=time.perf_counter() - wall_start,
        config_hash=config.config_hash(),
        rng_algorithm=RngStream.algorithm,
        n_nodes=graph.n,
        m_edges=graph.m,
        fastgae_used=fastgae_used,
        config=config.to_dict(),
        version=__version__,
        commit=commit,
    )


def run_many(
    config: ExperimentConfig,
    dataset: Dataset | None = None,
    data_dir: Path | str | None = None,
    commit: str = "unknown",
    progress=None,
) -> list[RunResult]:
    """config.runs seeded runs; run j uses the derived seed (seed, j)."""
    workspace = Workspace()
    results = []
    for j in range(config.runs):
        result = run_single(
            config,
            derive_seed(config.seed, j),
            dataset=dataset,
            data_dir=data_dir,
            workspace=workspace,
            commit=commit,
        )
        results.append(result)
        if progress is not None:
            progress(j + 1, config.runs, result)
    return results


def grid_search_lr(
    config: ExperimentConfig,
    seeds: Sequence[int],
    dataset: Dataset | None = None,
    data_dir: Path | str | None = None,
) -> tuple[float, dict[float, float | None]]:
    """Mean validation AUC per grid learning rate; argmax, ties to smaller.

    Rates whose runs diverge (non-finite gradients or loss) are excluded;
    if every rate is excluded the search fails.
    """
    if not config.lr_grid:
        raise ValueError("lr_grid is empty")
    lp_config = replace(config, tasks=(TASK_LINK_PREDICTION,))
    table: dict[float, float | None] = {}
    workspace = Workspace()
    for lr in sorted(lp_config.lr_grid):
        scores = []
        diverged = False
        for seed in seeds:
            try:
                result = run_single(
                    replace(lp_config, lr=lr), seed,
                    dataset=dataset, data_dir=data_dir, workspace=workspace,
                )
            except RunError as err:
                if isinstance(err.__cause__, NonFiniteGradientError):
                    diverged = True
                    break
                raise
            if not np.isfinite(result.final_loss):
                diverged = True
                break
            scores.append(result.metrics["val_auc"])
        table[lr] = None if diverged else float(np.mean(scores))
    finite = {lr: v for lr, v in table.items() if v is not None}
    if not finite:
        raise ValueError("every learning rate in the grid diverged")
    best = max(sorted(finite), key=lambda lr: finite[lr])
    # max() keeps the first (smallest) lr on ties because of the sort
    return best, table


def aggregate(results: Iterable[RunResult]) -> AggregateReport:
    """Mean and sample std (percent) per metric for each (dataset, model, ws) cell."""
    groups: dict[tuple[str, str, bool], list[RunResult]] = {}
    for r in results:
        groups.setdefault((r.dataset, r.model, r.ws), []).append(r)
    if not groups:
        raise ValueError("no results to aggregate")
    cells = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], not k[2])):
        rows = groups[key]
        hashes = {r.config_hash for r in rows}
        if len(hashes) > 1:
            raise ValueError(f"mixed configs in cell {key}: {sorted(hashes)}")
        names = sorted({name for r in rows for name in r.metrics})
        metrics: dict[str, dict[str, float | None]] = {}
        for name in names:
            values = np.array([r.metrics[name] for r in rows if name in r.metrics]) * 100.0
            metrics[name] = {
                "mean": float(values.mean()),
                "std": float(values.std(ddof=1)) if values.size >= 2 else None,
            }
        cells.append(
            CellAggregate(
                dataset=key[0],
                model=key[1],
                ws=key[2],
                runs=len(rows),
                metrics=metrics,
                mean_train_seconds=float(np.mean([r.train_seconds for r in rows])),
                mean_wall_seconds=float(np.mean([r.wall_seconds for r in rows])),
                config_hash=rows[0].config_hash,
            )
        )
    return AggregateReport(
        cells=tuple(cells),
        rng_algorithm=RngStream.algorithm,
        version=__version__,
        commit=next((r.commit for rows in groups.values() for r in rows), "unknown"),
    )


def one_std_verdict(cell_ws: CellAggregate, cell_nows: CellAggregate) -> dict[str, dict]:
    """Per-metric equivalence call for a paired WS / no-WS cell.

    ``equivalent`` iff |mean_ws - mean_nows| <= std_nows (the primary,
    WS-within-no-WS direction); the reverse direction (within std_ws) is
    reported alongside for transparency.
    """
    if not cell_ws.ws or cell_nows.ws:
        raise ValueError("expected (ws=True, ws=False) cells in that order")
    if (cell_ws.dataset, cell_ws.model) != (cell_nows.dataset, cell_nows.model):
        raise ValueError("cells are not a pair (dataset/model mismatch)")
    shared = sorted(set(cell_ws.metrics) & set(cell_nows.metrics))
    if not shared:
        raise ValueError("paired cells share no metrics")
    out: dict[str, dict] = {}
    for name in shared:
        mean_ws = cell_ws.metrics[name]["mean"]
        mean_nows = cell_nows.metrics[name]["mean"]
        std_ws = cell_ws.metrics[name]["std"]
        std_nows = cell_nows.metrics[name]["std"]
        if std_nows is None or std_ws is None:
            raise ValueError(f"verdict for {name!r} needs at least two runs per cell")
        delta = abs(mean_ws - mean_nows)
        out[name] = {
            "verdict": "equivalent" if delta <= std_nows else "ws_outside",
            "reverse": "equivalent" if delta <= std_ws else "nows_outside",
            "mean_ws": mean_ws,
            "mean_nows": mean_nows,
            "std_ws": std_ws,
            "std_nows": std_nows,
            "delta": delta,
        }
    return out


CSV_HEADER = ["dataset", "model", "ws", "task", "metric", "mean", "std", "runs"]


def emit_report(report: AggregateReport, format: str = "markdown-table") -> str:
    """Render an aggregate report as csv, json, or a markdown table.

    csv and json round-trip losslessly; the markdown table renders
    ``mean ± std`` cells with two decimals.
    """
    if format == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for cell in report.cells:
            for name in sorted(cell.metrics):
                entry = cell.metrics[name]
                writer.writerow([
                    cell.dataset,
                    cell.model,
                    "ws" if cell.ws else "no-ws",
                    _METRIC_TASK.get(name, "unknown"),
                    name,
                    repr(entry["mean"]),
                    "" if entry["std"] is None else repr(entry["std"]),
                    cell.runs,
                ])
        return buf.getvalue()
    if format == "markdown-table":
        names = sorted({name for c in report.cells for name in c.metrics})
        lines = ["| dataset | model | " + " | ".join(names) + " |"]
        lines.append("|" + "---|" * (2 + len(names)))
        for cell in report.cells:
            row = [cell.dataset, f"{cell.model} {'WS' if cell.ws else 'No WS'}"]
            for name in names:
                entry = cell.metrics.get(name)
                row.append("--" if entry is None else format_mean_std(entry["mean"], entry["std"]))
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def format_mean_std(mean: float, std: float | None) -> str:
    """Two-decimal table cell, Table-1 style: '84.86 ± 1.48'."""
    if std is None:
        return f"{mean:.2f}"
    return f"{mean:.2f} ± {std:.2f}"
