"""Command-line interface.

Subcommands:
  run        -- seeded multi-run benchmark of one configuration
  gridsearch -- learning-rate search on link-prediction validation AUC
  compare    -- one-standard-deviation verdict table for two result files
  gen-sbm    -- generate a stochastic block model dataset directory

Flags override values from an optional flat key-value config file
(``--config``), whose keys mirror the flag names with dashes replaced by
underscores (e.g. ``mask_val = 0.05``).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .datasets import load_dataset, read_kv_file, write_sbm_dataset
from .graphs import sbm_generate
from .harness import (
    AggregateReport,
    ExperimentConfig,
    RunResult,
    aggregate,
    emit_report,
    format_mean_std,
    grid_search_lr,
    one_std_verdict,
    package_commit,
    run_many,
)
from .ndmath import derive_seed

_BOOLS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_bool(value: str) -> bool:
    try:
        return _BOOLS[value.strip().lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}") from None


def _parse_floats(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in value.replace(",", " ").split())


def _parse_ints(value: str) -> tuple[int, ...]:
    return tuple(int(v) for v in value.replace(",", " ").split())


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key-value config file")
    parser.add_argument("--dataset")
    parser.add_argument("--data-dir", type=Path, default=Path("data"))
    feat = parser.add_mutually_exclusive_group()
    feat.add_argument("--features", dest="use_features", action="store_true", default=None)
    feat.add_argument("--no-features", dest="use_features", action="store_false", default=None)
    parser.add_argument("--model", choices=["vgae", "deep-vgae"])
    ws = parser.add_mutually_exclusive_group()
    ws.add_argument("--ws", dest="ws", action="store_true", default=None)
    ws.add_argument("--no-ws", dest="ws", action="store_false", default=None)
    parser.add_argument("--runs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--lr-grid", type=_parse_floats)
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--d", type=int)
    parser.add_argument("--dh", type=_parse_ints, help="hidden sizes, e.g. '32' or '32,32'")
    parser.add_argument("--mask-val", type=float)
    parser.add_argument("--mask-test", type=float)
    parser.add_argument("--fastgae", type=_parse_bool, help="force subgraph decoding on/off")
    parser.add_argument("--fastgae-ns", type=int)
    parser.add_argument("--fastgae-alpha", type=float)
    parser.add_argument("--fastgae-threshold", type=int)
    parser.add_argument("--tasks", help="comma list: link_prediction,community_detection")
    parser.add_argument("--kl-scale", type=float)
    parser.add_argument("--dropout", type=float)


_CONFIG_PARSERS = {
    "dataset": str,
    "use_features": lambda v: _BOOLS[v.lower()],
    "model": str,
    "ws": lambda v: _BOOLS[v.lower()],
    "runs": int,
    "seed": int,
    "lr": float,
    "lr_grid": _parse_floats,
    "iterations": int,
    "d": int,
    "dh": _parse_ints,
    "mask_val": float,
    "mask_test": float,
    "fastgae": lambda v: _BOOLS[v.lower()],
    "fastgae_ns": int,
    "fastgae_alpha": float,
    "fastgae_threshold": int,
    "tasks": lambda v: tuple(t.strip() for t in v.split(",") if t.strip()),
    "kl_scale": float,
    "dropout": float,
}


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge config-file values with flags (flags win)."""
    values: dict = {}
    if args.config is not None:
        for key, raw in read_kv_file(args.config).items():
            if key == "data_dir":
                continue
            if key not in _CONFIG_PARSERS:
                raise SystemExit(f"unknown config key {key!r} in {args.config}")
            values[key] = _CONFIG_PARSERS[key](raw)
    for key in _CONFIG_PARSERS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if isinstance(values.get("tasks"), str):
        values["tasks"] = tuple(t.strip() for t in values["tasks"].split(","))
    if "dataset" not in values:
        raise SystemExit("--dataset is required (flag or config file)")
    return ExperimentConfig(**values)


def _write_output(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    config = build_config(args)
    commit = package_commit()
    dataset = load_dataset(args.data_dir, config.dataset)
    if config.lr_grid:
        seeds = [derive_seed(config.seed, 9000 + j) for j in range(args.grid_seeds)]
        best, _ = grid_search_lr(config, seeds, dataset=dataset)
        config = replace(config, lr=best, lr_grid=None)
        print(f"grid search selected lr={best}", file=sys.stderr)

    def progress(done, total, result):
        line = ", ".join(f"{k}={v:.4f}" for k, v in sorted(result.metrics.items()))
        print(f"run {done}/{total} seed={result.seed}: {line}", file=sys.stderr)

    results = run_many(config, dataset=dataset, commit=commit, progress=progress)
    report = aggregate(results)
    if args.format == "json":
        payload = {
            "config": config.to_dict(),
            "results": [r.to_dict() for r in results],
            "aggregate": report.to_dict(),
        }
        _write_output(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    else:
        _write_output(emit_report(report, args.format), args.out)
    return 0


def cmd_gridsearch(args: argparse.Namespace) -> int:
    config = build_config(args)
    if not config.lr_grid:
        raise SystemExit("gridsearch needs --lr-grid")
    dataset = load_dataset(args.data_dir, config.dataset)
    seeds = [derive_seed(config.seed, 9000 + j) for j in range(args.grid_seeds)]
    best, table = grid_search_lr(config, seeds, dataset=dataset)
    for lr in sorted(table):
        score = table[lr]
        print(f"lr={lr:g}: " + ("diverged" if score is None else f"val_auc={score:.4f}"))
    print(f"best lr: {best:g}")
    return 0


def _load_results_file(path: Path) -> AggregateReport:
    data = json.loads(path.read_text(encoding="utf-8"))
    if "aggregate" in data:
        return AggregateReport.from_dict(data["aggregate"])
    if "cells" in data:
        return AggregateReport.from_dict(data)
    if "results" in data:
        return aggregate([RunResult.from_dict(r) for r in data["results"]])
    raise SystemExit(f"{path} is not a recognized results file")


def cmd_compare(args: argparse.Namespace) -> int:
    report_a = _load_results_file(args.file_a)
    report_b = _load_results_file(args.file_b)
    cells = list(report_a.cells) + list(report_b.cells)
    ws_cells = {(c.dataset, c.model): c for c in cells if c.ws}
    nows_cells = {(c.dataset, c.model): c for c in cells if not c.ws}
    pairs = sorted(set(ws_cells) & set(nows_cells))
    if not pairs:
        raise SystemExit("no paired (dataset, model) cells across the two files")
    lines = ["| dataset | model | metric | WS | No WS | verdict |", "|---|---|---|---|---|---|"]
    rows = []
    for key in pairs:
        verdicts = one_std_verdict(ws_cells[key], nows_cells[key])
        for name, v in sorted(verdicts.items()):
            lines.append(
                f"| {key[0]} | {key[1]} | {name} "
                f"| {format_mean_std(v['mean_ws'], v['std_ws'])} "
                f"| {format_mean_std(v['mean_nows'], v['std_nows'])} "
                f"| {v['verdict']} |"
            )
            rows.append({"dataset": key[0], "model": key[1], "metric": name, **v})
    if args.format == "json":
        _write_output(json.dumps(rows, indent=2, sort_keys=True) + "\n", args.out)
    else:
        _write_output("\n".join(lines) + "\n", args.out)
    return 0


def cmd_gen_sbm(args: argparse.Namespace) -> int:
    graph, labels = sbm_generate(args.blocks, args.p_in, args.p_out, args.seed)
    path = write_sbm_dataset(args.data_dir, args.name, graph, labels)
    print(f"wrote {graph.n} nodes / {graph.m} edges / {labels.k} blocks to {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="wsvgae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="seeded multi-run benchmark")
    _add_config_flags(p_run)
    p_run.add_argument("--grid-seeds", type=int, default=3, help="seeds per grid point")
    p_run.add_argument("--out", type=Path)
    p_run.add_argument("--format", choices=["json", "csv", "markdown-table"], default="json")
    p_run.set_defaults(func=cmd_run)

    p_grid = sub.add_parser("gridsearch", help="learning-rate grid search")
    _add_config_flags(p_grid)
    p_grid.add_argument("--grid-seeds", type=int, default=3)
    p_grid.set_defaults(func=cmd_gridsearch)

    p_cmp = sub.add_parser("compare", help="verdict table for two result files")
    p_cmp.add_argument("file_a", type=Path)
    p_cmp.add_argument("file_b", type=Path)
    p_cmp.add_argument("--out", type=Path)
    p_cmp.add_argument("--format", choices=["json", "markdown-table"], default="markdown-table")
    p_cmp.set_defaults(func=cmd_compare)

    p_sbm = sub.add_parser("gen-sbm", help="generate an SBM dataset")
    p_sbm.add_argument("--blocks", type=_parse_ints, required=True, help="e.g. '50,50'")
    p_sbm.add_argument("--p-in", type=float, required=True)
    p_sbm.add_argument("--p-out", type=float, required=True)
    p_sbm.add_argument("--seed", type=int, default=1)
    p_sbm.add_argument("--name", required=True)
    p_sbm.add_argument("--data-dir", type=Path, default=Path("data"))
    p_sbm.set_defaults(func=cmd_gen_sbm)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
