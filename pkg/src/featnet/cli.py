"""Command-line harness: generate, train, eval, sweep.

Every run writes a manifest.json next to its artifacts with the full
effective configuration, the seed, wall time, and best-effort peak RSS.
Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import resource
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import default_feature_head, load_content_cites, load_pubmed
from .evaluate import (
    LinkPredictionConfig,
    NodeClassificationConfig,
    StudyConfig,
    auc,
    average_precision,
    embed_mean,
    node_classification,
    run_link_prediction,
    run_node_classification,
    run_overlap_study,
    run_study_cell,
    score_edges,
    split_edges,
    split_nodes,
    study_cells,
    summarize_study,
    write_study_rows,
    write_summary,
    ClassifierConfig,
)
from .gradients import build_training_inputs, finite_diff_check
from .losses import LossConfig
from .model import DimensionSplit, ModelConfig, load_checkpoint, save_checkpoint
from .synth import FeatureConfig, FeaturedGraph, SbmConfig, load_featured_graph, make_featured_graph, save_featured_graph
from .train import TrainConfig, init_model_weights, train


class UsageError(Exception):
    pass


TRAIN_DEFAULTS = {
    "epochs": 1000,
    "lr": 0.01,
    "k": 5,
    "h_enc": 50,
    "h_dec": 50,
    "f_a": 10,
    "f_ax": 0,
    "f_x": 10,
    "decoder": "deep",
    "feature_head": "auto",
    "seed": 0,
}

PRESETS = {
    "synthetic": {},
    # benchmark configuration: smaller hidden layers, 16 dims per task with
    # full overlap, single-sample loss estimates, shorter training
    "citation": {
        "epochs": 200,
        "h_enc": 32,
        "h_dec": 32,
        "f_a": 0,
        "f_ax": 16,
        "f_x": 0,
        "k": 1,
    },
}


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 2
    try:
        args.func(args)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featnet", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    gen = sub.add_parser("generate", help="sample a synthetic featured network")
    gen.add_argument("--m", type=int, required=True, help="number of communities")
    gen.add_argument("--n", type=int, default=10, help="community size")
    gen.add_argument("--p-in", type=float, default=0.25)
    gen.add_argument("--p-out", type=float, default=0.01)
    gen.add_argument("--alpha", type=float, required=True, help="structure/feature correlation in [0, 1]")
    gen.add_argument("--noise-sigma", type=float, default=0.1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="train a model on a dataset")
    _add_dataset_flags(tr)
    tr.add_argument("--preset", choices=sorted(PRESETS), default="synthetic")
    tr.add_argument("--config", type=Path, help="JSON config file (flags override it)")
    tr.add_argument("--f-a", type=int, default=None)
    tr.add_argument("--f-ax", type=int, default=None)
    tr.add_argument("--f-x", type=int, default=None)
    tr.add_argument("--epochs", type=int, default=None)
    tr.add_argument("--k", type=int, default=None, help="samples per loss estimate")
    tr.add_argument("--lr", type=float, default=None)
    tr.add_argument("--h-enc", type=int, default=None)
    tr.add_argument("--h-dec", type=int, default=None)
    tr.add_argument("--decoder", choices=["deep", "shallow"], default=None)
    tr.add_argument(
        "--feature-head",
        choices=["auto", "multinomial", "bernoulli", "gaussian"],
        default=None,
    )
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--holdout-edges", type=float, default=None, help="edge fraction held out before training (link prediction)")
    tr.add_argument("--holdout-nodes", type=float, default=None, help="node fraction held out before training (classification)")
    tr.add_argument("--grad-check", action="store_true", help="verify gradients on a shrunken instance before training")
    tr.add_argument("--out", type=Path, required=True)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_dataset_flags(ev)
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--task", choices=["linkpred", "nodeclass"], required=True)
    ev.add_argument("--test-frac", type=float, default=None)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--export-embeddings", action="store_true")
    ev.add_argument("--out", type=Path, required=True)
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", help="run an experiment grid from a JSON spec")
    sw.add_argument("--grid", type=Path, required=True)
    sw.add_argument("--out", type=Path, required=True)
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return parser


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", type=Path, help="generated featured-graph directory")
    p.add_argument("--content", type=Path, help="citation .content file")
    p.add_argument("--cites", type=Path, help="citation .cites file")
    p.add_argument("--pubmed", type=Path, help="PubMed Diabetes directory")


def _load_dataset(args) -> tuple[FeaturedGraph, str]:
    chosen = [x for x in (args.data, args.content, args.pubmed) if x is not None]
    if len(chosen) != 1:
        raise UsageError("supply exactly one of --data, --content/--cites, --pubmed")
    if args.data is not None:
        return load_featured_graph(args.data), str(args.data)
    if args.content is not None:
        if args.cites is None:
            raise UsageError("--content needs --cites")
        ds = load_content_cites(args.content, args.cites)
        return ds.graph, str(args.content)
    ds = load_pubmed(args.pubmed)
    return ds.graph, str(args.pubmed)


# ---------------------------------------------------------------------------
# Manifests


def _write_manifest(out_dir: Path, payload: dict) -> None:
    peak_kib = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    payload = dict(payload)
    payload["version"] = __version__
    payload["manifest_schema"] = 1
    payload["peak_rss_bytes"] = int(peak_kib) * 1024
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> None:
    t0 = time.monotonic()
    if not (0.0 <= args.alpha <= 1.0):
        raise UsageError(f"--alpha must be in [0, 1], got {args.alpha}")
    if args.noise_sigma < 0:
        raise UsageError("--noise-sigma must be >= 0")
    try:
        sbm = SbmConfig(m=args.m, n=args.n, p_in=args.p_in, p_out=args.p_out)
    except ValueError as exc:
        raise UsageError(str(exc))
    fcfg = FeatureConfig(alpha=args.alpha, noise_sigma=args.noise_sigma)
    graph = make_featured_graph(sbm, fcfg, args.seed)
    config = {
        "m": args.m,
        "n": args.n,
        "p_in": args.p_in,
        "p_out": args.p_out,
        "alpha": args.alpha,
        "noise_sigma": args.noise_sigma,
    }
    save_featured_graph(args.out, graph, manifest_extra={"config": config, "seed": args.seed})
    _write_manifest(
        args.out,
        {
            "command": "generate",
            "config": config,
            "seed": args.seed,
            "wall_time_seconds": time.monotonic() - t0,
            "artifacts": {"graph_dir": str(args.out)},
        },
    )
    print(f"wrote {graph.n_nodes}-node graph ({graph.adjacency.num_edges} edges) to {args.out}")


# ---------------------------------------------------------------------------
# train


def _merge_train_config(args) -> dict:
    cfg = dict(TRAIN_DEFAULTS)
    cfg.update(PRESETS[args.preset])
    if args.config is not None:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(TRAIN_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in TRAIN_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def cmd_train(args) -> None:
    t0 = time.monotonic()
    cfg = _merge_train_config(args)
    graph, data_ref = _load_dataset(args)
    if cfg["feature_head"] == "auto":
        if args.data is not None:
            cfg["feature_head"] = "multinomial"  # synthetic one-hot colors
        else:
            cfg["feature_head"] = default_feature_head(graph.features)

    holdout_info: dict = {}
    eval_graph = graph
    if args.holdout_edges is not None and args.holdout_nodes is not None:
        raise UsageError("choose one of --holdout-edges / --holdout-nodes")
    if args.holdout_edges is not None:
        split_seed = cfg["seed"] + 7919
        split = split_edges(graph.adjacency, args.holdout_edges, split_seed)
        graph = FeaturedGraph(
            adjacency=split.train_adjacency,
            features=graph.features,
            labels=graph.labels,
            community=graph.community,
        )
        holdout_info = {"holdout_edges": args.holdout_edges, "split_seed": split_seed}
    elif args.holdout_nodes is not None:
        split_seed = cfg["seed"] + 7919
        train_nodes, test_nodes = split_nodes(graph.n_nodes, args.holdout_nodes, split_seed)
        from .evaluate import induced_subgraph

        graph = induced_subgraph(eval_graph, train_nodes)
        holdout_info = {"holdout_nodes": args.holdout_nodes, "split_seed": split_seed}

    try:
        split_dims = DimensionSplit(cfg["f_a"], cfg["f_ax"], cfg["f_x"])
    except ValueError as exc:
        raise UsageError(str(exc))
    train_cfg = TrainConfig(
        split=split_dims,
        epochs=cfg["epochs"],
        k_samples=cfg["k"],
        lr=cfg["lr"],
        seed=cfg["seed"],
        h_enc=cfg["h_enc"],
        h_dec=cfg["h_dec"],
        adjacency_decoder=cfg["decoder"],
        feature_head=cfg["feature_head"],
    )

    if args.grad_check:
        err = _shrunken_grad_check(train_cfg, graph)
        print(f"gradient check on shrunken instance: max relative error {err:.3e}")
        if err > 1e-4:
            raise RuntimeError(f"gradient check failed ({err:.3e} > 1e-4); refusing to train")

    args.out.mkdir(parents=True, exist_ok=True)
    weights, trace = train(graph, train_cfg)
    ckpt_path = args.out / "checkpoint.npz"
    save_checkpoint(
        ckpt_path,
        weights,
        extra_meta={"seed": cfg["seed"], "data": data_ref, **holdout_info},
    )
    trace.write_csv(args.out / "trace.csv")
    _write_manifest(
        args.out,
        {
            "command": "train",
            "config": {**cfg, "data": data_ref, **holdout_info},
            "seed": cfg["seed"],
            "wall_time_seconds": time.monotonic() - t0,
            "artifacts": {"checkpoint": str(ckpt_path), "trace": str(args.out / "trace.csv")},
        },
    )
    print(
        f"trained {cfg['epochs']} epochs; best total {trace.best_total:.6f} "
        f"at epoch {trace.best_epoch}; final {trace.final_total:.6f}"
    )


def _shrunken_grad_check(cfg: TrainConfig, graph: FeaturedGraph) -> float:
    """Verify gradients on a small instance with the same variant choices."""
    rng = np.random.default_rng(12345)
    n = min(graph.n_nodes, 8)
    d = min(graph.feature_dim, 4)
    split = DimensionSplit(
        f_a=min(cfg.split.f_a, 2) if cfg.split.f_a else 0,
        f_ax=min(cfg.split.f_ax, 2) if cfg.split.f_ax else 0,
        f_x=min(cfg.split.f_x, 2) if cfg.split.f_x else 0,
    )
    from .graph import SparseAdjacency

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
    if not pairs:
        pairs = [(0, 1)]
    adjacency = SparseAdjacency.from_edges(n, pairs)
    x = np.abs(rng.normal(size=(n, d))) if d >= 2 else np.abs(rng.normal(size=(n, 2)))
    model_cfg = ModelConfig(
        split=split,
        feature_dim=x.shape[1],
        h_enc=min(cfg.h_enc, 5),
        h_dec=min(cfg.h_dec, 5),
        adjacency_decoder=cfg.adjacency_decoder,
        feature_head=cfg.feature_head,
    )
    weights = init_model_weights(model_cfg, rng)
    inputs = build_training_inputs(adjacency, x, cfg.loss, cfg.feature_head)
    eps = rng.standard_normal((2, n, split.total))
    return finite_diff_check(weights, inputs, cfg.loss, eps)


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> None:
    t0 = time.monotonic()
    graph, data_ref = _load_dataset(args)
    weights, extra = load_checkpoint(args.checkpoint)
    seed = args.seed if args.seed is not None else extra.get("split_seed", 0)
    metrics: dict = {"task": args.task}

    if args.task == "linkpred":
        test_frac = args.test_frac or extra.get("holdout_edges")
        if test_frac is None:
            raise UsageError("--test-frac required (checkpoint records no edge holdout)")
        split = split_edges(graph.adjacency, test_frac, seed)
        scores, labels = score_edges(weights, split, graph.features)
        metrics.update(
            {
                "test_frac": test_frac,
                "auc": auc(scores, labels),
                "ap": average_precision(scores, labels),
                "n_test_pairs": int(len(scores)),
            }
        )
    else:
        if graph.labels is None:
            raise UsageError("node classification needs a labeled dataset")
        test_frac = args.test_frac or extra.get("holdout_nodes")
        if test_frac is None:
            raise UsageError("--test-frac required (checkpoint records no node holdout)")
        train_nodes, test_nodes = split_nodes(graph.n_nodes, test_frac, seed)
        mu = embed_mean(weights, graph.adjacency, graph.features)
        f1 = node_classification(mu, graph.labels, train_nodes, test_nodes, ClassifierConfig())
        metrics.update({"test_frac": test_frac, "f1_micro": f1, "n_test_nodes": int(len(test_nodes))})

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts = {"metrics": str(args.out / "metrics.json")}
    if args.export_embeddings:
        mu = embed_mean(weights, graph.adjacency, graph.features)
        emb_path = args.out / "embeddings.csv"
        header = ",".join(f"dim_{i}" for i in range(mu.shape[1]))
        np.savetxt(emb_path, mu, delimiter=",", fmt="%.17g", header=header, comments="")
        artifacts["embeddings"] = str(emb_path)
    _write_manifest(
        args.out,
        {
            "command": "eval",
            "config": {"task": args.task, "checkpoint": str(args.checkpoint), "data": data_ref, "test_frac": metrics.get("test_frac"), "seed": seed},
            "seed": seed,
            "wall_time_seconds": time.monotonic() - t0,
            "artifacts": artifacts,
        },
    )
    print(json.dumps(metrics, sort_keys=True))


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> None:
    t0 = time.monotonic()
    try:
        with open(args.grid) as fh:
            grid = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"corrupt grid spec {args.grid}: {exc}")
    kind = grid.get("type")
    if kind == "overlap_study":
        _sweep_overlap_study(args, grid, t0)
    elif kind in ("linkpred", "nodeclass"):
        _sweep_holdout(args, grid, kind, t0)
    else:
        raise UsageError(f"grid spec needs type overlap_study | linkpred | nodeclass, got {kind!r}")


def _sweep_overlap_study(args, grid: dict, t0: float) -> None:
    required = {"sbm", "alphas", "f_max", "repeats"}
    missing = required - set(grid)
    if missing:
        raise UsageError(f"grid spec missing keys: {sorted(missing)}")
    sbm = SbmConfig(**grid["sbm"])
    cfg = StudyConfig(
        epochs=grid.get("epochs", 1000),
        k_samples=grid.get("k", 5),
        lr=grid.get("lr", 0.01),
        h_enc=grid.get("h_enc", 50),
        h_dec=grid.get("h_dec", 50),
        noise_sigma=grid.get("noise_sigma", 0.1),
        seed=grid.get("seed", 0),
        jobs=args.jobs,
        adjacency_decoder=grid.get("decoder", "deep"),
        feature_head=grid.get("feature_head", "multinomial"),
    )
    out = args.out
    cells_dir = out / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    cells = study_cells(sbm, grid["alphas"], grid["f_max"], grid["repeats"], cfg)

    def cell_path(c: dict) -> Path:
        tag = f"a{c['alpha']:.4f}_F{c['f_total']}_{c['kind']}_r{c['repeat']}"
        return cells_dir / f"{tag}.json"

    pending = [c for c in cells if not cell_path(c).exists()]
    print(f"{len(cells)} cells, {len(cells) - len(pending)} already done, running {len(pending)}")
    _run_cells(pending, cell_path, args.jobs)

    rows = []
    for c in cells:
        with open(cell_path(c)) as fh:
            rows.append(json.load(fh))
    rows.sort(key=lambda r: (r["alpha"], r["kind"], -r["f_total"], r["repeat"]))
    write_study_rows(out / "study.csv", rows)
    write_summary(out / "summary.csv", summarize_study(rows, seed=cfg.seed))
    _write_manifest(
        out,
        {
            "command": "sweep",
            "config": grid,
            "seed": cfg.seed,
            "wall_time_seconds": time.monotonic() - t0,
            "artifacts": {"study": str(out / "study.csv"), "summary": str(out / "summary.csv")},
        },
    )
    print(f"wrote {out / 'study.csv'} and {out / 'summary.csv'}")


def _run_cells(pending: list[dict], cell_path, jobs: int) -> None:
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        from .evaluate import _limit_worker_threads

        with ProcessPoolExecutor(max_workers=jobs, initializer=_limit_worker_threads) as pool:
            for cell, row in zip(pending, pool.map(run_study_cell, pending)):
                _atomic_json(cell_path(cell), row)
    else:
        for cell in pending:
            _atomic_json(cell_path(cell), run_study_cell(cell))


def _atomic_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
    tmp.replace(path)


def _sweep_holdout(args, grid: dict, task: str, t0: float) -> None:
    data_args = argparse.Namespace(
        data=Path(grid["data"]) if "data" in grid else None,
        content=Path(grid["content"]) if "content" in grid else None,
        cites=Path(grid["cites"]) if "cites" in grid else None,
        pubmed=Path(grid["pubmed"]) if "pubmed" in grid else None,
    )
    graph, data_ref = _load_dataset(data_args)
    head = grid.get("feature_head") or default_feature_head(graph.features)
    repeats = grid.get("repeats", 10)
    seed = grid.get("seed", 0)
    rows = []
    for test_frac in grid.get("test_fracs", [0.15]):
        for per_task in grid.get("per_task_dims", [16]):
            for overlap in grid.get("overlaps", [0, per_task]):
                if overlap > per_task:
                    continue
                split_dims = DimensionSplit(per_task - overlap, overlap, per_task - overlap)
                tcfg = TrainConfig(
                    split=split_dims,
                    epochs=grid.get("epochs", 200),
                    k_samples=grid.get("k", 1),
                    lr=grid.get("lr", 0.01),
                    seed=seed,
                    h_enc=grid.get("h_enc", 32),
                    h_dec=grid.get("h_dec", 32),
                    adjacency_decoder=grid.get("decoder", "shallow" if task == "linkpred" else "deep"),
                    feature_head=head,
                )
                if task == "linkpred":
                    res = run_link_prediction(
                        graph, LinkPredictionConfig(test_frac=test_frac, repeats=repeats, seed=seed, train=tcfg)
                    )
                else:
                    res = run_node_classification(
                        graph, NodeClassificationConfig(test_frac=test_frac, repeats=repeats, seed=seed, train=tcfg)
                    )
                for r in res:
                    rows.append({"test_frac": test_frac, "per_task_dims": per_task, "overlap": overlap, **r})
                done = len(rows)
                print(f"... {done} rows", file=sys.stderr)
    args.out.mkdir(parents=True, exist_ok=True)
    out_csv = args.out / f"{task}.csv"
    if rows:
        import csv as _csv

        with open(out_csv, "w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    _write_manifest(
        args.out,
        {
            "command": "sweep",
            "config": {**grid, "data": data_ref},
            "seed": seed,
            "wall_time_seconds": time.monotonic() - t0,
            "artifacts": {task: str(out_csv)},
        },
    )
    print(f"wrote {out_csv}")
