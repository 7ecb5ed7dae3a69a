"""Evaluation protocols: overlap study, link prediction, node classification.

Metrics are implemented from first principles (rank-based AUC, rank-walk
average precision, a full-batch one-vs-rest logistic classifier) so the
whole pipeline stays dependency-light and deterministic; the test suite
cross-checks them against brute-force oracles.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graph import SparseAdjacency, normalize_adjacency
from .losses import LossConfig
from .model import ModelWeights, encode, merge_overlap, relu, sigmoid
from .synth import FeatureConfig, FeaturedGraph, SbmConfig, make_featured_graph, round_half_up
from .train import TrainConfig, train

# ---------------------------------------------------------------------------
# Edge splitting


@dataclass
class EdgeSplit:
    """Train adjacency plus held-out positive and negative pairs."""

    train_adjacency: SparseAdjacency
    test_pos: np.ndarray  # (P, 2)
    test_neg: np.ndarray  # (P, 2)


def split_edges(a: SparseAdjacency, test_frac: float, seed: int) -> EdgeSplit:
    """Hold out round(test_frac * E) edges plus as many sampled non-edges.

    Negative pairs are distinct non-edges of the *original* graph, sampled
    uniformly by rejection, excluding self-pairs. Raises if the graph does
    not contain enough non-edges.
    """
    if not (0.0 < test_frac < 1.0):
        raise ValueError("test_frac must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n_test = round_half_up(test_frac * a.num_edges)
    available_non_edges = a.n * (a.n - 1) // 2 - a.num_edges
    if n_test > available_non_edges:
        raise ValueError(
            f"need {n_test} non-edges but the graph only has {available_non_edges}"
        )
    order = rng.permutation(a.num_edges)
    test_pos = a.edges[order[:n_test]]
    train_edges = a.edges[np.sort(order[n_test:])]
    existing = a.edge_set()
    chosen: set[tuple[int, int]] = set()
    neg: list[tuple[int, int]] = []
    while len(neg) < n_test:
        i = int(rng.integers(a.n))
        j = int(rng.integers(a.n))
        if i == j:
            continue
        pair = (min(i, j), max(i, j))
        if pair in existing or pair in chosen:
            continue
        chosen.add(pair)
        neg.append(pair)
    test_neg = np.asarray(neg, dtype=np.int64).reshape(n_test, 2)
    return EdgeSplit(
        train_adjacency=SparseAdjacency.from_edges(a.n, train_edges),
        test_pos=np.asarray(test_pos, dtype=np.int64).reshape(n_test, 2),
        test_neg=test_neg,
    )


def embed_mean(weights: ModelWeights, adjacency: SparseAdjacency, features: np.ndarray) -> np.ndarray:
    """Mean embeddings mu for a graph under the given weights."""
    a_hat = normalize_adjacency(adjacency)
    mu_raw, ls_raw = encode(features, a_hat, weights.encoder)
    return merge_overlap(mu_raw, ls_raw, weights.config.split).mu


def score_edges(
    weights: ModelWeights,
    split: EdgeSplit,
    features: np.ndarray,
    use_mean: bool = True,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Decoder probabilities for test_pos then test_neg, with 1/0 labels.

    Encodes on the train adjacency with the full feature matrix. With
    ``use_mean`` (the default) the mean embedding goes straight through
    the decoder without sampling; otherwise one reparameterized sample is
    drawn from ``rng``.
    """
    a_hat = normalize_adjacency(split.train_adjacency)
    mu_raw, ls_raw = encode(features, a_hat, weights.encoder)
    dist = merge_overlap(mu_raw, ls_raw, weights.config.split)
    if use_mean:
        xi = dist.mu
    else:
        if rng is None:
            raise ValueError("need an rng when use_mean is False")
        xi = dist.mu + np.exp(dist.log_sigma) * rng.standard_normal(dist.mu.shape)
    xi_adj = xi[:, weights.config.split.adjacency_slice]
    pairs = np.concatenate([split.test_pos, split.test_neg], axis=0)
    left, right = xi_adj[pairs[:, 0]], xi_adj[pairs[:, 1]]
    if weights.config.adjacency_decoder == "deep":
        gl = relu(left @ weights.decoder.w_adj0)
        gr = relu(right @ weights.decoder.w_adj0)
        scores = sigmoid(((gl @ weights.decoder.w_adj1) * gr).sum(axis=1))
    else:
        scores = sigmoid((left * right).sum(axis=1))
    labels = np.concatenate(
        [np.ones(len(split.test_pos), dtype=np.int64), np.zeros(len(split.test_neg), dtype=np.int64)]
    )
    return scores, labels


# ---------------------------------------------------------------------------
# Ranking metrics


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a random positive outranks a random negative.

    Mann-Whitney form with tie-averaged ranks; ties count one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties replaced by the mean rank of their run."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean precision at each positive's rank, scores descending.

    Ties are broken by a stable sort on (score descending, original index
    ascending); AP is tie-sensitive, so the order is pinned.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            total += hits / rank
    return total / n_pos


# ---------------------------------------------------------------------------
# Node classification (one-vs-rest logistic, full-batch gradient descent)


@dataclass(frozen=True)
class ClassifierConfig:
    l2_strength: float = 1.0
    max_iterations: int = 1000
    tol: float = 1e-6

    def __post_init__(self):
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be >= 0")


def node_classification(
    embeddings: np.ndarray,
    labels: np.ndarray,
    train_nodes: np.ndarray,
    test_nodes: np.ndarray,
    cfg: ClassifierConfig = ClassifierConfig(),
) -> float:
    """Micro-averaged F1 of a one-vs-rest logistic classifier.

    The classifier is fit by deterministic full-batch gradient descent
    (step 1/L with L the gradient's Lipschitz bound) with an L2 penalty
    on the weights but not the intercept. Classes missing from the
    training rows are an error, never silently dropped.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train_nodes = np.asarray(train_nodes, dtype=np.int64)
    test_nodes = np.asarray(test_nodes, dtype=np.int64)
    if np.intersect1d(train_nodes, test_nodes).size:
        raise ValueError("train and test node sets overlap")
    classes = np.unique(labels)
    missing = np.setdiff1d(classes, np.unique(labels[train_nodes]))
    if missing.size:
        raise ValueError(f"classes absent from training data: {missing.tolist()}")
    x_train = embeddings[train_nodes]
    x_test = embeddings[test_nodes]
    scores = np.empty((len(test_nodes), len(classes)))
    for ci, cls in enumerate(classes):
        y = np.where(labels[train_nodes] == cls, 1.0, -1.0)
        w, b = _fit_logistic(x_train, y, cfg)
        scores[:, ci] = x_test @ w + b
    predicted = classes[np.argmax(scores, axis=1)]
    return micro_f1(labels[test_nodes], predicted)


def _fit_logistic(x: np.ndarray, y: np.ndarray, cfg: ClassifierConfig) -> tuple[np.ndarray, float]:
    n, f = x.shape
    w = np.zeros(f)
    b = 0.0
    # Lipschitz bound of the mean-logloss gradient: ||[X 1]||_2^2 / (4n) + l2
    aug = np.concatenate([x, np.ones((n, 1))], axis=1)
    lip = np.linalg.norm(aug, 2) ** 2 / (4.0 * n) + cfg.l2_strength
    step = 1.0 / lip
    for _ in range(cfg.max_iterations):
        margin = y * (x @ w + b)
        slope = y * _logistic_sigmoid(-margin)
        gw = -(x.T @ slope) / n + cfg.l2_strength * w
        gb = -slope.mean()
        if max(np.abs(gw).max(initial=0.0), abs(gb)) < cfg.tol:
            break
        w -= step * gw
        b -= step * gb
    return w, b


def _logistic_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def micro_f1(true_labels: np.ndarray, predicted: np.ndarray) -> float:
    """F1 from globally pooled true/false positive/negative counts."""
    true_labels = np.asarray(true_labels)
    predicted = np.asarray(predicted)
    classes = np.union1d(true_labels, predicted)
    tp = sum(int(np.sum((predicted == c) & (true_labels == c))) for c in classes)
    fp = sum(int(np.sum((predicted == c) & (true_labels != c))) for c in classes)
    fn = sum(int(np.sum((predicted != c) & (true_labels == c))) for c in classes)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Overlap-vs-reference study


def relative_loss_disadvantage(loss_f: float, loss_fmax: float) -> float:
    """(L_F - L_Fmax) / L_Fmax, the fractional penalty of a narrower model."""
    if loss_fmax <= 0:
        raise ValueError("reference loss must be positive")
    return (loss_f - loss_fmax) / loss_fmax


def bootstrap_ci(
    values: np.ndarray,
    n_boot: int = 2000,
    seed: int = 0,
    conf: float = 0.95,
    stat=np.mean,
) -> tuple[float, float]:
    """Percentile bootstrap confidence interval for a statistic of values."""
    values = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        stats[b] = stat(values[rng.integers(len(values), size=len(values))])
    lo = (1.0 - conf) / 2.0
    return float(np.quantile(stats, lo)), float(np.quantile(stats, 1.0 - lo))


def overlap_grid(f_max: int) -> list[dict]:
    """The study grid: overlap models and same-width references.

    Overlap models fix both per-task widths at f_max / 2 and move the
    shared block from 0 to f_max / 2 in steps of 2 (total width F drops
    from f_max to f_max / 2). Each reference model has the same total F
    split evenly with no shared block.
    """
    if f_max % 2 != 0:
        raise ValueError("f_max must be even")
    half = f_max // 2
    cells = []
    for f_ax in range(0, half + 1, 2):
        cells.append(
            {
                "kind": "overlap",
                "f_a": half - f_ax,
                "f_ax": f_ax,
                "f_x": half - f_ax,
                "f_total": f_max - f_ax,
            }
        )
    for f_total in range(f_max, half - 1, -2):
        cells.append(
            {
                "kind": "reference",
                "f_a": f_total // 2,
                "f_ax": 0,
                "f_x": f_total // 2,
                "f_total": f_total,
            }
        )
    return cells


@dataclass(frozen=True)
class StudyConfig:
    """Training and execution settings for one overlap study."""

    epochs: int = 1000
    k_samples: int = 5
    lr: float = 0.01
    h_enc: int = 50
    h_dec: int = 50
    noise_sigma: float = 0.1
    seed: int = 0
    jobs: int = 1
    adjacency_decoder: str = "deep"
    feature_head: str = "multinomial"
    loss: LossConfig = field(default_factory=LossConfig)


STUDY_COLUMNS = (
    "alpha",
    "f_total",
    "f_ax",
    "kind",
    "repeat",
    "best_total",
    "best_la",
    "best_lx",
    "best_epoch",
    "final_total",
    "auc",
    "ap",
    "f1",
)


def study_cells(sbm: SbmConfig, alphas, f_max: int, repeats: int, cfg: StudyConfig) -> list[dict]:
    """Flat list of picklable cell descriptors for the study grid.

    Data seeds depend on (alpha, repeat) only, so within a repeat every
    model width and kind trains on the same sampled network (paired
    comparisons); train seeds add the total width F but not the kind, so
    the zero-overlap model and the same-width reference, which share one
    architecture, produce identical traces.
    """
    cells = []
    for alpha in alphas:
        alpha_key = int(round(float(alpha) * 10**6))
        for repeat in range(repeats):
            data_seed = _derive_seed([cfg.seed, 11, alpha_key, repeat])
            for spec in overlap_grid(f_max):
                train_seed = _derive_seed([cfg.seed, 23, alpha_key, repeat, spec["f_total"]])
                cells.append(
                    {
                        "sbm_m": sbm.m,
                        "sbm_n": sbm.n,
                        "p_in": sbm.p_in,
                        "p_out": sbm.p_out,
                        "alpha": float(alpha),
                        "noise_sigma": cfg.noise_sigma,
                        "repeat": repeat,
                        "data_seed": data_seed,
                        "train_seed": train_seed,
                        "epochs": cfg.epochs,
                        "k_samples": cfg.k_samples,
                        "lr": cfg.lr,
                        "h_enc": cfg.h_enc,
                        "h_dec": cfg.h_dec,
                        "adjacency_decoder": cfg.adjacency_decoder,
                        "feature_head": cfg.feature_head,
                        "kappa_kl": cfg.loss.kappa_kl,
                        "kappa_theta": cfg.loss.kappa_theta,
                        **{k: spec[k] for k in ("kind", "f_a", "f_ax", "f_x", "f_total")},
                    }
                )
    return cells


def _derive_seed(parts: list[int]) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def run_study_cell(cell: dict) -> dict:
    """Train one study cell and report its best losses. Pure in the cell."""
    from .model import DimensionSplit  # local import keeps workers cheap to spawn

    graph = make_featured_graph(
        SbmConfig(m=cell["sbm_m"], n=cell["sbm_n"], p_in=cell["p_in"], p_out=cell["p_out"]),
        FeatureConfig(alpha=cell["alpha"], noise_sigma=cell["noise_sigma"]),
        seed=cell["data_seed"],
    )
    cfg = TrainConfig(
        split=DimensionSplit(cell["f_a"], cell["f_ax"], cell["f_x"]),
        epochs=cell["epochs"],
        k_samples=cell["k_samples"],
        lr=cell["lr"],
        seed=cell["train_seed"],
        h_enc=cell["h_enc"],
        h_dec=cell["h_dec"],
        adjacency_decoder=cell["adjacency_decoder"],
        feature_head=cell["feature_head"],
        loss=LossConfig(kappa_kl=cell["kappa_kl"], kappa_theta=cell["kappa_theta"]),
        track_loss_at_mean=False,
    )
    _, trace = train(graph, cfg)
    return {
        "alpha": cell["alpha"],
        "f_total": cell["f_total"],
        "f_ax": cell["f_ax"],
        "kind": cell["kind"],
        "repeat": cell["repeat"],
        "best_total": trace.best_total,
        "best_la": trace.best_adjacency,
        "best_lx": trace.best_feature,
        "best_epoch": trace.best_epoch,
        "final_total": trace.final_total,
        "auc": None,
        "ap": None,
        "f1": None,
    }


def _limit_worker_threads():
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except Exception:
        pass


def run_overlap_study(
    sbm: SbmConfig,
    alphas,
    f_max: int,
    repeats: int,
    cfg: StudyConfig,
    progress=None,
) -> list[dict]:
    """Train the full (alpha, F, kind, repeat) grid and return long rows."""
    cells = study_cells(sbm, alphas, f_max, repeats, cfg)
    rows = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs, initializer=_limit_worker_threads) as pool:
            for i, row in enumerate(pool.map(run_study_cell, cells)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(cells))
    else:
        for i, cell in enumerate(cells):
            rows.append(run_study_cell(cell))
            if progress:
                progress(i + 1, len(cells))
    rows.sort(key=lambda r: (r["alpha"], r["kind"], -r["f_total"], r["repeat"]))
    return rows


def write_study_rows(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STUDY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in STUDY_COLUMNS})


def read_study_rows(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "alpha": float(rec["alpha"]),
                    "f_total": int(rec["f_total"]),
                    "f_ax": int(rec["f_ax"]),
                    "kind": rec["kind"],
                    "repeat": int(rec["repeat"]),
                    "best_total": float(rec["best_total"]),
                    "best_la": float(rec["best_la"]),
                    "best_lx": float(rec["best_lx"]),
                    "best_epoch": int(rec["best_epoch"]),
                    "final_total": float(rec["final_total"]),
                    "auc": float(rec["auc"]) if rec.get("auc") else None,
                    "ap": float(rec["ap"]) if rec.get("ap") else None,
                    "f1": float(rec["f1"]) if rec.get("f1") else None,
                }
            )
    return rows


def study_values(rows: list[dict], kind: str, alpha: float, f_total: int, column: str = "best_total") -> np.ndarray:
    """Per-repeat values for one study cell group, ordered by repeat."""
    sel = [r for r in rows if r["kind"] == kind and r["f_total"] == f_total and abs(r["alpha"] - alpha) < 1e-9]
    sel.sort(key=lambda r: r["repeat"])
    return np.asarray([r[column] for r in sel], dtype=np.float64)


def rld_point_and_ci(
    values_f: np.ndarray,
    values_fmax: np.ndarray,
    n_boot: int = 2000,
    seed: int = 0,
    conf: float = 0.95,
) -> tuple[float, float, float]:
    """Relative loss disadvantage of mean losses, with a paired bootstrap CI.

    The repeats of the narrow and full-width models are paired (same
    sampled network per repeat), so resampling draws repeat indices.
    """
    values_f = np.asarray(values_f, dtype=np.float64)
    values_fmax = np.asarray(values_fmax, dtype=np.float64)
    if values_f.shape != values_fmax.shape:
        raise ValueError("paired value arrays must have equal length")
    point = relative_loss_disadvantage(float(values_f.mean()), float(values_fmax.mean()))
    rng = np.random.default_rng(seed)
    n = len(values_f)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(n, size=n)
        stats[b] = relative_loss_disadvantage(float(values_f[idx].mean()), float(values_fmax[idx].mean()))
    lo = (1.0 - conf) / 2.0
    return point, float(np.quantile(stats, lo)), float(np.quantile(stats, 1.0 - lo))


def reference_rld_slope_ci(
    rows: list[dict],
    f_max: int,
    alphas,
    n_boot: int = 2000,
    seed: int = 0,
    conf: float = 0.95,
    kind: str = "reference",
    column: str = "best_total",
) -> tuple[float, float, float]:
    """Slope of the pooled relative loss disadvantage against alpha.

    Pools every model of the given kind with F < f_max (the F = f_max
    disadvantage is identically zero), computes the RLD per (alpha, F)
    from repeat means, and fits an OLS slope; the CI comes from a paired
    bootstrap over repeats.
    """
    alphas = [float(a) for a in alphas]
    f_values = sorted({r["f_total"] for r in rows if r["kind"] == kind and r["f_total"] != f_max})
    data = {
        (a, fv): study_values(rows, kind, a, fv, column) for a in alphas for fv in f_values
    }
    fmax_data = {a: study_values(rows, kind, a, f_max, column) for a in alphas}
    n_rep = len(next(iter(fmax_data.values())))

    def slope_for(idx_by_alpha: dict) -> float:
        xs, ys = [], []
        for a in alphas:
            idx = idx_by_alpha[a]
            base = float(fmax_data[a][idx].mean())
            for fv in f_values:
                xs.append(a)
                ys.append(relative_loss_disadvantage(float(data[(a, fv)][idx].mean()), base))
        xs = np.asarray(xs)
        ys = np.asarray(ys)
        xc = xs - xs.mean()
        return float((xc * ys).sum() / (xc * xc).sum())

    identity = {a: np.arange(n_rep) for a in alphas}
    point = slope_for(identity)
    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        stats[b] = slope_for({a: rng.integers(n_rep, size=n_rep) for a in alphas})
    lo = (1.0 - conf) / 2.0
    return point, float(np.quantile(stats, lo)), float(np.quantile(stats, 1.0 - lo))


SUMMARY_COLUMNS = (
    "alpha",
    "f_total",
    "f_ax",
    "kind",
    "n",
    "best_total_mean",
    "best_total_lo",
    "best_total_hi",
    "rld_total",
    "rld_total_lo",
    "rld_total_hi",
    "rld_la",
    "rld_la_lo",
    "rld_la_hi",
    "rld_lx",
    "rld_lx_lo",
    "rld_lx_hi",
)


def summarize_study(rows: list[dict], n_boot: int = 2000, seed: int = 0) -> list[dict]:
    """Mean best losses with bootstrap CIs, plus per-component RLD columns."""
    keys = sorted(
        {(r["alpha"], r["f_total"], r["f_ax"], r["kind"]) for r in rows},
        key=lambda k: (k[0], k[3], -k[1]),
    )
    f_max = max(r["f_total"] for r in rows)
    out = []
    for alpha, f_total, f_ax, kind in keys:
        vals = study_values(rows, kind, alpha, f_total)
        lo, hi = bootstrap_ci(vals, n_boot=n_boot, seed=seed)
        rec = {
            "alpha": alpha,
            "f_total": f_total,
            "f_ax": f_ax,
            "kind": kind,
            "n": len(vals),
            "best_total_mean": float(vals.mean()),
            "best_total_lo": lo,
            "best_total_hi": hi,
        }
        for column, tag in (("best_total", "total"), ("best_la", "la"), ("best_lx", "lx")):
            narrow = study_values(rows, kind, alpha, f_total, column)
            full = study_values(rows, kind, alpha, f_max, column)
            point, rlo, rhi = rld_point_and_ci(narrow, full, n_boot=n_boot, seed=seed)
            rec[f"rld_{tag}"] = point
            rec[f"rld_{tag}_lo"] = rlo
            rec[f"rld_{tag}_hi"] = rhi
        out.append(rec)
    return out


def write_summary(path: str | Path, summary: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for rec in summary:
            writer.writerow(rec)


# ---------------------------------------------------------------------------
# Link prediction and node classification protocols


@dataclass(frozen=True)
class LinkPredictionConfig:
    test_frac: float = 0.15
    repeats: int = 10
    seed: int = 0
    train: TrainConfig = None  # type: ignore[assignment]


def run_link_prediction(graph: FeaturedGraph, cfg: LinkPredictionConfig) -> list[dict]:
    """Edge-holdout protocol: split, train on the rest, rank held-out pairs."""
    rows = []
    for repeat in range(cfg.repeats):
        split_seed = _derive_seed([cfg.seed, 31, repeat])
        train_seed = _derive_seed([cfg.seed, 47, repeat])
        split = split_edges(graph.adjacency, cfg.test_frac, split_seed)
        run_cfg = replace(cfg.train, seed=train_seed, track_loss_at_mean=False)
        train_graph = FeaturedGraph(
            adjacency=split.train_adjacency,
            features=graph.features,
            labels=graph.labels,
            community=graph.community,
        )
        weights, trace = train(train_graph, run_cfg)
        scores, labels = score_edges(weights, split, graph.features)
        rows.append(
            {
                "repeat": repeat,
                "test_frac": cfg.test_frac,
                "auc": auc(scores, labels),
                "ap": average_precision(scores, labels),
                "best_total": trace.best_total,
            }
        )
    return rows


@dataclass(frozen=True)
class NodeClassificationConfig:
    test_frac: float = 0.1
    repeats: int = 10
    seed: int = 0
    train: TrainConfig = None  # type: ignore[assignment]
    classifier: ClassifierConfig = ClassifierConfig()


def split_nodes(n: int, test_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train, test) node index arrays; test gets round(frac * n)."""
    if not (0.0 < test_frac < 1.0):
        raise ValueError("test_frac must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n_test = round_half_up(test_frac * n)
    perm = rng.permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def induced_subgraph(graph: FeaturedGraph, nodes: np.ndarray) -> FeaturedGraph:
    """Featured subgraph on the given nodes, relabeled 0..len(nodes)-1."""
    nodes = np.asarray(nodes, dtype=np.int64)
    index = -np.ones(graph.n_nodes, dtype=np.int64)
    index[nodes] = np.arange(len(nodes))
    kept = []
    for i, j in graph.adjacency.edges:
        if index[i] >= 0 and index[j] >= 0:
            kept.append((index[i], index[j]))
    return FeaturedGraph(
        adjacency=SparseAdjacency.from_edges(len(nodes), kept),
        features=graph.features[nodes],
        labels=None if graph.labels is None else graph.labels[nodes],
        community=None if graph.community is None else graph.community[nodes],
    )


def run_node_classification(graph: FeaturedGraph, cfg: NodeClassificationConfig) -> list[dict]:
    """Node-holdout protocol.

    The autoencoder trains on the subgraph induced by the training nodes;
    embeddings for all nodes (including held-out ones) then come from one
    encoder pass over the full graph, and a logistic classifier fit on the
    training embeddings is scored on the held-out ones.
    """
    if graph.labels is None:
        raise ValueError("node classification needs labeled nodes")
    rows = []
    for repeat in range(cfg.repeats):
        split_seed = _derive_seed([cfg.seed, 61, repeat])
        train_seed = _derive_seed([cfg.seed, 79, repeat])
        train_nodes, test_nodes = split_nodes(graph.n_nodes, cfg.test_frac, split_seed)
        sub = induced_subgraph(graph, train_nodes)
        run_cfg = replace(cfg.train, seed=train_seed, track_loss_at_mean=False)
        weights, _ = train(sub, run_cfg)
        mu = embed_mean(weights, graph.adjacency, graph.features)
        f1 = node_classification(mu, graph.labels, train_nodes, test_nodes, cfg.classifier)
        rows.append({"repeat": repeat, "test_frac": cfg.test_frac, "f1": f1})
    return rows
