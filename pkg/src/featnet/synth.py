"""Synthetic featured networks: SBM structure plus correlated node colors.

The generator plants M communities of n nodes each, wires them with
intra/inter connection probabilities, colors every node by its community,
then shuffles the colors of a 1 - alpha fraction of nodes (preserving the
global color counts) and adds a small Gaussian noise. alpha = 1 means
features fully aligned with structure, alpha = 0 means no alignment.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import SparseAdjacency, read_edge_list, write_edge_list


@dataclass(frozen=True)
class SbmConfig:
    """Stochastic block model: m communities of size n."""

    m: int
    n: int
    p_in: float = 0.25
    p_out: float = 0.01

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be >= 1")
        if not (0.0 <= self.p_out <= self.p_in <= 1.0):
            raise ValueError("need 0 <= p_out <= p_in <= 1")

    @property
    def num_nodes(self) -> int:
        return self.m * self.n


@dataclass(frozen=True)
class FeatureConfig:
    """Color correlation alpha and the per-entry Gaussian noise scale."""

    alpha: float
    noise_sigma: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class FeaturedGraph:
    """Adjacency + node features, with optional labels and community ids."""

    adjacency: SparseAdjacency
    features: np.ndarray
    labels: np.ndarray | None = None
    community: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.adjacency.n:
            raise ValueError(
                f"features must be ({self.adjacency.n}, D), got {self.features.shape}"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite entries")
        for name in ("labels", "community"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=np.int64)
                if val.shape != (self.adjacency.n,):
                    raise ValueError(f"{name} must have one entry per node")
                setattr(self, name, val)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.n

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])


def round_half_up(x: float) -> int:
    """round() with deterministic half-up ties (2.5 -> 3), not banker's."""
    return int(math.floor(x + 0.5))


def generate_sbm(cfg: SbmConfig, seed: int) -> tuple[SparseAdjacency, np.ndarray]:
    """Sample an SBM graph; community i owns nodes [i*n, (i+1)*n).

    Each unordered pair is connected independently with p_in inside a
    community and p_out across. Memory is quadratic in M*n; fine for the
    scales studied here.
    """
    rng = np.random.default_rng(seed)
    n_total = cfg.num_nodes
    community = np.repeat(np.arange(cfg.m, dtype=np.int64), cfg.n)
    u = rng.random((n_total, n_total))
    same = community[:, None] == community[None, :]
    connect = u < np.where(same, cfg.p_in, cfg.p_out)
    edges = np.argwhere(np.triu(connect, k=1))
    return SparseAdjacency.from_edges(n_total, edges), community


def assign_features(
    community: np.ndarray,
    fcfg: FeatureConfig,
    seed: int,
    return_colors: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """One-hot community colors, partially shuffled, plus Gaussian noise.

    Exactly round((1 - alpha) * N) nodes (half-up) are sampled without
    replacement and their colors are permuted among themselves, so the
    global count of each color never changes. Noise is added afterwards
    and not clipped.
    """
    rng = np.random.default_rng(seed)
    community = np.asarray(community, dtype=np.int64)
    n_total = community.shape[0]
    n_colors = int(community.max()) + 1
    colors = community.copy()
    n_shuffle = round_half_up((1.0 - fcfg.alpha) * n_total)
    if n_shuffle > 0:
        chosen = rng.choice(n_total, size=n_shuffle, replace=False)
        perm = rng.permutation(n_shuffle)
        colors[chosen] = colors[chosen][perm]
    x = np.zeros((n_total, n_colors), dtype=np.float64)
    x[np.arange(n_total), colors] = 1.0
    if fcfg.noise_sigma > 0.0:
        x += rng.normal(0.0, fcfg.noise_sigma, size=x.shape)
    if return_colors:
        return x, colors
    return x


def make_featured_graph(cfg: SbmConfig, fcfg: FeatureConfig, seed: int) -> FeaturedGraph:
    """Full synthetic sample: structure, features, labels = sampled colors.

    Structure and features consume independent streams derived from the
    seed, so changing the feature config never perturbs the graph.
    """
    graph_seed, feat_seed = _child_seeds(seed, 2)
    adjacency, community = generate_sbm(cfg, graph_seed)
    features, colors = assign_features(community, fcfg, feat_seed, return_colors=True)
    return FeaturedGraph(adjacency=adjacency, features=features, labels=colors, community=community)


def _child_seeds(seed: int, count: int) -> list[int]:
    """Deterministic per-purpose child seeds from a master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


# ---------------------------------------------------------------------------
# On-disk format: edge list + features CSV + labels/community CSV + manifest


def save_featured_graph(out_dir: str | Path, graph: FeaturedGraph, manifest_extra: dict | None = None) -> dict:
    """Write edges.txt, features.csv, labels/community CSVs and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(out / "edges.txt", graph.adjacency)
    np.savetxt(out / "features.csv", graph.features, delimiter=",", fmt="%.17g")
    artifacts = {
        "edges": "edges.txt",
        "features": "features.csv",
    }
    if graph.labels is not None:
        np.savetxt(out / "labels.csv", graph.labels, fmt="%d")
        artifacts["labels"] = "labels.csv"
    if graph.community is not None:
        np.savetxt(out / "community.csv", graph.community, fmt="%d")
        artifacts["community"] = "community.csv"
    manifest = {
        "format": "featnet-graph/1",
        "n_nodes": graph.n_nodes,
        "feature_dim": graph.feature_dim,
        "files": artifacts,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_featured_graph(in_dir: str | Path) -> FeaturedGraph:
    src = Path(in_dir)
    with open(src / "manifest.json") as fh:
        manifest = json.load(fh)
    files = manifest["files"]
    adjacency = read_edge_list(src / files["edges"], n=manifest["n_nodes"])
    features = np.loadtxt(src / files["features"], delimiter=",", dtype=np.float64, ndmin=2)
    labels = community = None
    if "labels" in files:
        labels = np.loadtxt(src / files["labels"], dtype=np.int64, ndmin=1)
    if "community" in files:
        community = np.loadtxt(src / files["community"], dtype=np.int64, ndmin=1)
    return FeaturedGraph(adjacency=adjacency, features=features, labels=labels, community=community)
