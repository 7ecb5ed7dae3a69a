"""Loaders for the LINQS citation benchmarks (Cora, CiteSeer, PubMed).

Files are user-supplied; nothing is downloaded. Both loaders symmetrize
the citation links, drop references to unknown ids (reporting the count),
and keep node order identical to the content file for reproducibility.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import SparseAdjacency
from .synth import FeaturedGraph


@dataclass
class CitationDataset:
    graph: FeaturedGraph
    class_names: list[str]
    id_map: dict[str, int]
    dropped_citations: int = 0

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def summary(self) -> dict:
        return {
            "n_nodes": self.graph.n_nodes,
            "feature_dim": self.graph.feature_dim,
            "n_classes": self.n_classes,
            "n_edges": self.graph.adjacency.num_edges,
            "dropped_citations": self.dropped_citations,
        }


def load_content_cites(content_path: str | Path, cites_path: str | Path) -> CitationDataset:
    """Load the .content/.cites pair used by Cora and CiteSeer.

    Content lines are ``id w1 ... wD label`` (binary bag-of-words), cites
    lines are ``cited citing``. A malformed content line (inconsistent
    field count) aborts with its line number. Citations mentioning ids
    absent from the content file, duplicates, and self-citations are
    dropped and counted.
    """
    ids: list[str] = []
    feature_rows: list[np.ndarray] = []
    raw_labels: list[str] = []
    n_fields = None
    with open(content_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if n_fields is None:
                n_fields = len(parts)
                if n_fields < 3:
                    raise ValueError(f"{content_path}:{lineno}: need id, features and label")
            elif len(parts) != n_fields:
                raise ValueError(
                    f"{content_path}:{lineno}: expected {n_fields} fields, got {len(parts)}"
                )
            ids.append(parts[0])
            feature_rows.append(np.asarray([float(v) for v in parts[1:-1]], dtype=np.float64))
            raw_labels.append(parts[-1])
    if not ids:
        raise ValueError(f"{content_path}: no content lines")
    id_map = {pid: idx for idx, pid in enumerate(ids)}
    if len(id_map) != len(ids):
        raise ValueError(f"{content_path}: duplicate node ids")
    features = np.stack(feature_rows)
    class_names = sorted(set(raw_labels))
    class_index = {c: i for i, c in enumerate(class_names)}
    labels = np.asarray([class_index[l] for l in raw_labels], dtype=np.int64)

    edges, dropped = _read_pairs(cites_path, id_map)
    graph = FeaturedGraph(
        adjacency=SparseAdjacency.from_edges(len(ids), edges),
        features=features,
        labels=labels,
    )
    return CitationDataset(graph=graph, class_names=class_names, id_map=id_map, dropped_citations=dropped)


def _read_pairs(path: str | Path, id_map: dict[str, int]) -> tuple[list[tuple[int, int]], int]:
    edges: set[tuple[int, int]] = set()
    dropped = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'cited citing', got {line.rstrip()!r}")
            a, b = parts
            if a not in id_map or b not in id_map or a == b:
                dropped += 1
                continue
            i, j = id_map[a], id_map[b]
            pair = (min(i, j), max(i, j))
            if pair in edges:
                dropped += 1
                continue
            edges.add(pair)
    return sorted(edges), dropped


def load_pubmed(path: str | Path) -> CitationDataset:
    """Load the PubMed Diabetes tab files from a directory (or node file).

    The node file has two header lines (record count, then the feature
    vocabulary in ``numeric:w-word:0.0`` entries); data lines carry
    ``id label=k w-word=tfidf ... summary=...``. The cites file also has
    two header lines, then ``eid paper:cited | paper:citing`` lines.
    """
    path = Path(path)
    if path.is_dir():
        node_file = _locate(path, "NODE.paper.tab")
        cites_file = _locate(path, "cites.tab")
    else:
        node_file = path
        cites_file = _locate(path.parent, "cites.tab")

    with open(node_file) as fh:
        fh.readline()  # record count
        vocab_line = fh.readline()
        vocab = []
        for entry in vocab_line.split():
            fields = entry.split(":")
            if len(fields) == 3 and fields[0] == "numeric":
                vocab.append(fields[1])
        if not vocab:
            raise ValueError(f"{node_file}: no numeric feature vocabulary in header")
        col = {w: i for i, w in enumerate(vocab)}
        ids: list[str] = []
        raw_labels: list[str] = []
        rows: list[np.ndarray] = []
        for lineno, line in enumerate(fh, start=3):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2 or not parts[1].startswith("label="):
                raise ValueError(f"{node_file}:{lineno}: expected 'id label=k ...'")
            ids.append(parts[0])
            raw_labels.append(parts[1].split("=", 1)[1])
            vec = np.zeros(len(vocab), dtype=np.float64)
            for token in parts[2:]:
                key, _, value = token.partition("=")
                if key in col:
                    vec[col[key]] = float(value)
            rows.append(vec)
    if not ids:
        raise ValueError(f"{node_file}: no data lines")
    id_map = {pid: idx for idx, pid in enumerate(ids)}
    features = np.stack(rows)
    class_names = sorted(set(raw_labels))
    class_index = {c: i for i, c in enumerate(class_names)}
    labels = np.asarray([class_index[l] for l in raw_labels], dtype=np.int64)

    edges: set[tuple[int, int]] = set()
    dropped = 0
    with open(cites_file) as fh:
        fh.readline()
        fh.readline()
        for lineno, line in enumerate(fh, start=3):
            parts = line.split()
            if not parts:
                continue
            refs = [p.split(":", 1)[1] for p in parts if p.startswith("paper:")]
            if len(refs) != 2:
                raise ValueError(f"{cites_file}:{lineno}: expected two paper refs")
            a, b = refs
            if a not in id_map or b not in id_map or a == b:
                dropped += 1
                continue
            i, j = id_map[a], id_map[b]
            pair = (min(i, j), max(i, j))
            if pair in edges:
                dropped += 1
                continue
            edges.add(pair)

    graph = FeaturedGraph(
        adjacency=SparseAdjacency.from_edges(len(ids), sorted(edges)),
        features=features,
        labels=labels,
    )
    return CitationDataset(graph=graph, class_names=class_names, id_map=id_map, dropped_citations=dropped)


def _locate(directory: Path, suffix: str) -> Path:
    matches = sorted(p for p in directory.iterdir() if p.name.endswith(suffix))
    if not matches:
        raise FileNotFoundError(f"no *{suffix} file in {directory}")
    return matches[0]


def default_feature_head(features: np.ndarray) -> str:
    """Binary features -> bernoulli, anything else -> gaussian.

    One-hot rows (each summing to 1) keep the multinomial head; callers
    generating synthetic colors pass that explicitly.
    """
    vals = np.unique(features)
    if np.all(np.isin(vals, (0.0, 1.0))):
        return "bernoulli"
    return "gaussian"
