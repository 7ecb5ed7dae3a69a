"""Graph containers and the self-loop-normalized adjacency operator.

Everything downstream (encoder, losses, generators, evaluation) works on
these two containers: an undirected binary adjacency stored as a canonical
edge list, and its normalization D^{-1/2} (A + I) D^{-1/2} stored in CSR
form. All floating point is 64-bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class SparseAdjacency:
    """Undirected, unweighted adjacency with no self-loops.

    Each edge is stored exactly once with i < j; every operation reads it
    in both orientations. ``edges`` is an (E, 2) int64 array sorted
    lexicographically, which makes iteration order (and therefore every
    seeded computation built on it) reproducible.
    """

    n: int
    edges: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one node, got n={self.n}")
        if self.edges.ndim != 2 or self.edges.shape[1] != 2:
            raise ValueError(f"edges must be (E, 2), got {self.edges.shape}")

    @classmethod
    def from_edges(cls, n: int, pairs: Iterable[tuple[int, int]] | np.ndarray) -> "SparseAdjacency":
        """Build from arbitrary (i, j) pairs: canonicalize, dedupe, sort."""
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
        if arr.size == 0:
            arr = np.empty((0, 2), dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("edge pairs must have shape (E, 2)")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError(f"edge endpoint out of range for n={n}")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise ValueError("self-loops are not allowed")
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        canon = np.unique(np.stack([lo, hi], axis=1), axis=0) if arr.size else arr
        canon.setflags(write=False)
        return cls(n=n, edges=canon)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        """Degree of every node (self-loops absent by construction)."""
        deg = np.zeros(self.n, dtype=np.int64)
        if self.num_edges:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def edge_set(self) -> set[tuple[int, int]]:
        """Set of canonical (i, j), i < j tuples for membership queries."""
        return {(int(i), int(j)) for i, j in self.edges}

    def to_dense(self) -> np.ndarray:
        """Dense 0/1 float64 matrix with zero diagonal. Quadratic memory."""
        a = np.zeros((self.n, self.n), dtype=np.float64)
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def to_csr(self) -> sp.csr_matrix:
        """CSR with both orientations, sorted column indices."""
        if self.num_edges:
            rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            data = np.ones(rows.shape[0], dtype=np.float64)
        else:
            rows = cols = np.empty(0, dtype=np.int64)
            data = np.empty(0, dtype=np.float64)
        m = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        m.sort_indices()
        return m


@dataclass(frozen=True)
class NormalizedAdjacency:
    """D^{-1/2} (A + I) D^{-1/2}, sparse, with the pattern of A + I."""

    n: int
    matrix: sp.csr_matrix

    def to_dense(self) -> np.ndarray:
        return np.asarray(self.matrix.todense(), dtype=np.float64)


def normalize_adjacency(a: SparseAdjacency) -> NormalizedAdjacency:
    """Normalize with added self-connections.

    With A~ = A + I and D~ the diagonal of A~'s row sums, returns
    D~^{-1/2} A~ D~^{-1/2}. Every node gets a self-loop, so D~_ii >= 1 and
    no division by zero can occur; all stored entries lie in (0, 1].
    """
    deg_tilde = a.degrees().astype(np.float64) + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg_tilde)
    diag_idx = np.arange(a.n, dtype=np.int64)
    if a.num_edges:
        rows = np.concatenate([a.edges[:, 0], a.edges[:, 1], diag_idx])
        cols = np.concatenate([a.edges[:, 1], a.edges[:, 0], diag_idx])
    else:
        rows = cols = diag_idx
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    m = sp.csr_matrix((vals, (rows, cols)), shape=(a.n, a.n))
    m.sort_indices()
    return NormalizedAdjacency(n=a.n, matrix=m)


def density(a: SparseAdjacency) -> float:
    """Edge density over all N^2 ordered pairs, counting both orientations."""
    return 2.0 * a.num_edges / float(a.n) ** 2


def spmm(s: NormalizedAdjacency, m: np.ndarray) -> np.ndarray:
    """Sparse-dense product s @ m with an explicit shape check."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != s.n:
        raise ValueError(f"shape mismatch: adjacency is {s.n}x{s.n}, dense operand is {m.shape}")
    return s.matrix @ m


def write_edge_list(path: str | Path, a: SparseAdjacency) -> None:
    """Text edge list: '# nodes N' header, then one 'i j' pair per line."""
    with open(path, "w") as fh:
        fh.write(f"# nodes {a.n}\n")
        for i, j in a.edges:
            fh.write(f"{i} {j}\n")


def read_edge_list(path: str | Path, n: int | None = None) -> SparseAdjacency:
    """Read a whitespace-separated edge list; '#' lines are comments.

    Node count comes from an explicit ``n``, a '# nodes N' comment, or
    (last resort) max node id + 1.
    """
    pairs: list[tuple[int, int]] = []
    file_n = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                tokens = line[1:].split()
                if len(tokens) == 2 and tokens[0] == "nodes":
                    file_n = int(tokens[1])
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    if n is None:
        n = file_n
    if n is None:
        n = max((max(i, j) for i, j in pairs), default=-1) + 1
    if n < 1:
        raise ValueError(f"cannot infer node count from {path}")
    return SparseAdjacency.from_edges(n, pairs)
