"""Undirected graph container and dataset I/O.

Graphs are stored in compressed sparse row form over ``int64`` index arrays.
All loaders normalize their input to a simple undirected graph: edges are
symmetrized, duplicates removed, self-loops dropped.  Node ids in input files
need not be contiguous; the loader compacts them to ``0..n-1`` in first-seen
order and can report the mapping.  Isolated nodes cannot be expressed by an
edge list alone, so loaders accept an explicit node count that fixes the id
universe (ids are then taken as-is, no compaction).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

# Node ids are bounded well below int64 so CSR keys (u * n + v) cannot wrap.
_MAX_NODE_ID = 2**31 - 1


@dataclass(eq=False)
class Graph:
    """Simple undirected graph in CSR form.

    Attributes
    ----------
    n : int
        Number of nodes; ids are ``0..n-1``.
    row_offsets : np.ndarray
        ``int64`` array of length ``n + 1``; neighbors of node ``i`` live in
        ``col_indices[row_offsets[i]:row_offsets[i+1]]``.
    col_indices : np.ndarray
        ``int64`` array of length ``2 * m``; sorted and duplicate-free within
        each row, never equal to the row's own id.
    degrees : np.ndarray
        ``int64`` array of length ``n``; ``degrees[i]`` equals the length of
        row ``i``.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    degrees: np.ndarray
    _adj: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        """Number of undirected edges."""
        return self.col_indices.shape[0] // 2

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build a graph from an iterable of (u, v) pairs.

        Pairs are symmetrized and deduplicated; self-loops are dropped.
        Endpoints must lie in ``0..n-1``.
        """
        if n <= 0:
            raise ValueError("graph must have at least one node")
        arr = np.asarray(list(edges), dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("edges must be (u, v) pairs")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError("edge endpoint outside 0..n-1")
        arr = arr[arr[:, 0] != arr[:, 1]]
        both = np.concatenate([arr, arr[:, ::-1]], axis=0)
        keys = np.unique(both[:, 0] * np.int64(n) + both[:, 1])
        rows = keys // n
        cols = keys % n
        degrees = np.bincount(rows, minlength=n).astype(np.int64)
        row_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(degrees, out=row_offsets[1:])
        return cls(n=n, row_offsets=row_offsets, col_indices=cols, degrees=degrees)

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted neighbor ids of node ``i`` (a view, do not mutate)."""
        return self.col_indices[self.row_offsets[i] : self.row_offsets[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        row = self.neighbors(i)
        pos = np.searchsorted(row, j)
        return pos < row.shape[0] and row[pos] == j

    def adjacency(self) -> sp.csr_matrix:
        """Adjacency matrix as a scipy CSR with float64 unit weights (cached)."""
        if self._adj is None:
            data = np.ones(self.col_indices.shape[0], dtype=np.float64)
            self._adj = sp.csr_matrix(
                (data, self.col_indices.copy(), self.row_offsets.copy()),
                shape=(self.n, self.n),
            )
        return self._adj

    def validate(self) -> None:
        """Check structural invariants; raises ValueError on violation."""
        if self.n <= 0:
            raise ValueError("graph must have at least one node")
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (self.n + 1,) or ro[0] != 0 or ro[-1] != ci.shape[0]:
            raise ValueError("row_offsets malformed")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets not monotone")
        if not np.array_equal(self.degrees, np.diff(ro)):
            raise ValueError("degrees disagree with row lengths")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n):
            raise ValueError("column index out of range")
        for i in range(self.n):
            row = ci[ro[i] : ro[i + 1]]
            if np.any(np.diff(row) <= 0):
                raise ValueError(f"row {i} not sorted/deduplicated")
            if np.any(row == i):
                raise ValueError(f"self-loop at node {i}")
        # symmetry: every (i, j) must appear as (j, i)
        a = self.adjacency()
        if (a != a.T).nnz != 0:
            raise ValueError("adjacency not symmetric")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Graph)
            and self.n == other.n
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )


@dataclass(eq=False)
class LabelSet:
    """Node class labels with an explicit observation mask.

    ``observed[i]`` is the single source of truth for whether node ``i``'s
    label is visible to a consumer; ``labels[i]`` is meaningful only where
    observed (unassigned entries hold ``-1``, but class id ``0`` remains a
    perfectly ordinary label).
    """

    labels: np.ndarray
    observed: np.ndarray
    num_classes: int

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def observed_nodes(self) -> np.ndarray:
        """Ids of nodes whose label is visible, ascending."""
        return np.flatnonzero(self.observed)

    def validate(self) -> None:
        if self.labels.shape != self.observed.shape:
            raise ValueError("labels/observed length mismatch")
        if self.num_classes < 0:
            raise ValueError("num_classes must be >= 0")
        vis = self.labels[self.observed]
        if vis.size and (vis.min() < 0 or vis.max() >= self.num_classes):
            raise ValueError("observed label outside 0..num_classes-1")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LabelSet)
            and self.num_classes == other.num_classes
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.observed, other.observed)
        )


# ---------------------------------------------------------------------------
# edge-list and label file I/O
# ---------------------------------------------------------------------------


def _parse_edge_line(text: str, sep: str | None, lineno: int) -> tuple[int, int]:
    parts = text.split(sep) if sep else text.split()
    if len(parts) != 2:
        raise ValueError(f"line {lineno}: expected two node ids, got {len(parts)} fields")
    try:
        u, v = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"line {lineno}: non-integer node id") from None
    if u < 0 or v < 0:
        raise ValueError(f"line {lineno}: negative node id")
    if u > _MAX_NODE_ID or v > _MAX_NODE_ID:
        raise ValueError(f"line {lineno}: node id overflow (max {_MAX_NODE_ID})")
    return u, v


def load_edge_list(
    path: str | Path,
    fmt: str = "auto",
    num_nodes: int | None = None,
    with_id_map: bool = False,
):
    """Read an undirected graph from a text edge list.

    One edge per line, two integer endpoints separated by whitespace or a
    comma; lines beginning with ``#`` and blank lines are ignored.  The
    result is symmetrized and deduplicated with self-loops dropped.

    Parameters
    ----------
    path : path-like
        File to read.
    fmt : {"auto", "tsv", "csv"}
        ``csv`` splits on commas, ``tsv`` on whitespace; ``auto`` decides per
        line by the presence of a comma.
    num_nodes : int, optional
        When given, ids are taken verbatim as ``0..num_nodes-1`` (no
        compaction), which admits isolated nodes that appear in no edge.
    with_id_map : bool
        When true, also return ``orig_ids`` where ``orig_ids[internal]`` is
        the id that appeared in the file.

    Returns
    -------
    Graph, or (Graph, np.ndarray) when ``with_id_map`` is set.
    """
    if fmt not in ("auto", "tsv", "csv"):
        raise ValueError(f"unknown edge list format: {fmt!r}")
    path = Path(path)
    raw: list[tuple[int, int]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if fmt == "csv" or (fmt == "auto" and "," in text):
                u, v = _parse_edge_line(text.replace(",", " "), None, lineno)
            else:
                u, v = _parse_edge_line(text, None, lineno)
            raw.append((u, v))
    if not raw:
        raise ValueError(f"empty graph: no edges in {path}")

    if num_nodes is not None:
        if num_nodes <= 0:
            raise ValueError("num_nodes must be positive")
        hi = max(max(u, v) for u, v in raw)
        if hi >= num_nodes:
            raise ValueError(f"node id {hi} outside declared range 0..{num_nodes - 1}")
        g = Graph.from_edges(num_nodes, raw)
        orig = np.arange(num_nodes, dtype=np.int64)
    else:
        remap: dict[int, int] = {}
        compact = []
        for u, v in raw:
            iu = remap.setdefault(u, len(remap))
            iv = remap.setdefault(v, len(remap))
            compact.append((iu, iv))
        g = Graph.from_edges(len(remap), compact)
        orig = np.empty(len(remap), dtype=np.int64)
        for orig_id, internal in remap.items():
            orig[internal] = orig_id
    if with_id_map:
        return g, orig
    return g


def write_edge_list(g: Graph, path: str | Path) -> None:
    """Write one undirected edge per line as ``u<TAB>v`` with ``u < v``."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for i in range(g.n):
            for j in g.neighbors(i):
                if i < j:
                    fh.write(f"{i}\t{j}\n")


def load_labels(path: str | Path, n: int, id_map: dict[int, int] | None = None) -> LabelSet:
    """Read a ``node_id,class_id`` CSV into a LabelSet over ``n`` nodes.

    Lines beginning with ``#`` and blank lines are ignored.  Nodes absent
    from the file are unobserved.  ``num_classes`` is one more than the
    largest class id seen (0 for an empty file).

    Parameters
    ----------
    id_map : dict, optional
        Translation from file node ids to internal ids, as produced by
        ``load_edge_list`` compaction.  Ids missing from the map are an
        error.
    """
    path = Path(path)
    labels = np.full(n, -1, dtype=np.int64)
    observed = np.zeros(n, dtype=bool)
    max_class = -1
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = [p.strip() for p in text.replace(",", " ").split()]
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected node_id,class_id")
            try:
                node, cls = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"line {lineno}: non-integer field") from None
            if cls < 0:
                raise ValueError(f"line {lineno}: negative class id")
            if id_map is not None:
                if node not in id_map:
                    raise ValueError(f"line {lineno}: node id {node} not present in graph")
                node = id_map[node]
            if node < 0 or node >= n:
                raise ValueError(f"line {lineno}: node id {node} outside 0..{n - 1}")
            labels[node] = cls
            observed[node] = True
            max_class = max(max_class, cls)
    return LabelSet(labels=labels, observed=observed, num_classes=max_class + 1)


def mask_labels(ls: LabelSet, keep: np.ndarray) -> LabelSet:
    """Return a copy of ``ls`` with observation restricted to ``keep``.

    Ground-truth label values are retained so evaluation against held-out
    nodes stays possible; only visibility changes.
    """
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (ls.n,):
        raise ValueError(f"keep mask length {keep.shape} != n {ls.n}")
    return LabelSet(
        labels=ls.labels.copy(),
        observed=ls.observed & keep,
        num_classes=ls.num_classes,
    )


# ---------------------------------------------------------------------------
# stochastic block model
# ---------------------------------------------------------------------------


def _sample_pair_indices(rng: np.random.Generator, n_pairs: int, p: float) -> np.ndarray:
    """Indices of Bernoulli(p) successes over ``0..n_pairs-1`` via skip sampling."""
    if n_pairs == 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_pairs, dtype=np.int64)
    out = []
    cur = -1
    chunk = max(256, int(n_pairs * p * 1.2) + 16)
    while cur < n_pairs - 1:
        skips = rng.geometric(p, size=chunk).astype(np.int64)
        pos = cur + np.cumsum(skips)
        out.append(pos[pos < n_pairs])
        cur = int(pos[-1])
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def generate_sbm(
    sizes: list[int], p_in: float, p_out: float, seed: int
) -> tuple[Graph, LabelSet]:
    """Sample a stochastic block model graph with block ids as labels.

    Each within-block pair is an edge with probability ``p_in``, each
    cross-block pair with probability ``p_out``.  All labels are observed.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError("block sizes must be positive")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    n = int(starts[-1])

    edges_u: list[np.ndarray] = []
    edges_v: list[np.ndarray] = []
    for a in range(len(sizes)):
        sa = sizes[a]
        # within-block pairs i < j, unranked via the exact pair-count table
        t = _sample_pair_indices(rng, sa * (sa - 1) // 2, p_in)
        if t.size:
            first_counts = np.arange(sa, dtype=np.int64)
            pair_base = np.concatenate(
                [[0], np.cumsum((sa - 1) - first_counts[:-1])]
            )  # pair_base[i] = #pairs with smaller endpoint < i
            i = np.searchsorted(pair_base, t, side="right") - 1
            j = i + 1 + (t - pair_base[i])
            edges_u.append(starts[a] + i)
            edges_v.append(starts[a] + j)
        for b in range(a + 1, len(sizes)):
            sb = sizes[b]
            t = _sample_pair_indices(rng, sa * sb, p_out)
            if t.size:
                edges_u.append(starts[a] + t // sb)
                edges_v.append(starts[b] + t % sb)

    if edges_u:
        pairs = np.stack(
            [np.concatenate(edges_u), np.concatenate(edges_v)], axis=1
        )
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    g = Graph.from_edges(n, pairs)

    labels = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
    ls = LabelSet(labels=labels, observed=np.ones(n, dtype=bool), num_classes=len(sizes))
    return g, ls
