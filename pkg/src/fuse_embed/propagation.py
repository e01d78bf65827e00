"""Labeled random walks and attention-weighted label propagation.

Each unlabeled node launches ``r`` walks of length ``L``.  A walk records
the labeled nodes it passes, but at most ``cap`` of them per walk; after the
cap is reached the walk keeps moving without recording.  Visit counts are
aggregated per source into a :class:`WalkRecord`.

Attention turns a source's recorded labeled nodes into a convex combination:
weights are softmax-normalized embedding dot products, with each term
multiplied by its visit count so repeat visits fold into the same support
entry instead of duplicating it.  The semi-supervised gradient pulls every
source row toward its attention-weighted combination of labeled rows.

Walks draw from an independent generator per source node, seeded by
``(seed, node)``, so results do not depend on traversal order and any
subset of sources can be regenerated in isolation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph, LabelSet


@dataclass
class WalkRecord:
    """Aggregated labeled-visit counts, one dict per source node.

    ``counts[i]`` maps labeled node id -> number of recorded visits across
    all walks started at ``i``; empty for labeled sources and for sources
    whose walks never met a labeled node.  ``per_walk`` (trace mode only)
    holds the number of recorded visits of every individual walk.
    """

    n: int
    r: int
    L: int
    cap: int
    counts: list[dict[int, int]]
    per_walk: list[list[int]] | None = field(default=None, repr=False)

    def total_recorded(self, i: int) -> int:
        return sum(self.counts[i].values())

    def validate(self) -> None:
        if len(self.counts) != self.n:
            raise ValueError("counts length != n")
        bound = self.r * min(self.L, self.cap)
        for i, c in enumerate(self.counts):
            if sum(c.values()) > bound:
                raise ValueError(f"source {i} recorded more visits than r*min(L, cap)")


def labeled_random_walks(
    g: Graph,
    ls: LabelSet,
    r: int,
    L: int,
    cap: int,
    seed: int,
    beta: float = 1.0,
    trace: bool = False,
) -> WalkRecord:
    """Run ``r`` uniform random walks of length ``L`` from every unlabeled node.

    Parameters
    ----------
    cap : int
        Maximum labeled visits recorded per walk; the walk itself always
        runs for ``L`` steps (or until it hits a node with no neighbors).
    beta : float
        Selection weight multiplier (>= 1) for labeled neighbors; 1 gives
        the plain uniform walk.
    trace : bool
        Also record per-walk visit totals (testing hook).
    """
    if r < 1 or L < 1 or cap < 1:
        raise ValueError("r, L and cap must all be >= 1")
    if beta < 1.0:
        raise ValueError("labeled-neighbor bias beta must be >= 1")
    if ls.n != g.n:
        raise ValueError("label set and graph disagree on n")

    observed = ls.observed
    offsets = g.row_offsets
    cols = g.col_indices
    degs = g.degrees
    counts: list[dict[int, int]] = [dict() for _ in range(g.n)]
    per_walk: list[list[int]] | None = [[] for _ in range(g.n)] if trace else None

    for src in range(g.n):
        if observed[src]:
            continue
        rng = np.random.default_rng([seed, src])
        draws = rng.random((r, L))
        acc = counts[src]
        for w in range(r):
            cur = src
            recorded = 0
            for step in range(L):
                deg = degs[cur]
                if deg == 0:
                    break
                lo = offsets[cur]
                if beta == 1.0:
                    cur = cols[lo + int(draws[w, step] * deg)]
                else:
                    nbrs = cols[lo : lo + deg]
                    wts = np.where(observed[nbrs], beta, 1.0)
                    cum = np.cumsum(wts)
                    cur = nbrs[np.searchsorted(cum, draws[w, step] * cum[-1], side="right")]
                if recorded < cap and observed[cur]:
                    key = int(cur)
                    acc[key] = acc.get(key, 0) + 1
                    recorded += 1
            if per_walk is not None:
                per_walk[src].append(recorded)

    return WalkRecord(n=g.n, r=r, L=L, cap=cap, counts=counts, per_walk=per_walk)


def write_walk_record(w: WalkRecord, path: str | Path) -> None:
    """Dump visit counts as ``source,visited,count`` CSV rows (sorted)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["source", "visited", "count"])
        for src in range(w.n):
            for visited in sorted(w.counts[src]):
                out.writerow([src, visited, w.counts[src][visited]])


@dataclass
class AttentionTable:
    """Sparse row-stochastic attention weights over recorded labeled nodes.

    Stored CSR-style restricted to active rows: ``sources[p]`` is the node
    whose weights live in ``cols/weights[indptr[p]:indptr[p+1]]``.  Every
    stored row sums to 1.
    """

    n: int
    sources: np.ndarray
    indptr: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    _mat: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    @property
    def is_empty(self) -> bool:
        return self.sources.size == 0

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(support ids, weights) of node ``i``; empty arrays if inactive."""
        pos = np.searchsorted(self.sources, i)
        if pos < self.sources.size and self.sources[pos] == i:
            lo, hi = self.indptr[pos], self.indptr[pos + 1]
            return self.cols[lo:hi], self.weights[lo:hi]
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)

    def matrix(self) -> sp.csr_matrix:
        """Full (n, n) CSR with zero rows for inactive nodes (cached)."""
        if self._mat is None:
            indptr_full = np.zeros(self.n + 1, dtype=np.int64)
            lengths = np.diff(self.indptr)
            indptr_full[self.sources + 1] = lengths
            np.cumsum(indptr_full, out=indptr_full)
            self._mat = sp.csr_matrix(
                (self.weights.copy(), self.cols.copy(), indptr_full),
                shape=(self.n, self.n),
            )
        return self._mat

    def validate(self) -> None:
        if self.sources.size + 1 != self.indptr.size:
            raise ValueError("indptr length mismatch")
        for p in range(self.sources.size):
            w = self.weights[self.indptr[p] : self.indptr[p + 1]]
            if w.size == 0:
                raise ValueError(f"active row {self.sources[p]} has empty support")
            if np.any(w <= 0.0) or np.any(w > 1.0):
                raise ValueError("attention weights must lie in (0, 1]")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"attention row {self.sources[p]} does not sum to 1")


def compute_attention(s: np.ndarray, w: WalkRecord, ls: LabelSet) -> AttentionTable:
    """Softmax attention over each source's recorded labeled nodes.

    For source ``i`` with recorded nodes ``j`` the weight is proportional to
    ``count_ij * exp(s_i . s_j)``; the shared maximum dot product is
    subtracted before exponentiation so large similarities cannot overflow.
    Labeled sources and sources with empty records get no row.
    """
    s = np.asarray(s, dtype=np.float64)
    if ls.n != w.n or s.shape[0] != w.n:
        raise ValueError("embedding, walk record and labels disagree on n")

    sources: list[int] = []
    indptr = [0]
    all_cols: list[np.ndarray] = []
    all_wts: list[np.ndarray] = []
    for i in range(w.n):
        if ls.observed[i] or not w.counts[i]:
            continue
        cols = np.fromiter(sorted(w.counts[i]), dtype=np.int64)
        cnt = np.array([w.counts[i][int(j)] for j in cols], dtype=np.float64)
        sims = s[cols] @ s[i]
        terms = cnt * np.exp(sims - sims.max())
        sources.append(i)
        all_cols.append(cols)
        all_wts.append(terms / terms.sum())
        indptr.append(indptr[-1] + cols.size)

    if not sources:
        return AttentionTable(
            n=w.n,
            sources=np.empty(0, dtype=np.int64),
            indptr=np.zeros(1, dtype=np.int64),
            cols=np.empty(0, dtype=np.int64),
            weights=np.empty(0, dtype=np.float64),
        )
    return AttentionTable(
        n=w.n,
        sources=np.asarray(sources, dtype=np.int64),
        indptr=np.asarray(indptr, dtype=np.int64),
        cols=np.concatenate(all_cols),
        weights=np.concatenate(all_wts),
    )


def grad_semi(s: np.ndarray, att: AttentionTable) -> np.ndarray:
    """Pull active rows toward their attention combination: ``s_i - sum_j w_ij s_j``.

    Inactive rows (labeled nodes, sources with no recorded visits) are zero,
    so an empty table yields an all-zero gradient.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.shape[0] != att.n:
        raise ValueError(f"embedding has {s.shape[0]} rows, attention table {att.n}")
    out = np.zeros_like(s)
    if att.is_empty:
        return out
    mixed = att.matrix() @ s
    act = att.sources
    out[act] = s[act] - mixed[act]
    return out


def semi_residual(s: np.ndarray, att: AttentionTable) -> float:
    """Squared distance of active rows from their attention combinations."""
    if att.is_empty:
        return 0.0
    gr = grad_semi(s, att)
    act = att.sources
    return float(np.einsum("ij,ij->", gr[act], gr[act]))
