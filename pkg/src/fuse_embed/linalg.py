"""Dense/sparse matrix kernels shared by the objective and the engine.

Embeddings are plain ``(n, k)`` float64 arrays.  The sparse-times-dense
product is delegated to scipy's CSR kernel; orthonormalization uses the
reduced QR factorization with a fixed sign convention so repeated calls are
bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph

# Columns whose R diagonal falls below this are considered numerically
# dependent and abort the factorization.
RANK_TOL = 1e-12


class RankDeficiencyError(ValueError):
    """Raised when an embedding update produces linearly dependent columns."""

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"rank deficiency in embedding column {column}")


def spmm(g: Graph, s: np.ndarray) -> np.ndarray:
    """Adjacency-times-dense product ``A @ s`` as a dense (n, k) array."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != g.n:
        raise ValueError(f"embedding shape {s.shape} incompatible with n={g.n}")
    return np.asarray(g.adjacency() @ s)


def rank_one_update(d: np.ndarray, rowsum: np.ndarray, scale: float) -> np.ndarray:
    """Scaled outer product ``scale * d rowsum^T`` without forming n x n terms twice."""
    d = np.asarray(d, dtype=np.float64)
    rowsum = np.asarray(rowsum, dtype=np.float64)
    if d.ndim != 1 or rowsum.ndim != 1:
        raise ValueError("rank_one_update expects two vectors")
    return scale * np.outer(d, rowsum)


def thin_qr_orthonormalize(s: np.ndarray) -> np.ndarray:
    """Reduced-QR orthonormalization of the columns of ``s``.

    Returns Q from ``s = Q R`` with the sign convention ``diag(R) > 0`` so
    the result is unique and deterministic.  A diagonal entry of R with
    magnitude below ``RANK_TOL`` means the corresponding column is (near)
    linearly dependent on its predecessors; that is reported as a
    :class:`RankDeficiencyError` naming the column rather than silently
    returning junk directions.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("expected a 2-d array")
    n, k = s.shape
    if n < k:
        raise ValueError(f"need at least as many rows as columns, got {s.shape}")
    q, r = np.linalg.qr(s, mode="reduced")
    diag = np.diagonal(r)
    small = np.abs(diag) < RANK_TOL
    if np.any(small):
        raise RankDeficiencyError(int(np.flatnonzero(small)[0]))
    signs = np.where(diag < 0.0, -1.0, 1.0)
    return q * signs
