"""Sparse product and QR orthonormalization kernels."""

from __future__ import annotations

import numpy as np
import pytest

from fuse_embed import Graph, RankDeficiencyError, rank_one_update, spmm, thin_qr_orthonormalize

from conftest import dense_adjacency, random_graph


class TestSpmm:
    def test_triangle_ones(self, triangle):
        out = spmm(triangle, np.ones((3, 2)))
        assert np.array_equal(out, np.full((3, 2), 2.0))

    def test_path(self, path3):
        out = spmm(path3, np.array([[1.0], [0.0], [2.0]]))
        assert np.array_equal(out, np.array([[0.0], [3.0], [0.0]]))

    def test_no_edges_gives_zeros(self):
        g = Graph.from_edges(3, [])
        assert np.array_equal(spmm(g, np.ones((3, 2))), np.zeros((3, 2)))

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(2, 50))
            g = random_graph(rng, n, 0.25)
            s = rng.standard_normal((n, int(rng.integers(1, 6))))
            assert np.abs(spmm(g, s) - dense_adjacency(g) @ s).max() <= 1e-12

    def test_shape_mismatch(self, triangle):
        with pytest.raises(ValueError, match="incompatible"):
            spmm(triangle, np.ones((4, 2)))


class TestRankOneUpdate:
    def test_example(self):
        out = rank_one_update(np.array([1.0, 2.0]), np.array([3.0, 4.0]), 0.5)
        assert np.array_equal(out, np.array([[1.5, 2.0], [3.0, 4.0]]))

    def test_zero_scale(self):
        out = rank_one_update(np.ones(3), np.ones(2), 0.0)
        assert np.array_equal(out, np.zeros((3, 2)))

    def test_rejects_matrices(self):
        with pytest.raises(ValueError, match="vectors"):
            rank_one_update(np.ones((2, 2)), np.ones(2), 1.0)


class TestThinQr:
    def test_single_column_normalized(self):
        q = thin_qr_orthonormalize(np.array([[3.0], [4.0]]))
        assert np.allclose(q, [[0.6], [0.8]], atol=1e-15)

    def test_columns_orthonormal(self):
        rng = np.random.default_rng(3)
        s = rng.standard_normal((40, 7))
        q = thin_qr_orthonormalize(s)
        assert np.abs(q.T @ q - np.eye(7)).max() <= 1e-10

    def test_factorization_residual(self):
        rng = np.random.default_rng(4)
        s = rng.standard_normal((30, 5))
        q = thin_qr_orthonormalize(s)
        r = q.T @ s
        assert np.abs(q @ r - s).max() <= 1e-9
        assert np.abs(np.tril(r, k=-1)).max() <= 1e-9
        assert (np.diagonal(r) > 0).all()

    def test_span_preserved(self):
        rng = np.random.default_rng(5)
        s = rng.standard_normal((25, 4))
        q = thin_qr_orthonormalize(s)
        proj = q @ (q.T @ s)
        assert np.abs(proj - s).max() <= 1e-9

    def test_idempotent_on_orthonormal_input(self):
        rng = np.random.default_rng(6)
        q = thin_qr_orthonormalize(rng.standard_normal((20, 6)))
        assert np.abs(thin_qr_orthonormalize(q) - q).max() <= 1e-12

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        s = rng.standard_normal((15, 3))
        assert np.array_equal(thin_qr_orthonormalize(s), thin_qr_orthonormalize(s.copy()))

    def test_sign_convention_fixed(self):
        # a matrix whose raw QR would produce a negative diagonal entry
        s = np.array([[-2.0, 0.0], [0.0, 3.0], [0.0, 0.0]])
        q = thin_qr_orthonormalize(s)
        assert np.allclose(q, [[-1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])

    def test_rank_deficiency_names_column(self):
        s = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(RankDeficiencyError, match="column 1"):
            thin_qr_orthonormalize(s)

    def test_more_columns_than_rows_rejected(self):
        with pytest.raises(ValueError, match="rows"):
            thin_qr_orthonormalize(np.ones((2, 3)))
