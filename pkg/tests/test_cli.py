"""Command-line interface: file formats, exit codes, determinism."""

from __future__ import annotations

import numpy as np
import pytest

from fuse_embed.cli import (
    main,
    read_embedding,
    read_embedding_binary,
    read_embedding_tsv,
    write_embedding_binary,
    write_embedding_tsv,
)


@pytest.fixture
def sbm_files(tmp_path):
    """Easy two-block dataset written through the CLI itself."""
    edges = tmp_path / "edges.txt"
    labels = tmp_path / "labels.csv"
    rc = main(
        [
            "gen-sbm", "--sizes", "5,5", "--p-in", "1.0", "--p-out", "0.0",
            "--seed", "0", "--out-edges", str(edges), "--out-labels", str(labels),
        ]
    )
    assert rc == 0
    return edges, labels


def drop_last_column(text: str) -> str:
    """CSV body without the trailing wall-clock column."""
    return "\n".join(",".join(line.split(",")[:-1]) for line in text.splitlines())


class TestEmbeddingFormats:
    def test_tsv_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        s = rng.standard_normal((7, 3))
        p = tmp_path / "emb.tsv"
        write_embedding_tsv(s, p)
        assert np.array_equal(read_embedding_tsv(p), s)  # 17 digits round-trip float64

    def test_binary_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        s = rng.standard_normal((5, 4))
        p = tmp_path / "emb.bin"
        write_embedding_binary(s, p)
        assert np.array_equal(read_embedding_binary(p), s)
        assert p.read_bytes()[:4] == b"FUSE"

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            read_embedding_binary(p)

    def test_truncated_binary_rejected(self, tmp_path):
        s = np.ones((3, 2))
        p = tmp_path / "emb.bin"
        write_embedding_binary(s, p)
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(ValueError, match="expected"):
            read_embedding_binary(p)

    def test_read_embedding_sniffs_format(self, tmp_path):
        s = np.ones((3, 2))
        t = tmp_path / "a.tsv"
        b = tmp_path / "a.bin"
        write_embedding_tsv(s, t)
        write_embedding_binary(s, b)
        assert np.array_equal(read_embedding(t), read_embedding(b))


class TestGenSbm:
    def test_writes_loadable_dataset(self, sbm_files):
        edges, labels = sbm_files
        from fuse_embed import load_edge_list, load_labels

        g = load_edge_list(edges)
        assert g.n == 10 and g.m == 20
        ls = load_labels(labels, g.n)
        assert ls.num_classes == 2 and ls.observed.all()


class TestEmbed:
    def test_triangle_unsupervised(self, tmp_path):
        edges = tmp_path / "tri.txt"
        edges.write_text("0 1\n1 2\n0 2\n")
        out = tmp_path / "emb.tsv"
        report = tmp_path / "report.csv"
        rc = main(
            [
                "embed", "--edges", str(edges), "--out", str(out),
                "--report", str(report), "--k", "2", "--iters", "10",
                "--mode", "unsupervised_only", "--seed", "0",
            ]
        )
        assert rc == 0
        s = read_embedding_tsv(out)
        assert s.shape == (3, 2)
        assert np.abs(s.T @ s - np.eye(2)).max() <= 1e-8
        lines = report.read_text().splitlines()
        assert lines[0] == "iter,Q_mod,Q_sup,semi_residual,grad_norm,cum_seconds"
        assert len(lines) == 11

    def test_binary_output_matches_tsv(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        out = tmp_path / "emb.tsv"
        binout = tmp_path / "emb.bin"
        rc = main(
            [
                "embed", "--edges", str(edges), "--labels", str(labels),
                "--out", str(out), "--binary-out", str(binout),
                "--k", "2", "--iters", "15", "--seed", "1",
            ]
        )
        assert rc == 0
        assert np.array_equal(read_embedding_tsv(out), read_embedding_binary(binout))

    def test_id_map_written_for_sparse_ids(self, tmp_path):
        edges = tmp_path / "edges.txt"
        edges.write_text("5 9\n9 2\n")
        out = tmp_path / "emb.tsv"
        rc = main(
            ["embed", "--edges", str(edges), "--out", str(out), "--k", "1",
             "--iters", "2", "--mode", "unsupervised_only"]
        )
        assert rc == 0
        id_map = out.with_suffix(out.suffix + ".id_map.csv")
        assert id_map.read_text().splitlines() == [
            "original_id,internal_id", "5,0", "9,1", "2,2",
        ]

    def test_num_nodes_admits_isolated(self, tmp_path):
        edges = tmp_path / "edges.txt"
        edges.write_text("0 1\n")
        out = tmp_path / "emb.tsv"
        rc = main(
            ["embed", "--edges", str(edges), "--num-nodes", "3", "--out", str(out),
             "--k", "1", "--iters", "2", "--mode", "unsupervised_only"]
        )
        assert rc == 0
        assert read_embedding_tsv(out).shape == (3, 1)

    def test_missing_edge_file_exits_1(self, tmp_path, capsys):
        rc = main(
            ["embed", "--edges", str(tmp_path / "absent.txt"), "--out",
             str(tmp_path / "o.tsv"), "--k", "2"]
        )
        assert rc == 1
        assert "absent.txt" in capsys.readouterr().err

    def test_config_file_with_flag_override(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        cfg = tmp_path / "fuse.cfg"
        cfg.write_text("k = 4\nT = 5\nmode = unsupervised_only\n")
        out = tmp_path / "emb.tsv"
        rc = main(
            ["embed", "--edges", str(edges), "--config", str(cfg),
             "--out", str(out), "--k", "2"]
        )
        assert rc == 0
        assert read_embedding_tsv(out).shape == (10, 2)  # flag beats config

    def test_bad_config_exits_1(self, tmp_path, sbm_files, capsys):
        edges, _ = sbm_files
        cfg = tmp_path / "fuse.cfg"
        cfg.write_text("warp_speed = 9\n")
        rc = main(["embed", "--edges", str(edges), "--config", str(cfg),
                   "--out", str(tmp_path / "o.tsv")])
        assert rc == 1
        assert "unknown config key" in capsys.readouterr().err


class TestEval:
    def test_metrics_from_stored_embedding(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        emb = tmp_path / "emb.tsv"
        assert main(
            ["embed", "--edges", str(edges), "--labels", str(labels),
             "--out", str(emb), "--k", "2", "--iters", "30", "--seed", "0"]
        ) == 0
        metrics = tmp_path / "metrics.csv"
        rc = main(
            ["eval", "--embedding", str(emb), "--labels", str(labels),
             "--split", "0.5", "--seed", "0", "--out", str(metrics)]
        )
        assert rc == 0
        lines = metrics.read_text().splitlines()
        assert lines[0] == "run,mechanism,rate,classifier,accuracy,macro_f1,seconds"
        cells = lines[1].split(",")
        assert cells[3] == "mlp"
        assert float(cells[4]) == 1.0  # disjoint cliques are trivially separable


class TestPipeline:
    def test_rows_and_summary(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        out = tmp_path / "metrics.csv"
        rc = main(
            ["pipeline", "--edges", str(edges), "--labels", str(labels),
             "--split", "0.5", "--seeds", "0,1,2", "--out", str(out),
             "--k", "2", "--iters", "20"]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 5  # header + 3 seeds + summary
        summary = lines[-1].split(",")
        assert summary[0] == "summary"
        mean, std = summary[4].split("±")
        assert float(mean) == 1.0 and float(std) == 0.0

    def test_byte_identical_modulo_seconds(self, tmp_path, sbm_files, monkeypatch):
        monkeypatch.setenv("FUSE_THREADS", "2")
        edges, labels = sbm_files
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        for out in (a, b):
            assert main(
                ["pipeline", "--edges", str(edges), "--labels", str(labels),
                 "--split", "0.5", "--seeds", "0,1", "--out", str(out),
                 "--k", "2", "--iters", "10"]
            ) == 0
        assert drop_last_column(a.read_text()) == drop_last_column(b.read_text())


class TestAblate:
    def test_three_mode_rows(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        out = tmp_path / "ablate.csv"
        rc = main(
            ["ablate", "--edges", str(edges), "--labels", str(labels),
             "--split", "0.5", "--out", str(out), "--k", "2", "--iters", "20"]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert [l.split(",")[1] for l in lines[1:]] == [
            "both", "unsupervised_only", "semi_only",
        ]


class TestMaskStudy:
    def test_mcar_rows_and_summaries(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        out = tmp_path / "mask.csv"
        rc = main(
            ["mask-study", "--edges", str(edges), "--labels", str(labels),
             "--mechanisms", "MCAR", "--rates", "0.5", "--seeds", "0,1",
             "--out", str(out), "--k", "2", "--iters", "10"]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 4  # header + 2 seeds + summary
        assert lines[1].split(",")[1:3] == ["MCAR", "0.5"]

    def test_structural_features_enable_mar(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        out = tmp_path / "mask.csv"
        rc = main(
            ["mask-study", "--edges", str(edges), "--labels", str(labels),
             "--feature-source", "structural", "--mechanisms", "MAR",
             "--rates", "0.5", "--seeds", "0", "--out", str(out),
             "--k", "2", "--iters", "10"]
        )
        assert rc == 0

    def test_mar_without_features_usage_error(self, tmp_path, sbm_files, capsys):
        edges, labels = sbm_files
        with pytest.raises(SystemExit) as exc:
            main(
                ["mask-study", "--edges", str(edges), "--labels", str(labels),
                 "--mechanisms", "MAR", "--rates", "0.5", "--out",
                 str(tmp_path / "m.csv")]
            )
        assert exc.value.code == 2
        assert "features" in capsys.readouterr().err

    def test_bad_rate_usage_error(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        with pytest.raises(SystemExit) as exc:
            main(
                ["mask-study", "--edges", str(edges), "--labels", str(labels),
                 "--mechanisms", "MCAR", "--rates", "1.7",
                 "--out", str(tmp_path / "m.csv")]
            )
        assert exc.value.code == 2

    def test_bad_mechanism_usage_error(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        with pytest.raises(SystemExit) as exc:
            main(
                ["mask-study", "--edges", str(edges), "--labels", str(labels),
                 "--mechanisms", "SOMETIMES", "--out", str(tmp_path / "m.csv")]
            )
        assert exc.value.code == 2


class TestBench:
    def test_single_size_empty_slope(self, tmp_path):
        out = tmp_path / "bench.csv"
        rc = main(
            ["bench", "--sizes", "120", "--degree", "6", "--out", str(out),
             "--k", "8", "--iters", "3"]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "n,m,seconds_per_iter,slope"
        assert lines[1].endswith(",")  # no exponent for a single size

    def test_two_sizes_fit_slope(self, tmp_path):
        out = tmp_path / "bench.csv"
        rc = main(
            ["bench", "--sizes", "120,240", "--degree", "6", "--out", str(out),
             "--k", "8", "--iters", "3"]
        )
        assert rc == 0
        last = out.read_text().splitlines()[-1]
        float(last.split(",")[-1])  # slope parses


class TestUsageErrors:
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["destroy-graph"])
        assert exc.value.code == 2

    def test_missing_required_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["embed", "--out", "x.tsv"])
        assert exc.value.code == 2

    def test_bad_split_value(self, tmp_path, sbm_files):
        edges, labels = sbm_files
        with pytest.raises(SystemExit) as exc:
            main(
                ["pipeline", "--edges", str(edges), "--labels", str(labels),
                 "--split", "1.5", "--out", str(tmp_path / "m.csv")]
            )
        assert exc.value.code == 2
