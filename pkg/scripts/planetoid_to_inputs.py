"""Convert a Planetoid-style citation dataset into this package's input files.

The Planetoid distribution of the citation benchmarks ships eight pickled
files per dataset (``ind.<name>.x / y / tx / ty / allx / ally / graph /
test.index``).  This script reassembles them into the three plain files the
CLI consumes:

* ``edges.txt``     -- one undirected edge per line (``u<TAB>v``, ``u < v``),
                       self-loops dropped, duplicates removed
* ``labels.csv``    -- ``node_id,class_id`` rows for every node whose one-hot
                       label row is populated (a handful of test nodes in
                       CiteSeer have none and are simply omitted)
* ``features.npz``  -- scipy CSR matrix of bag-of-words features, rows are
                       node ids; test rows are restored to their original
                       positions, gap rows left as zeros

Node ids in the pickles are already contiguous ``0..n-1``; they are written
out unchanged.  Isolated nodes therefore keep their ids even though they
never appear in ``edges.txt`` -- pass the node count explicitly when loading
such a graph.

Usage:
    python scripts/planetoid_to_inputs.py --src DIR --name cora --out data/cora
"""

from __future__ import annotations

import argparse
import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def _load_pickle(path: Path):
    # the upstream pickles were written by python 2
    with path.open("rb") as fh:
        return pickle.load(fh, encoding="latin1")


def load_planetoid(src: Path, name: str):
    """Return (graph_dict, features_csr, onehot_labels) with test rows restored."""
    allx = _load_pickle(src / f"ind.{name}.allx").tocsr()
    ally = np.asarray(_load_pickle(src / f"ind.{name}.ally"))
    tx = _load_pickle(src / f"ind.{name}.tx").tocsr()
    ty = np.asarray(_load_pickle(src / f"ind.{name}.ty"))
    graph = _load_pickle(src / f"ind.{name}.graph")
    test_idx = np.loadtxt(src / f"ind.{name}.test.index", dtype=np.int64)

    n = max(graph.keys()) + 1
    lo = int(test_idx.min())
    # some datasets skip ids inside the test range; leave those rows zero
    span = n - lo
    tx_full = sp.lil_matrix((span, tx.shape[1]), dtype=np.float64)
    ty_full = np.zeros((span, ty.shape[1]), dtype=ty.dtype)
    tx_full[test_idx - lo] = tx
    ty_full[test_idx - lo] = ty

    features = sp.vstack([allx, tx_full.tocsr()]).tocsr()
    labels = np.vstack([ally, ty_full])
    if features.shape[0] != n or labels.shape[0] != n:
        raise SystemExit(f"row count mismatch reassembling {name}")
    return graph, features, labels


def write_outputs(out: Path, graph: dict, features, onehot: np.ndarray) -> None:
    out.mkdir(parents=True, exist_ok=True)
    n = max(graph.keys()) + 1

    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v:
                edges.add((min(u, v), max(u, v)))
    with (out / "edges.txt").open("w", encoding="utf-8") as fh:
        fh.write(f"# undirected citation graph: {n} nodes, {len(edges)} edges\n")
        for u, v in sorted(edges):
            fh.write(f"{u}\t{v}\n")

    rowsum = onehot.sum(axis=1)
    with (out / "labels.csv").open("w", encoding="utf-8") as fh:
        fh.write("# node_id,class_id\n")
        for i in range(n):
            if rowsum[i] > 0:
                fh.write(f"{i},{int(np.argmax(onehot[i]))}\n")

    sp.save_npz(out / "features.npz", features.tocsr())

    deg = np.zeros(n, dtype=np.int64)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    print(
        f"{out}: n={n} edges={len(edges)} isolated={int((deg == 0).sum())} "
        f"labeled={int((rowsum > 0).sum())} classes={onehot.shape[1]}"
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--src", type=Path, required=True, help="directory with ind.<name>.* files")
    ap.add_argument("--name", required=True, help="dataset name, e.g. cora")
    ap.add_argument("--out", type=Path, required=True, help="output directory")
    args = ap.parse_args()

    graph, features, labels = load_planetoid(args.src, args.name)
    write_outputs(args.out, graph, features, labels)


if __name__ == "__main__":
    main()
