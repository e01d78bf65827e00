"""Command-line interface.

Subcommands:

* ``embed``      -- embed one graph, write TSV/binary embeddings + report
* ``eval``       -- classify a stored embedding and report metrics
* ``pipeline``   -- embed + split + classify over several seeds
* ``ablate``     -- compare objective modes on one dataset
* ``mask-study`` -- label-masking sweep (MCAR/MAR/MNAR x rates x seeds)
* ``bench``      -- per-iteration scaling benchmark on generated graphs
* ``gen-sbm``    -- write a stochastic block model dataset to disk

All randomness flows from ``--seed``/``--seeds``: component seeds (embedding,
split, classifier, masking) are derived with a fixed splitting scheme, so a
command run twice with the same flags rewrites byte-identical files except
for measured wall-clock columns.  ``FUSE_THREADS`` caps the worker threads
used to fan independent runs out (default: all cores).

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import struct
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .engine import FuseConfig, ablation_suite, run_fuse
from .evaluation import (
    MaskSpec,
    Split,
    evaluate,
    generate_mask,
    stratified_split,
    structural_features,
    train_mlp,
)
from .graph import (
    Graph,
    LabelSet,
    generate_sbm,
    load_edge_list,
    load_labels,
    mask_labels,
    write_edge_list,
)

_MAGIC = b"FUSE"

# fixed sub-seed tags so every component draws from its own stream
_TAG_EMBED, _TAG_SPLIT, _TAG_CLASSIFIER, _TAG_MASK = 0, 1, 2, 3


def subseed(seed: int, tag: int) -> int:
    """Derive a component seed from a run seed via a fixed splitting scheme."""
    state = np.random.SeedSequence([seed, tag]).generate_state(1, np.uint64)[0]
    return int(state % np.uint64(2**63))


def _max_workers(n_tasks: int) -> int:
    cap = os.environ.get("FUSE_THREADS", "").strip()
    limit = int(cap) if cap else (os.cpu_count() or 1)
    if limit < 1:
        raise ValueError("FUSE_THREADS must be >= 1")
    return max(1, min(n_tasks, limit))


# ---------------------------------------------------------------------------
# embedding file formats
# ---------------------------------------------------------------------------


def write_embedding_tsv(s: np.ndarray, path: Path) -> None:
    """Rows of ``node_id<TAB>v1..vk`` with 17 significant digits."""
    with path.open("w", encoding="utf-8") as fh:
        for i, row in enumerate(s):
            fh.write(str(i) + "\t" + "\t".join(f"{v:.17g}" for v in row) + "\n")


def read_embedding_tsv(path: Path) -> np.ndarray:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if int(parts[0]) != len(rows):
                raise ValueError(f"line {lineno}: node ids must be contiguous from 0")
            rows.append([float(v) for v in parts[1:]])
    if not rows:
        raise ValueError(f"empty embedding file {path}")
    return np.asarray(rows, dtype=np.float64)


def write_embedding_binary(s: np.ndarray, path: Path) -> None:
    """Magic ``FUSE``, u32 n, u32 k, then float64 rows, all little-endian."""
    n, k = s.shape
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", n, k))
        fh.write(np.ascontiguousarray(s, dtype="<f8").tobytes())


def read_embedding_binary(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path} is not an embedding file (bad magic)")
    n, k = struct.unpack("<II", blob[4:12])
    expect = 12 + 8 * n * k
    if len(blob) != expect:
        raise ValueError(f"{path}: expected {expect} bytes for {n}x{k}, got {len(blob)}")
    return np.frombuffer(blob[12:], dtype="<f8").reshape(n, k).astype(np.float64)


def read_embedding(path: Path) -> np.ndarray:
    with path.open("rb") as fh:
        magic = fh.read(4)
    return read_embedding_binary(path) if magic == _MAGIC else read_embedding_tsv(path)


# ---------------------------------------------------------------------------
# shared input handling
# ---------------------------------------------------------------------------


def _load_inputs(args) -> tuple[Graph, LabelSet | None, np.ndarray]:
    """Load graph (+ labels translated to internal ids).  Returns orig ids."""
    g, orig = load_edge_list(
        args.edges, num_nodes=getattr(args, "num_nodes", None), with_id_map=True
    )
    ls = None
    if getattr(args, "labels", None):
        identity = bool(np.array_equal(orig, np.arange(g.n)))
        id_map = None if identity else {int(o): i for i, o in enumerate(orig)}
        ls = load_labels(args.labels, g.n, id_map=id_map)
    return g, ls, orig


def _empty_labels(n: int) -> LabelSet:
    return LabelSet(
        labels=np.full(n, -1, dtype=np.int64),
        observed=np.zeros(n, dtype=bool),
        num_classes=0,
    )


def _load_features(path: str | None, g: Graph, source: str):
    if source == "structural":
        return structural_features(g)
    if not path:
        return None
    p = Path(path)
    if p.suffix == ".npz":
        return sp.load_npz(p)
    if p.suffix == ".npy":
        return np.load(p)
    return np.loadtxt(p)


def _build_config(args) -> FuseConfig:
    cfg = FuseConfig.from_file(args.config) if getattr(args, "config", None) else FuseConfig()
    overrides = {
        "k": getattr(args, "k", None),
        "eta": getattr(args, "eta", None),
        "lambda_sup": getattr(args, "lambda_sup", None),
        "lambda_semi": getattr(args, "lambda_semi", None),
        "T": getattr(args, "iters", None),
        "r": getattr(args, "walks", None),
        "L": getattr(args, "walk_len", None),
        "L_cap": getattr(args, "label_cap", None),
        "beta": getattr(args, "beta", None),
        "mode": getattr(args, "mode", None),
        "gradient": getattr(args, "gradient", None),
        "seed": getattr(args, "seed", None),
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--k", type=int, help="embedding dimension")
    p.add_argument("--eta", type=float, help="step size")
    p.add_argument("--lambda-sup", dest="lambda_sup", type=float)
    p.add_argument("--lambda-semi", dest="lambda_semi", type=float)
    p.add_argument("--iters", type=int, help="gradient iterations")
    p.add_argument("--walks", type=int, help="walks per unlabeled node")
    p.add_argument("--walk-len", dest="walk_len", type=int, help="steps per walk")
    p.add_argument("--label-cap", dest="label_cap", type=int,
                   help="max labeled visits recorded per walk")
    p.add_argument("--beta", type=float, help="labeled-neighbor walk bias (>= 1)")
    p.add_argument("--mode", choices=("both", "unsupervised_only", "semi_only"))
    p.add_argument("--gradient", choices=("proposed", "exact"))


def _parse_list(text: str, cast):
    try:
        return [cast(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list value: {text!r}") from None


def _metrics_writer(path: Path):
    fh = path.open("w", encoding="utf-8")
    fh.write("run,mechanism,rate,classifier,accuracy,macro_f1,seconds\n")
    return fh


def _metrics_row(fh, run, mechanism, rate, accuracy, macro, seconds) -> None:
    rate_txt = "" if rate is None else f"{rate:g}"
    fh.write(
        f"{run},{mechanism},{rate_txt},mlp,{accuracy:.17g},{macro:.17g},{seconds:.3f}\n"
    )


def _summary_row(fh, mechanism, rate, accs, f1s, secs) -> None:
    rate_txt = "" if rate is None else f"{rate:g}"
    fh.write(
        f"summary,{mechanism},{rate_txt},mlp,"
        f"{np.mean(accs):.6f}±{np.std(accs):.6f},"
        f"{np.mean(f1s):.6f}±{np.std(f1s):.6f},{np.mean(secs):.3f}\n"
    )


def _run_once(g: Graph, ls: LabelSet, cfg: FuseConfig, seed: int, split: Split):
    """Embed with evaluation labels hidden, then train/evaluate the MLP."""
    keep = np.zeros(ls.n, dtype=bool)
    keep[split.train_idx] = True
    visible = mask_labels(ls, keep)
    t0 = time.perf_counter()
    run_cfg = dataclasses.replace(cfg, seed=subseed(seed, _TAG_EMBED))
    s, _ = run_fuse(g, visible, run_cfg)
    model = train_mlp(s, visible, split, seed=subseed(seed, _TAG_CLASSIFIER))
    acc, f1 = evaluate(model, s, ls, split.test_idx)
    return acc, f1, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_embed(args) -> int:
    g, ls, orig = _load_inputs(args)
    if ls is None:
        ls = _empty_labels(g.n)
    cfg = _build_config(args)
    s, report = run_fuse(g, ls, cfg)
    out = Path(args.out)
    write_embedding_tsv(s, out)
    if not np.array_equal(orig, np.arange(g.n)):
        map_path = out.with_suffix(out.suffix + ".id_map.csv")
        with map_path.open("w", encoding="utf-8") as fh:
            fh.write("original_id,internal_id\n")
            for internal, o in enumerate(orig):
                fh.write(f"{o},{internal}\n")
    if args.binary_out:
        write_embedding_binary(s, Path(args.binary_out))
    if args.report:
        report.to_csv(Path(args.report))
    print(
        f"embedded {g.n} nodes ({g.m} edges) into {cfg.k} dimensions "
        f"in {report.cum_seconds[-1]:.2f}s (mode={cfg.mode})"
    )
    return 0


def cmd_eval(args) -> int:
    s = read_embedding(Path(args.embedding))
    ls = load_labels(args.labels, s.shape[0])
    split = stratified_split(ls, args.split, subseed(args.seed, _TAG_SPLIT))
    t0 = time.perf_counter()
    model = train_mlp(
        s, ls, split, hidden=args.hidden, epochs=args.epochs, lr=args.lr,
        seed=subseed(args.seed, _TAG_CLASSIFIER),
    )
    acc, f1 = evaluate(model, s, ls, split.test_idx)
    secs = time.perf_counter() - t0
    if args.out:
        with _metrics_writer(Path(args.out)) as fh:
            _metrics_row(fh, args.seed, "none", None, acc, f1, secs)
    print(f"accuracy={acc:.4f} macro_f1={f1:.4f} ({split.test_idx.size} test nodes)")
    return 0


def cmd_pipeline(args) -> int:
    g, ls, _ = _load_inputs(args)
    if ls is None:
        raise ValueError("pipeline requires --labels")
    cfg = _build_config(args)
    seeds = args.seeds

    def one(seed: int):
        split = stratified_split(ls, args.split, subseed(seed, _TAG_SPLIT))
        return _run_once(g, ls, cfg, seed, split)

    with ThreadPoolExecutor(max_workers=_max_workers(len(seeds))) as pool:
        results = list(pool.map(one, seeds))

    accs = [r[0] for r in results]
    f1s = [r[1] for r in results]
    secs = [r[2] for r in results]
    with _metrics_writer(Path(args.out)) as fh:
        for seed, (acc, f1, sec) in zip(seeds, results):
            _metrics_row(fh, seed, "none", None, acc, f1, sec)
        _summary_row(fh, "none", None, accs, f1s, secs)
    print(f"pipeline: mean accuracy {np.mean(accs):.4f} over {len(seeds)} seeds")
    return 0


def cmd_ablate(args) -> int:
    g, ls, _ = _load_inputs(args)
    if ls is None:
        raise ValueError("ablate requires --labels")
    cfg = _build_config(args)
    rows = ablation_suite(
        g, ls, cfg,
        train_fraction=args.split,
        eval_seed=subseed(args.seed, _TAG_SPLIT),
        unsup_eta=args.unsup_eta,
    )
    with _metrics_writer(Path(args.out)) as fh:
        for row in rows:
            _metrics_row(fh, args.seed, row.mode, None, row.accuracy, row.macro_f1, row.seconds)
    for row in rows:
        print(f"{row.mode}: accuracy={row.accuracy:.4f} seconds={row.seconds:.2f}")
    return 0


def cmd_mask_study(args) -> int:
    g, ls, _ = _load_inputs(args)
    if ls is None:
        raise ValueError("mask-study requires --labels")
    cfg = _build_config(args)
    features = _load_features(args.features, g, args.feature_source)

    tasks = [
        (mech, rate, seed)
        for mech in args.mechanisms
        for rate in args.rates
        for seed in args.seeds
    ]

    def one(task):
        mech, rate, seed = task
        spec = MaskSpec(mechanism=mech, rate=rate, seed=subseed(seed, _TAG_MASK))
        keep = generate_mask(features, ls, spec)
        visible = mask_labels(ls, keep)
        hidden_idx = np.flatnonzero(ls.observed & ~visible.observed)
        train_idx = visible.observed_nodes()
        if train_idx.size == 0 or hidden_idx.size == 0:
            raise ValueError(
                f"mask {mech}@{rate:g} left nothing to {'train on' if train_idx.size == 0 else 'evaluate'}"
            )
        if np.unique(ls.labels[train_idx]).size < ls.num_classes:
            pass  # classifier simply never predicts the vanished class
        split = Split(train_idx=train_idx, test_idx=hidden_idx, fraction=1.0 - rate, seed=seed)
        t0 = time.perf_counter()
        run_cfg = dataclasses.replace(cfg, seed=subseed(seed, _TAG_EMBED))
        s, _ = run_fuse(g, visible, run_cfg)
        model = train_mlp(s, visible, split, seed=subseed(seed, _TAG_CLASSIFIER))
        acc, f1 = evaluate(model, s, ls, hidden_idx)
        return acc, f1, time.perf_counter() - t0

    with ThreadPoolExecutor(max_workers=_max_workers(len(tasks))) as pool:
        results = list(pool.map(one, tasks))

    with _metrics_writer(Path(args.out)) as fh:
        pos = 0
        for mech in args.mechanisms:
            for rate in args.rates:
                group = results[pos : pos + len(args.seeds)]
                pos += len(args.seeds)
                for seed, (acc, f1, sec) in zip(args.seeds, group):
                    _metrics_row(fh, seed, mech, rate, acc, f1, sec)
                _summary_row(
                    fh, mech, rate,
                    [r[0] for r in group], [r[1] for r in group], [r[2] for r in group],
                )
    print(f"mask-study: {len(tasks)} runs written to {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _build_config(args)
    if args.k is None:
        cfg = dataclasses.replace(cfg, k=32)
    rows = []
    for n in args.sizes:
        if n < 2 * cfg.k:
            raise ValueError(f"size {n} too small for k={cfg.k}")
        half = n // 2
        p_in = min(1.0, 0.75 * args.degree / half)
        p_out = min(1.0, 0.25 * args.degree / half)
        g, ls = generate_sbm([half, n - half], p_in, p_out, args.seed)
        warm = dataclasses.replace(cfg, T=2)
        run_fuse(g, ls, warm)
        timed = dataclasses.replace(cfg, T=args.iters or 15)
        _, report = run_fuse(g, ls, timed)
        per_iter = report.phase_seconds["optimize"] / timed.T
        rows.append((n, g.m, per_iter))
        print(f"n={n} m={g.m} sec/iter={per_iter:.5f}")

    slope = None
    if len(rows) >= 2:
        logm = np.log([r[1] for r in rows])
        logt = np.log([r[2] for r in rows])
        slope = float(np.polyfit(logm, logt, 1)[0])
        print(f"log-log slope vs edge count: {slope:.3f}")
    with Path(args.out).open("w", encoding="utf-8") as fh:
        fh.write("n,m,seconds_per_iter,slope\n")
        for i, (n, m, sec) in enumerate(rows):
            tail = f"{slope:.6f}" if (slope is not None and i == len(rows) - 1) else ""
            fh.write(f"{n},{m},{sec:.17g},{tail}\n")
    return 0


def cmd_gen_sbm(args) -> int:
    g, ls = generate_sbm(args.sizes, args.p_in, args.p_out, args.seed)
    write_edge_list(g, Path(args.out_edges))
    with Path(args.out_labels).open("w", encoding="utf-8") as fh:
        for i in range(ls.n):
            fh.write(f"{i},{ls.labels[i]}\n")
    print(f"wrote SBM graph: n={g.n} m={g.m} blocks={ls.num_classes}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fuse-embed", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a graph")
    p.add_argument("--edges", required=True)
    p.add_argument("--labels")
    p.add_argument("--num-nodes", dest="num_nodes", type=int,
                   help="declare the id universe (admits isolated nodes)")
    p.add_argument("--out", required=True, help="embedding TSV path")
    p.add_argument("--binary-out", dest="binary_out")
    p.add_argument("--report", help="per-iteration report CSV path")
    p.add_argument("--seed", type=int)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="classify a stored embedding")
    p.add_argument("--embedding", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="embed + classify across seeds")
    p.add_argument("--edges", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--num-nodes", dest="num_nodes", type=int)
    p.add_argument("--split", type=float, default=0.7)
    p.add_argument("--seeds", type=lambda s: _parse_list(s, int), default=[0, 1, 2, 3, 4])
    p.add_argument("--out", required=True)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("ablate", help="compare objective modes")
    p.add_argument("--edges", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--num-nodes", dest="num_nodes", type=int)
    p.add_argument("--split", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unsup-eta", dest="unsup_eta", type=float, default=1000.0)
    p.add_argument("--out", required=True)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("mask-study", help="label masking sweep")
    p.add_argument("--edges", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--num-nodes", dest="num_nodes", type=int)
    p.add_argument("--features", help="node feature matrix (.npz/.npy/text)")
    p.add_argument("--feature-source", dest="feature_source",
                   choices=("given_features", "structural"), default="given_features")
    p.add_argument("--mechanisms", type=lambda s: _parse_list(s, str),
                   default=["MCAR"])
    p.add_argument("--rates", type=lambda s: _parse_list(s, float),
                   default=[0.2, 0.5, 0.8])
    p.add_argument("--seeds", type=lambda s: _parse_list(s, int),
                   default=list(range(10)))
    p.add_argument("--out", required=True)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_mask_study)

    p = sub.add_parser("bench", help="per-iteration scaling benchmark")
    p.add_argument("--sizes", type=lambda s: _parse_list(s, int), required=True)
    p.add_argument("--degree", type=float, default=16.0, help="target average degree")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-sbm", help="write a stochastic block model dataset")
    p.add_argument("--sizes", type=lambda s: _parse_list(s, int), required=True)
    p.add_argument("--p-in", dest="p_in", type=float, required=True)
    p.add_argument("--p-out", dest="p_out", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-edges", dest="out_edges", required=True)
    p.add_argument("--out-labels", dest="out_labels", required=True)
    p.set_defaults(func=cmd_gen_sbm)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    # mechanisms are validated here so typos exit with a usage error
    if getattr(args, "mechanisms", None):
        for mech in args.mechanisms:
            if mech not in ("MCAR", "MAR", "MNAR"):
                build_parser().error(f"unknown mechanism {mech!r}")
    if getattr(args, "rates", None):
        for rate in args.rates:
            if not (0.0 <= rate <= 1.0):
                build_parser().error(f"rate {rate} outside [0, 1]")
    if getattr(args, "split", None) is not None and not (0.0 < args.split < 1.0):
        build_parser().error(f"split {args.split} outside (0, 1)")
    if (
        args.command == "mask-study"
        and args.feature_source == "given_features"
        and not args.features
        and any(m != "MCAR" for m in args.mechanisms)
    ):
        build_parser().error(
            "MAR/MNAR masking requires node features: "
            "pass --features or --feature-source structural"
        )
    try:
        return args.func(args)
    except (ValueError, OSError, FloatingPointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
