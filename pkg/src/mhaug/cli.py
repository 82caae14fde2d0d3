"""``mhaug`` command line: sample, verify, train, gen.

Exit codes: 0 success, 1 config or validation error, 2 tolerance failure,
3 I/O error. Every output file is a pure function of (config, seed).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import oracle
from .config import CHAIN_SEED_OFFSET, RunConfig
from .data import SbmSpec, format_graph, gen_complete, gen_grid, gen_path, gen_sbm, gen_star
from .distributions import EntropyVector
from .gnn import LossWeights, train
from .sampler import MHInvariantError, run_chain

__all__ = ["main", "cmd_sample", "cmd_verify", "cmd_train", "cmd_gen", "EXIT_OK", "EXIT_CONFIG",
           "EXIT_TOLERANCE", "EXIT_IO"]

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE, EXIT_IO = 0, 1, 2, 3


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _uniform_entropy(graph):
    return EntropyVector.uniform(graph.num_nodes, max(graph.num_classes, 1))


def write_marginals(path, graph, recorder: oracle.StateRecorder):
    """Per-edge and per-node drop frequencies; node rows repeat the id in u and v."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("kind", "index", "u", "v", "drop_freq"))
        for j, ((u, v), f) in enumerate(zip(graph.edges.tolist(), recorder.edge_drop_frequencies())):
            w.writerow(("edge", j, u, v, repr(float(f))))
        for i, f in enumerate(recorder.node_drop_frequencies()):
            w.writerow(("node", i, i, i, repr(float(f))))


def cmd_sample(cfg: RunConfig) -> int:
    """Run one chain; write ``trace.csv`` and ``marginals.csv``."""
    graph = cfg.build_graph()
    cc = cfg.chain_config()
    rec = oracle.StateRecorder(graph.num_edges, graph.num_nodes, keep_bitmasks=False)
    trace = run_chain(graph, cc, rec, entropy=_uniform_entropy(graph))
    out = _ensure_dir(cfg.output_dir)
    trace.write_csv(os.path.join(out, "trace.csv"))
    write_marginals(os.path.join(out, "marginals.csv"), graph, rec)
    print(f"sample: {len(trace)} steps, acceptance {trace.acceptance_rate:.4f}, "
          f"{rec.count} samples -> {out}")
    return EXIT_OK


def _check(value, tol):
    return {"value": float(value), "tol": float(tol), "pass": bool(value <= tol)}


def verify_report(cfg: RunConfig) -> dict:
    """Enumerate, build the exact kernel when small enough, and compare one chain run.

    The oracle covers edge-only augmentation, so node augmentation is
    switched off for the chain run.
    """
    graph = cfg.build_graph()
    vcfg = cfg.verify
    cc = cfg.chain_config(edge_aug=True, node_aug=False,
                          burn_in=int(vcfg["burn_in"]), num_samples=int(vcfg["num_samples"]))
    entropy = _uniform_entropy(graph)
    table = oracle.enumerate_target(graph, cfg.target, entropy, k=cc.k)
    checks = {}
    if graph.num_edges <= oracle.MAX_KERNEL_EDGES:
        kernel = oracle.exact_kernel(table, cfg.proposal)
        checks["detailed_balance"] = _check(oracle.detailed_balance_violation(table.probs, kernel),
                                            vcfg["db_tol"])
        checks["stationarity"] = _check(oracle.stationarity_violation(table.probs, kernel),
                                        vcfg["stat_tol"])
        checks["row_sums"] = _check(float(np.max(np.abs(kernel.sum(axis=1) - 1.0))), 1e-12)
    rec = oracle.StateRecorder(graph.num_edges, graph.num_nodes)
    trace = run_chain(graph, cc, rec, entropy=entropy)
    emp = oracle.empirical_distribution(rec.bitmasks, graph.num_edges)
    checks["tv_distance"] = _check(oracle.tv_distance(emp, table.probs), vcfg["tv_tol"])

    m = graph.num_edges
    hist_emp = oracle.change_ratio_histogram(rec.n_drop_e, m) / max(rec.count, 1)
    hist_exact = oracle.exact_ratio_distribution(table)
    grid = (np.arange(m + 1) / m).tolist() if m else [0.0]
    failed = sorted(name for name, c in checks.items() if not c["pass"])
    return {
        "graph": {"num_nodes": graph.num_nodes, "num_edges": m},
        "num_states": table.num_states,
        "kernel_checked": m <= oracle.MAX_KERNEL_EDGES,
        "node_aug": False,
        "num_samples": rec.count,
        "acceptance_rate": trace.acceptance_rate,
        "checks": checks,
        # state b is the edge subset with bitmask b (bit j = edge j kept)
        "states": list(range(table.num_states)),
        "exact_probs": table.probs.tolist(),
        "empirical_freqs": emp.tolist(),
        "tv_distance": checks["tv_distance"]["value"],
        "detailed_balance_max_violation": checks.get("detailed_balance", {}).get("value"),
        "ratio_histogram": {
            "grid": grid,
            "exact": hist_exact.tolist(),
            "empirical": hist_emp.tolist(),
            "mode_exact": grid[int(np.argmax(hist_exact))],
            "mode_empirical": grid[int(np.argmax(hist_emp))],
        },
        "edge_drop_marginals": {
            "exact": oracle.exact_edge_drop_marginals(table).tolist(),
            "empirical": rec.edge_drop_frequencies().tolist(),
        },
        "failed": failed,
        "passed": not failed,
    }


def cmd_verify(cfg: RunConfig) -> int:
    """Write ``oracle.json``; exit 2 if any tolerance check fails."""
    report = verify_report(cfg)
    out = _ensure_dir(cfg.output_dir)
    _write_json(os.path.join(out, "oracle.json"), report)
    for name, c in sorted(report["checks"].items()):
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name}: {c['value']:.3e} (tol {c['tol']:.1e})")
    return EXIT_OK if report["passed"] else EXIT_TOLERANCE


def _summary(accs):
    a = np.asarray(accs, dtype=np.float64)
    return {"test_acc": a.tolist(), "mean": float(a.mean()), "std": float(a.std())}


def run_trials(cfg: RunConfig, graph, *, vanilla: bool, out: str | None, prefix: str = ""):
    """Seeded trials; trial ``i`` uses model seed ``seed + i``."""
    results = []
    for i in range(cfg.trials):
        s = cfg.seed + i
        if vanilla:
            chain_cfg, weights = None, LossWeights(0.0, 0.0)
        else:
            chain_cfg, weights = cfg.chain_config(s + CHAIN_SEED_OFFSET), cfg.losses
        res = train(graph, chain_cfg, cfg.model_config(s), weights)
        if out is not None:
            res.write_csv(os.path.join(out, f"{prefix}metrics_trial{i}.csv"))
            with open(os.path.join(out, f"{prefix}checkpoint_trial{i}.json"), "w", encoding="utf-8",
                      newline="\n") as fh:
                fh.write(res.model.to_json())
                fh.write("\n")
        results.append(res)
    return results


def cmd_train(cfg: RunConfig) -> int:
    """Per-trial metric CSVs and checkpoints plus ``summary.json``.

    With ``model.baseline`` a vanilla GCN is trained on the same seeds and
    its files carry a ``baseline_`` prefix.
    """
    graph = cfg.build_graph()
    out = _ensure_dir(cfg.output_dir)
    results = run_trials(cfg, graph, vanilla=cfg.vanilla, out=out)
    summary = {"variant": "vanilla" if cfg.vanilla else "mh-aug", "trials": cfg.trials,
               "seed": cfg.seed, "best_epoch": [r.best_epoch for r in results],
               **_summary([r.test_acc_at_best for r in results])}
    if cfg.baseline:
        base = run_trials(cfg, graph, vanilla=True, out=out, prefix="baseline_")
        summary["baseline"] = _summary([r.test_acc_at_best for r in base])
        summary["gain"] = summary["mean"] - summary["baseline"]["mean"]
    _write_json(os.path.join(out, "summary.json"), summary)
    line = f"train: {summary['variant']} mean test acc {summary['mean']:.4f} +- {summary['std']:.4f}"
    if cfg.baseline:
        line += f" (vanilla {summary['baseline']['mean']:.4f})"
    print(line)
    return EXIT_OK


def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "grid":
        g = gen_grid(args.rows, args.cols)
    elif kind == "complete":
        g = gen_complete(args.n)
    elif kind == "star":
        g = gen_star(args.leaves)
    elif kind == "path":
        g = gen_path(args.n)
    else:
        spec = SbmSpec(blocks=args.blocks, nodes_per_block=args.nodes_per_block, p_in=args.p_in,
                       p_out=args.p_out, feature_dim=args.feature_dim,
                       feature_noise=args.feature_noise, labels_per_class=args.labels_per_class,
                       val_cap=args.val_cap)
        g = gen_sbm(spec, args.seed)
    text = format_graph(g)
    if args.out is None:
        sys.stdout.write(text)
    else:
        path = os.path.join(_ensure_dir(args.out), "graph.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mhaug", description="Metropolis-Hastings graph augmentation")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("sample", "run the chain and dump trace + marginals"),
                        ("verify", "compare the chain against the enumeration oracle"),
                        ("train", "train GCN trials with chain-sampled augmentations")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--set", metavar="K=V", action="append", default=[], dest="overrides")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=_u64)

    g = sub.add_parser("gen", help="write a generated graph file")
    out_flag = argparse.ArgumentParser(add_help=False)
    out_flag.add_argument("--out", metavar="DIR", help="write DIR/graph.txt instead of stdout")
    kinds = g.add_subparsers(dest="kind", required=True)
    k = kinds.add_parser("grid", parents=[out_flag])
    k.add_argument("rows", type=int)
    k.add_argument("cols", type=int)
    kinds.add_parser("complete", parents=[out_flag]).add_argument("n", type=int)
    kinds.add_parser("path", parents=[out_flag]).add_argument("n", type=int)
    kinds.add_parser("star", parents=[out_flag]).add_argument("leaves", type=int)
    k = kinds.add_parser("sbm", parents=[out_flag])
    d = SbmSpec()
    k.add_argument("--blocks", type=int, default=d.blocks)
    k.add_argument("--nodes-per-block", type=int, default=d.nodes_per_block)
    k.add_argument("--p-in", type=float, default=d.p_in)
    k.add_argument("--p-out", type=float, default=d.p_out)
    k.add_argument("--feature-dim", type=int, default=d.feature_dim)
    k.add_argument("--feature-noise", type=float, default=d.feature_noise)
    k.add_argument("--labels-per-class", type=int, default=d.labels_per_class)
    k.add_argument("--val-cap", type=int, default=d.val_cap)
    k.add_argument("--seed", type=_u64, default=0)
    return p


_COMMANDS = {"sample": cmd_sample, "verify": cmd_verify, "train": cmd_train}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args)
        overrides = list(args.overrides)
        if args.out is not None:
            overrides.append(f"output_dir={json.dumps(args.out)}")
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = RunConfig.load(args.config, overrides)
        return _COMMANDS[args.command](cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, MHInvariantError) as exc:
        # ConfigError, GraphValidationError, GraphFormatError and OracleSizeError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
