"""Command-line front end: ``reinrank {rank,oracle,update-experiment,compare}``.

Exit codes:
  0  success
  1  usage, parse or configuration error
  2  iteration hit --max-iters without converging
  3  graph too large for the dense oracle
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .compare import rank_agreement, top_k, write_rank_list
from .experiments import (
    EvolutionSpec,
    delta_percentages,
    generate_evolution,
    builtin_evolution_spec,
    run_update_experiment,
)
from .graph import GraphError, file_digest, load_graph, save_graph
from .ranking import (
    ConfigError,
    DenseCapExceeded,
    IterationConfig,
    NumericalError,
    exact_solve_pagerank,
    exact_solve_rr,
    pagerank,
    read_scores,
    read_values,
    reinforcement_rank,
    truncated_rank,
    uniform_policy,
    vector_from_values,
    write_scores,
    write_trace,
)

log = logging.getLogger("reinrank")

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_OVER_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _unit_interval(text: str) -> float:
    x = float(text)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return x


def _manifest(args: argparse.Namespace, inputs: list[str | None]) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {
        "tool": "reinrank",
        "version": __version__,
        "subcommand": args.command,
        "flags": flags,
        "inputs": {p: file_digest(p) for p in inputs if p},
        "seed": flags.get("seed"),
    }


def _write_manifest(path: str | os.PathLike, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _graph(args):
    return load_graph(args.graph, args.nodes)


def _rewards(g, path):
    return vector_from_values(g, read_values(path), 1.0) if path else np.ones(g.n)


def _distribution(g, path):
    if not path:
        return None
    x = vector_from_values(g, read_values(path), 1.0 / g.n)
    if (x < 0).any() or x.sum() <= 0:
        raise ConfigError(f"{path}: weights must be non-negative with a positive sum")
    return x / x.sum()


def cmd_rank(args) -> int:
    g = _graph(args)
    init = read_scores(args.init_scores) if args.init_scores else None
    ref = None
    if args.ref_scores:
        ref_sv = read_scores(args.ref_scores)
        if not np.array_equal(ref_sv.ids, g.ids):
            raise ConfigError("--ref-scores must cover exactly the graph's nodes")
        ref = ref_sv.values
    trace = None
    if args.method == "rr":
        cfg = IterationConfig(args.gamma, args.tol, args.max_iters, init, args.deterministic)
        scores, trace = reinforcement_rank(g, uniform_policy(g), _rewards(g, args.rewards),
                                           cfg, reference=ref)
    elif args.method == "rr-truncated":
        scores = truncated_rank(g, uniform_policy(g), _rewards(g, args.rewards),
                                args.gamma, args.depth)
    else:
        cfg = IterationConfig(args.damping, args.tol, args.max_iters, init, args.deterministic)
        scores, trace = pagerank(g, cfg, _distribution(g, args.teleport),
                                 _distribution(g, args.dangling_dist), reference=ref)
    write_scores(args.out, scores)
    if args.ranks_out:
        write_rank_list(args.ranks_out, top_k(scores, args.top_k or len(scores)))
    if args.trace_out and trace is not None:
        write_trace(args.trace_out, trace)
    _write_manifest(f"{args.out}.manifest.json",
                    _manifest(args, [args.graph, args.nodes, args.rewards, args.teleport,
                                     args.dangling_dist, args.init_scores, args.ref_scores]))
    if trace is not None:
        log.info("%s: %d iterations, converged=%s", args.method,
                 trace.iterations_used, trace.converged)
        if not trace.converged:
            print(f"not converged after {trace.iterations_used} iterations", file=sys.stderr)
            return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_oracle(args) -> int:
    g = _graph(args)
    if args.method == "rr":
        scores = exact_solve_rr(g, uniform_policy(g), _rewards(g, args.rewards), args.gamma)
    else:
        scores = exact_solve_pagerank(g, args.damping, _distribution(g, args.teleport),
                                      _distribution(g, args.dangling_dist))
    write_scores(args.out, scores)
    _write_manifest(f"{args.out}.manifest.json",
                    _manifest(args, [args.graph, args.nodes, args.rewards, args.teleport,
                                     args.dangling_dist]))
    return EXIT_OK


def _parse_pairs(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        a, _, b = item.partition(":")
        out.append((int(a), int(b)))
    return out


def cmd_update_experiment(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs: list[str | None] = []
    pairs = _parse_pairs(args.pairs) if args.pairs else None
    if args.snapshots:
        if len(args.snapshots) < 2:
            raise UsageError("--snapshots needs at least two edge-list files")
        snapshots = [load_graph(p) for p in args.snapshots]
        inputs += args.snapshots
    else:
        if args.synthetic == "builtin":
            spec = builtin_evolution_spec(seed=args.seed, base_nodes=args.base_nodes)
        else:
            spec = EvolutionSpec.load(args.synthetic)
            inputs.append(args.synthetic)
        snapshots = [g for g, _ in generate_evolution(spec)]
        if len(snapshots) < 2:
            raise UsageError("evolution spec produced fewer than two snapshots")
        pairs = pairs or spec.pairs
        if args.save_snapshots:
            for k, g in enumerate(snapshots):
                save_graph(g, out / f"snapshot_{k}.txt", out / f"snapshot_{k}.nodes")
    if pairs is None:
        pairs = [(i, i + 1) for i in range(len(snapshots) - 1)]
    for i, j in pairs:
        if not (0 <= i < len(snapshots) and 0 <= j < len(snapshots)):
            raise UsageError(f"pair {i}:{j} references a missing snapshot")

    with open(out / "pairs.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair", "initializer_nodes", "target_nodes", "added_nodes_pct",
                    "removed_nodes_pct", "added_links_pct", "removed_links_pct"])
        for i, j in pairs:
            pct = delta_percentages(snapshots[i], snapshots[j])
            w.writerow([f"{i}->{j}", snapshots[i].n, snapshots[j].n,
                        *(f"{x:.4f}" for x in pct)])

    all_converged = True
    rows = []
    for method in args.methods:
        discount = args.gamma if method == "rr" else args.damping
        results = run_update_experiment(snapshots, method, discount, args.tol, pairs,
                                        args.max_iters)
        for res in results:
            i, j = res.pair
            all_converged &= res.converged
            write_trace(out / f"trace_{method}_{res.init_kind}_{i}-{j}.csv", res.trace)
            rows.append([method, res.init_kind, f"{i}->{j}", res.iterations_to_tol,
                         format(res.initial_rel_error, ".17g")])
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "init_kind", "pair", "iterations_to_tol", "initial_rel_error"])
        w.writerows(rows)
    _write_manifest(out / "manifest.json", _manifest(args, inputs))
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


def cmd_compare(args) -> int:
    a, b = read_scores(args.a), read_scores(args.b)
    stats = rank_agreement(a, b, args.top_k)
    print(f"k={stats.k} overlap={stats.overlap:.6f} kendall_tau={stats.kendall_tau:.6f} "
          f"union={stats.union_size}")
    if args.ranks_out:
        stem = Path(args.ranks_out)
        write_rank_list(stem.with_name(stem.stem + "_a" + stem.suffix), top_k(a, args.top_k))
        write_rank_list(stem.with_name(stem.stem + "_b" + stem.suffix), top_k(b, args.top_k))
    return EXIT_OK


def _iteration_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-10,
                   help="relative L1 step tolerance (default 1e-10)")
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--deterministic", action="store_true",
                   help="fixed accumulation order for bit-reproducible output")
    p.add_argument("--threads", type=int, default=1,
                   help="thread cap (the iteration kernels are single-threaded)")


def _discount(text: str) -> float:
    x = float(text)
    if not 0.0 <= x < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1)")
    return x


def _graph_flags(p: argparse.ArgumentParser, gamma_type=_unit_interval) -> None:
    p.add_argument("--graph", required=True, help="edge-list file")
    p.add_argument("--nodes", help="optional node manifest (one external id per line)")
    p.add_argument("--gamma", type=gamma_type, default=0.85,
                   help="discount for reinforcement ranking (default 0.85)")
    p.add_argument("--damping", type=_unit_interval, default=0.85,
                   help="Page Rank damping c (default 0.85)")
    p.add_argument("--rewards", help="CSV external_id,value; missing nodes get 1.0")
    p.add_argument("--teleport", help="CSV external_id,value teleportation weights")
    p.add_argument("--dangling-dist", help="CSV external_id,value dangling redistribution")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reinrank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rank", help="iterative authority scores")
    _graph_flags(p)
    p.add_argument("--method", choices=["rr", "rr-truncated", "pagerank"], default="rr")
    p.add_argument("--depth", type=int, default=3, help="history depth for rr-truncated")
    p.add_argument("--init-scores", help="score CSV to warm-start from")
    p.add_argument("--ref-scores", help="reference score CSV for relative-error tracking")
    p.add_argument("--out", default="scores.csv")
    p.add_argument("--trace-out")
    p.add_argument("--ranks-out", help="also write a rank list CSV")
    p.add_argument("--top-k", type=int, default=0, help="rank list length (0 = all)")
    _iteration_flags(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("oracle", help="exact scores by dense linear solve")
    # gamma = 0 is a meaningful oracle input (scores equal rewards)
    _graph_flags(p, gamma_type=_discount)
    p.add_argument("--method", choices=["rr", "pagerank"], default="rr")
    p.add_argument("--out", default="scores.csv")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("update-experiment", help="warm-start vs default-init convergence")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--snapshots", nargs="+", help="edge-list files, oldest first")
    src.add_argument("--synthetic", help="evolution spec JSON, or 'builtin' for the built-in four-snapshot one")
    p.add_argument("--seed", type=int, default=0, help="seed for --synthetic builtin")
    p.add_argument("--base-nodes", type=int, default=5000, help="N0 for --synthetic builtin")
    p.add_argument("--pairs", help="initializer:target index pairs, e.g. 2:3,1:2,1:3,0:3")
    p.add_argument("--methods", nargs="+", choices=["rr", "pagerank"],
                   default=["rr", "pagerank"])
    p.add_argument("--gamma", type=_unit_interval, default=0.85)
    p.add_argument("--damping", type=_unit_interval, default=0.85)
    p.add_argument("--out-dir", default="update_experiment")
    p.add_argument("--save-snapshots", action="store_true")
    _iteration_flags(p)
    p.set_defaults(func=cmd_update_experiment)

    p = sub.add_parser("compare", help="top-k overlap and Kendall tau of two score files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("-k", "--top-k", type=int, default=20)
    p.add_argument("--ranks-out", help="write both rank lists (suffixes _a, _b)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except DenseCapExceeded as e:
        print(f"reinrank: {e}", file=sys.stderr)
        return EXIT_OVER_CAP
    except (UsageError, GraphError, ConfigError, NumericalError, OSError, ValueError, KeyError) as e:
        print(f"reinrank: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
