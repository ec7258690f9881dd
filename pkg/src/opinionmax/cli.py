"""Command-line entry point: ``opinionmax <verb> [flags]``.

Exit codes: 0 on success, 1 on usage or path errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines
from .dynamics import OpinionModel, brute_force_topk, structural_centrality_dense
from .graph import Graph, load_edge_list, write_edge_list
from .harness import (
    DISTS,
    ConfigError,
    ExperimentConfig,
    ResistanceSpec,
    derive_seed,
    gen_er_graph,
    gen_opinions,
    gen_resistance,
    run_experiment,
)
from .push import max_influence_selector, push_centrality
from .results import CentralityVector, SelectionResult
from .sampling import ForestParams, RwbParams, forest_estimate, forest_select, rwb_estimate, rwb_select

log = logging.getLogger("opinionmax")

SELECT_METHODS = ("mis", "rwb", "forest") + baselines.KINDS
CENTRALITY_METHODS = ("dense", "rwb", "forest", "push")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", required=True, help="edge list file")
    p.add_argument("--directed", action="store_true", help="treat edges as arcs u -> v")
    p.add_argument("--dist", choices=DISTS, default="uniform", help="resistance distribution")
    p.add_argument("--alpha-min", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--opinions", help="file with one internal opinion per line, by dense node id")
    p.add_argument("--resistance", help="file with one resistance coefficient per line, by dense node id")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opinionmax", description="Opinion maximization on Friedkin-Johnsen dynamics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("centrality", help="estimate structural centrality and potential influence")
    _model_flags(p)
    p.add_argument("--method", choices=CENTRALITY_METHODS, default="dense")
    p.add_argument("--eps", type=float, help="rwb: epsilon (1e-2); push: relative error (1e-9)")
    p.add_argument("--samples", type=int, default=4000, help="forest samples")
    p.add_argument("--walks", type=int, help="rwb walk count override")

    p = sub.add_parser("select", help="pick k nodes to set to opinion 1")
    _model_flags(p)
    p.add_argument("--method", choices=SELECT_METHODS, default="mis")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, help="mis: initial push error (1e-3); rwb: epsilon (1e-2)")
    p.add_argument("--samples", type=int, default=4000, help="forest samples")
    p.add_argument("--walks", type=int, help="rwb walk count override")
    p.add_argument("--scope", choices=("union", "remaining"), default="union", help="mis re-partition scope")
    p.add_argument("--trace", help="mis: write per-push residual trace to this file")

    p = sub.add_parser("oracle", help="exact top-k by dense solve")
    _model_flags(p)
    p.add_argument("--k", type=int, required=True)

    p = sub.add_parser("evaluate", help="run an experiment sweep from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="override the config thread cap")
    p.add_argument("--resume", action="store_true", help="skip cells already present in results.csv")

    p = sub.add_parser("gen-graph", help="write an Erdos-Renyi edge list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--deg", type=float, required=True, help="mean degree")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--out", required=True, help="edge list path")
    return parser


def _read_vector(path: str, n: int, what: str) -> np.ndarray:
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    v = np.loadtxt(path, dtype=np.float64, ndmin=1, comments="#")
    if v.shape != (n,):
        raise ValueError(f"{what} file has {v.size} values, graph has {n} nodes")
    return v


def _load(args) -> tuple[Graph, OpinionModel]:
    g = load_edge_list(args.graph, directed=args.directed)
    if args.resistance:
        alpha = _read_vector(args.resistance, g.n, "resistance")
    else:
        alpha = gen_resistance(g.n, ResistanceSpec(args.dist, args.alpha_min, derive_seed(args.seed, "resistance")))
    if args.opinions:
        s = _read_vector(args.opinions, g.n, "opinions")
    else:
        s = gen_opinions(g.n, derive_seed(args.seed, "opinions"))
    return g, OpinionModel(s, alpha)


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_selection(g: Graph, res: SelectionResult, args) -> None:
    for v in res.nodes:
        print(g.labels[v])
    out = _out_dir(args)
    if out is not None:
        res.params["dangling_self_loops"] = int(g.self_looped.size)
        res.to_csv(out / "selection.csv", labels=g.labels)
        res.write_metadata(out / "selection.json")


def cmd_select(args) -> int:
    if args.k < 0:
        raise UsageError("--k must be non-negative")
    g, m = _load(args)
    seed = derive_seed(args.seed, args.method)
    if args.method == "mis":
        res = max_influence_selector(
            g, m, args.k,
            epsilon0=args.eps if args.eps is not None else 1e-3,
            scope=args.scope,
            trace_path=args.trace,
        )
    elif args.method == "rwb":
        p = RwbParams(epsilon=args.eps if args.eps is not None else 1e-2, walks=args.walks, seed=seed)
        res = rwb_select(g, m, p, args.k, args.threads)
    elif args.method == "forest":
        res = forest_select(g, m, ForestParams(args.samples, seed), args.k, args.threads)
    else:
        res = baselines.baseline_select(g, baselines.BaselineKind(args.method, seed=seed), args.k)
    _emit_selection(g, res, args)
    return 0


def cmd_oracle(args) -> int:
    if args.k < 0:
        raise UsageError("--k must be non-negative")
    g, m = _load(args)
    _emit_selection(g, brute_force_topk(g, m, args.k), args)
    return 0


def cmd_centrality(args) -> int:
    g, m = _load(args)
    seed = derive_seed(args.seed, args.method)
    if args.method == "dense":
        cv = structural_centrality_dense(g, m)
    elif args.method == "rwb":
        cv = rwb_estimate(g, m, RwbParams(args.eps if args.eps is not None else 1e-2, args.walks, seed), args.threads)
    elif args.method == "forest":
        cv = forest_estimate(g, m, ForestParams(args.samples, seed), args.threads)
    else:
        cv = push_centrality(g, m, args.eps if args.eps is not None else 1e-9)
    _emit_centrality(g, cv, args)
    return 0


def _emit_centrality(g: Graph, cv: CentralityVector, args) -> None:
    out = _out_dir(args)
    if out is None:
        for label, r, d in zip(g.labels, cv.rho, cv.delta):
            print(f"{label}\t{float(r)!r}\t{float(d)!r}")
        return
    cv.to_csv(out / "centrality.csv", labels=g.labels)
    meta = {"method": cv.method, "n": g.n, "m": g.m, **cv.meta}
    with open(out / "centrality.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def cmd_evaluate(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.resume:
        cfg.resume = True
    rows = run_experiment(cfg)
    failed = sum(1 for r in rows if r.error)
    print(f"{len(rows)} rows written to {Path(cfg.out) / 'results.csv'} ({failed} failed)")
    return 0


def cmd_gen_graph(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    g = gen_er_graph(args.n, args.deg, args.seed, directed=args.directed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_edge_list(g, args.out)
    print(f"wrote n={g.n} m={g.m} to {args.out}")
    return 0


COMMANDS = {
    "centrality": cmd_centrality,
    "select": cmd_select,
    "oracle": cmd_oracle,
    "evaluate": cmd_evaluate,
    "gen-graph": cmd_gen_graph,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help and on usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("opinionmax: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.verb](args)
    except (UsageError, ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"opinionmax: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"opinionmax: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
