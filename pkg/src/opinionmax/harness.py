"""Generators, ranking metrics and the experiment runner."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import sys
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .dynamics import OpinionEvaluator, OpinionModel, dense_limit, equilibrium_iterative, structural_centrality_dense
from .graph import Graph, load_edge_list, write_ids
from .push import global_inf_approx, max_influence_selector
from .results import SelectionResult, top_k
from .sampling import ForestParams, RwbParams, forest_estimate, rwb_estimate

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

DISTS = ("uniform", "normal", "exponential")
METHODS = ("mis", "rwb", "forest") + baselines.KINDS
DEFAULT_KS = tuple(2**i for i in range(11))
GROUND_TRUTH_EPS = 1e-12
RESULT_COLUMNS = [
    "dataset", "method", "dist", "k", "seed",
    "overall_opinion", "precision", "ndcg", "tie_broken", "error",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def derive_seed(seed: int, tag: str, index: int = 0) -> int:
    """Child seed for ``tag``/``index``; every random stream in a run comes from here."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(tag.encode()), int(index)])
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class ResistanceSpec:
    dist: str = "uniform"
    alpha_min: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.dist not in DISTS:
            raise ValueError(f"unknown distribution {self.dist!r}; expected one of {DISTS}")
        if not 0 < self.alpha_min < 1:
            raise ValueError("alpha_min must lie in (0, 1)")


def _minmax(x: np.ndarray, lo: float) -> np.ndarray:
    span = x.max() - x.min()
    if x.size == 1 or span == 0:
        return np.ones_like(x)
    out = lo + (x - x.min()) / span * (1.0 - lo)
    # pin the endpoints against rounding
    out[np.argmin(x)] = lo
    out[np.argmax(x)] = 1.0
    return out


def gen_resistance(n: int, spec: ResistanceSpec) -> np.ndarray:
    """Resistance coefficients in ``[alpha_min, 1]``.

    ``normal`` and ``exponential`` draws are min-max rescaled onto the
    interval, so their extremes land exactly on ``alpha_min`` and 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(spec.seed)
    if spec.dist == "uniform":
        return rng.uniform(spec.alpha_min, 1.0, n)
    if spec.dist == "normal":
        return _minmax(rng.standard_normal(n), spec.alpha_min)
    return _minmax(rng.standard_exponential(n), spec.alpha_min)


def gen_opinions(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, n)


def build_model(n: int, dist: str = "uniform", alpha_min: float = 0.01, seed: int = 0) -> OpinionModel:
    alpha = gen_resistance(n, ResistanceSpec(dist, alpha_min, derive_seed(seed, "resistance")))
    return OpinionModel(gen_opinions(n, derive_seed(seed, "opinions")), alpha)


def gen_er_graph(n: int, avg_degree: float, seed: int, directed: bool = False) -> Graph:
    """G(n, p) with ``p = avg_degree / (n - 1)``; dangling nodes get self-loops.

    The arc count is drawn from its binomial law, then that many distinct
    pairs are drawn uniformly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return Graph.from_edges([], [], n=1, directed=directed)
    if not 0 <= avg_degree < n:
        raise ValueError("avg_degree must lie in [0, n)")
    rng = np.random.default_rng(seed)
    p = avg_degree / (n - 1)
    pairs = n * (n - 1) if directed else n * (n - 1) // 2
    target = int(rng.binomial(pairs, p))
    keys = np.empty(0, np.int64)
    while keys.size < target:
        need = target - keys.size
        u = rng.integers(0, n, need + need // 8 + 16)
        v = rng.integers(0, n - 1, u.size)
        v += v >= u
        if not directed:
            u, v = np.minimum(u, v), np.maximum(u, v)
        fresh = np.unique(u * n + v)
        fresh = fresh[~np.isin(fresh, keys, assume_unique=True)]
        fresh = rng.permutation(fresh)[:need]
        keys = np.union1d(keys, fresh)
    return Graph.from_edges(keys // n, keys % n, n=n, directed=directed)


def precision_at_k(selected, truth) -> float:
    selected, truth = set(map(int, selected)), set(map(int, truth))
    if len(selected) != len(truth):
        raise ValueError("selected and truth must have the same size")
    if not truth:
        return 1.0
    return len(selected & truth) / len(truth)


def ndcg_at_k(ranked, delta_true, k: int) -> float:
    """Linear-gain NDCG: the gain of a node is its true potential influence."""
    ranked = np.asarray(ranked, dtype=np.int64)
    delta_true = np.asarray(delta_true, dtype=np.float64)
    if k > ranked.size:
        raise ValueError("k exceeds the ranked list length")
    if k == 0:
        return 1.0
    disc = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float(np.dot(delta_true[ranked[:k]], disc))
    ideal = -np.sort(-delta_true)[:k]
    idcg = float(np.dot(ideal, disc))
    if idcg == 0.0:
        return 1.0
    return dcg / idcg


@dataclass
class ExperimentConfig:
    graph: str
    directed: bool = False
    dataset: str | None = None
    dist: str = "uniform"
    alpha_min: float = 0.01
    seed: int = 0
    opinion_seed: int | None = None
    ks: list[int] = field(default_factory=lambda: list(DEFAULT_KS))
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    params: dict = field(default_factory=dict)
    out: str = "results"
    threads: int = 1
    resume: bool = False

    def __post_init__(self):
        bad = [mth for mth in self.methods if mth not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if self.dist not in DISTS:
            raise ConfigError(f"unknown distribution {self.dist!r}")
        if any(int(k) < 0 for k in self.ks):
            raise ConfigError("k values must be non-negative")
        self.ks = [int(k) for k in self.ks]
        if self.dataset is None:
            self.dataset = Path(self.graph).stem

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "graph" not in d:
            raise ConfigError("config needs a 'graph' path")
        d = dict(d)
        if base is not None and not os.path.isabs(d["graph"]):
            d["graph"] = str(base / d["graph"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, "rb") as fh:
            try:
                d = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(d, base=path.parent)


@dataclass
class ResultRow:
    dataset: str
    method: str
    dist: str
    k: int
    seed: int
    overall_opinion: float
    precision: float
    ndcg: float
    elapsed_seconds: float
    tie_broken: bool = False
    error: str = ""
    params: str = ""

    def csv_fields(self) -> list:
        return [
            self.dataset, self.method, self.dist, self.k, self.seed,
            repr(self.overall_opinion), repr(self.precision), repr(self.ndcg),
            int(self.tie_broken), self.error,
        ]


def _digest(params: dict) -> str:
    return f"{zlib.crc32(json.dumps(params, sort_keys=True, default=str).encode()):08x}"


class _Selector:
    """Per-method selection; estimators that do not depend on k run once."""

    def __init__(self, method: str, g: Graph, m: OpinionModel, cfg: ExperimentConfig):
        self.method, self.g, self.m, self.cfg = method, g, m, cfg
        self.opts = dict(cfg.params.get(method, {}))
        self.seed = derive_seed(cfg.seed, method)
        self._scores: np.ndarray | None = None
        self._score_time = 0.0

    def params(self) -> dict:
        return {"method": self.method, "seed": self.seed, **self.opts}

    def _cached(self) -> np.ndarray:
        if self._scores is None:
            t0 = time.perf_counter()
            g, m, o = self.g, self.m, self.opts
            if self.method == "rwb":
                p = RwbParams(epsilon=o.get("epsilon", 1e-2), walks=o.get("walks"), seed=self.seed,
                              stratified=o.get("stratified", False))
                self._scores = rwb_estimate(g, m, p, self.cfg.threads).delta
            elif self.method == "forest":
                p = ForestParams(samples=o.get("samples", 4000), seed=self.seed)
                self._scores = forest_estimate(g, m, p, self.cfg.threads).delta
            else:
                kind = baselines.BaselineKind(self.method, seed=self.seed, **o)
                self._scores = baselines.baseline_scores(g, kind)
            self._score_time = time.perf_counter() - t0
        return self._scores

    def select(self, k: int) -> SelectionResult:
        if self.method == "mis":
            return max_influence_selector(self.g, self.m, k, **self.opts)
        if self.method == "random":
            return baselines.baseline_select(self.g, baselines.BaselineKind("random", seed=self.seed), k)
        t0 = time.perf_counter()
        scores = self._cached()
        nodes = top_k(scores, k)
        return SelectionResult(nodes, scores, self.method, self._score_time + time.perf_counter() - t0,
                               params=self.params())


class GroundTruth:
    """True potential influence and overall-opinion evaluation.

    Dense solves up to the dense limit; beyond it the truth comes from
    forward push at relative error 1e-12 and ``f_T = f + sum(delta[T])``.
    """

    def __init__(self, g: Graph, m: OpinionModel):
        self.g, self.m = g, m
        self.dense = g.n <= dense_limit()
        if self.dense:
            self.delta = structural_centrality_dense(g, m).delta
            self.evaluator = OpinionEvaluator(g, m)
            self.f0 = self.evaluator.overall(())
            self.tier = "dense"
        else:
            self.delta, _ = global_inf_approx(g, m, GROUND_TRUTH_EPS)
            self.f0 = equilibrium_iterative(g, m, tol=1e-10).f
            self.tier = f"push@{GROUND_TRUTH_EPS:g}"

    def overall(self, T) -> float:
        if self.dense:
            return self.evaluator.overall(T)
        return self.f0 + math.fsum(self.delta[np.asarray(list(T), dtype=np.int64)])


def _read_done(path: Path) -> set[tuple]:
    if not path.exists():
        return set()
    with open(path, newline="") as fh:
        return {(r["dataset"], r["method"], r["dist"], int(r["k"]), int(r["seed"])) for r in csv.DictReader(fh)}


def run_experiment(cfg: ExperimentConfig, graph: Graph | None = None) -> list[ResultRow]:
    """Run every method at every k and append rows to ``<out>/results.csv``.

    Wall-clock times go to ``timings.csv`` and run metadata to ``run.json``
    so the results file is byte-identical across reruns with equal seeds.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    g = graph if graph is not None else load_edge_list(cfg.graph, cfg.directed)
    too_big = [k for k in cfg.ks if k > g.n]
    if too_big:
        raise ConfigError(f"k values {too_big} exceed n={g.n}")
    res_path, time_path = out / "results.csv", out / "timings.csv"
    done = _read_done(res_path) if cfg.resume else set()
    rows: list[ResultRow] = []
    if not cfg.ks or not cfg.methods:
        if not done:
            _write_header(res_path, time_path)
        return rows

    opinion_seed = cfg.opinion_seed if cfg.opinion_seed is not None else derive_seed(cfg.seed, "opinions")
    alpha = gen_resistance(g.n, ResistanceSpec(cfg.dist, cfg.alpha_min, derive_seed(cfg.seed, "resistance")))
    m = OpinionModel(gen_opinions(g.n, opinion_seed), alpha)
    truth = GroundTruth(g, m)

    if not done:
        _write_header(res_path, time_path)
    with open(res_path, "a", newline="") as res_fh, open(time_path, "a", newline="") as time_fh:
        res_w, time_w = csv.writer(res_fh), csv.writer(time_fh)
        for method in cfg.methods:
            sel = _Selector(method, g, m, cfg)
            for k in cfg.ks:
                if (cfg.dataset, method, cfg.dist, k, cfg.seed) in done:
                    continue
                row = _evaluate_cell(sel, k, truth, cfg)
                res_w.writerow(row.csv_fields())
                res_fh.flush()
                time_w.writerow([method, k, f"{row.elapsed_seconds:.6f}"])
                time_fh.flush()
                rows.append(row)

    meta = {
        "config": asdict(cfg),
        "graph": g.summary(),
        "dangling_policy": "self-loop",
        "ground_truth": truth.tier,
        "f_empty": truth.f0,
        "baselines": {"degree": "out-degree", "closeness": "harmonic"},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(out / "run.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    write_ids(g, out / f"{cfg.dataset}.ids")
    write_plot_data(_all_rows(res_path), out / "plot_data.tsv")
    return rows


def _write_header(res_path: Path, time_path: Path) -> None:
    with open(res_path, "w", newline="") as fh:
        csv.writer(fh).writerow(RESULT_COLUMNS)
    with open(time_path, "w", newline="") as fh:
        csv.writer(fh).writerow(["method", "k", "elapsed_seconds"])


def _evaluate_cell(sel: _Selector, k: int, truth: GroundTruth, cfg: ExperimentConfig) -> ResultRow:
    base = dict(dataset=cfg.dataset, method=sel.method, dist=cfg.dist, k=k, seed=cfg.seed)
    t0 = time.perf_counter()
    try:
        res = sel.select(k)
        f = truth.overall(res.nodes)
        ideal = top_k(truth.delta, k)
        return ResultRow(
            **base,
            overall_opinion=f,
            precision=precision_at_k(res.nodes, ideal),
            ndcg=ndcg_at_k(res.nodes, truth.delta, k),
            elapsed_seconds=res.elapsed,
            tie_broken=res.tie_broken,
            params=_digest(sel.params()),
        )
    except Exception as exc:  # one failing cell must not stop the sweep
        log.warning("%s at k=%d failed: %s", sel.method, k, exc)
        return ResultRow(**base, overall_opinion=math.nan, precision=math.nan, ndcg=math.nan,
                         elapsed_seconds=time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")


def _all_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_plot_data(rows: list[dict], path) -> None:
    """One TSV block per (dataset, dist, metric): k down the rows, methods across."""
    with open(path, "w") as fh:
        keys = sorted({(r["dataset"], r["dist"]) for r in rows})
        for dataset, dist in keys:
            sub = [r for r in rows if r["dataset"] == dataset and r["dist"] == dist]
            methods = list(dict.fromkeys(r["method"] for r in sub))
            ks = sorted({int(r["k"]) for r in sub})
            for metric in ("overall_opinion", "precision", "ndcg"):
                table = {(r["method"], int(r["k"])): r[metric] for r in sub}
                fh.write(f"# dataset={dataset} dist={dist} metric={metric}\n")
                fh.write("k\t" + "\t".join(methods) + "\n")
                for k in ks:
                    fh.write(f"{k}\t" + "\t".join(table.get((mth, k), "") for mth in methods) + "\n")
                fh.write("\n")
