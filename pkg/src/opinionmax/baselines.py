"""Benchmark selectors: random, degree, closeness, betweenness, PageRank."""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

from .graph import Graph
from .results import SelectionResult, top_k

KINDS = ("random", "degree", "closeness", "betweenness", "pagerank")


@dataclass(frozen=True)
class BaselineKind:
    kind: str
    seed: int = 0
    damping: float = 0.85
    tol: float = 1e-10
    exact_threshold: int = 10_000
    pivots: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; expected one of {KINDS}")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        if self.pivots < 1:
            raise ValueError("pivots must be >= 1")


def pagerank(g: Graph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Power iteration on the out-link walk; scores sum to 1.

    Every node has an out-edge after loading, so there is no dangling mass.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    n = g.n
    data = np.repeat(1.0 / g.out_deg, g.out_deg)
    PT = sp.csr_matrix((data, g.out_idx, g.out_ptr), shape=(n, n)).T.tocsr()
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        x_new = damping * (PT @ x) + (1.0 - damping) / n
        x_new /= x_new.sum()
        if np.max(np.abs(x_new - x)) < tol:
            return x_new
        x = x_new
    raise RuntimeError(f"PageRank did not converge in {max_iter} iterations")


@njit(cache=True, nogil=True)
def _harmonic_to(sources, ptr, idx, n):
    """Add 1/d(source, v) to every v reached from each source."""
    score = np.zeros(n)
    dist = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    for t in range(sources.shape[0]):
        s = sources[t]
        dist[s] = 0
        queue[0] = s
        head, tail = 0, 1
        while head < tail:
            v = queue[head]
            head += 1
            for j in range(ptr[v], ptr[v + 1]):
                w = idx[j]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    score[w] += 1.0 / dist[w]
                    queue[tail] = w
                    tail += 1
        for i in range(tail):
            dist[queue[i]] = -1
    return score


@njit(cache=True, nogil=True)
def _brandes(sources, ptr, idx, n):
    score = np.zeros(n)
    dist = np.full(n, -1, np.int64)
    sigma = np.zeros(n)
    dep = np.zeros(n)
    order = np.empty(n, np.int64)
    for t in range(sources.shape[0]):
        s = sources[t]
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head, tail = 0, 1
        while head < tail:
            v = order[head]
            head += 1
            for j in range(ptr[v], ptr[v + 1]):
                w = idx[j]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
        for i in range(tail - 1, -1, -1):
            w = order[i]
            for j in range(ptr[w], ptr[w + 1]):
                x = idx[j]
                if dist[x] == dist[w] + 1:
                    dep[w] += sigma[w] / sigma[x] * (1.0 + dep[x])
            if w != s:
                score[w] += dep[w]
        for i in range(tail):
            w = order[i]
            dist[w] = -1
            sigma[w] = 0.0
            dep[w] = 0.0
    return score


def _pivots(n: int, exact_threshold: int, pivots: int, seed: int) -> tuple[np.ndarray, float]:
    if n <= exact_threshold:
        return np.arange(n, dtype=np.int64), 1.0
    pivots = min(pivots, n)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=pivots, replace=False)).astype(np.int64)
    return chosen, n / pivots


def closeness_scores(g: Graph, exact_threshold: int = 10_000, pivots: int = 100, seed: int = 0) -> np.ndarray:
    """Harmonic closeness toward each node: sum over u of 1/d(u, v).

    Distances follow arcs u -> v (how influence reaches v in this model);
    unreachable pairs contribute 0. Above ``exact_threshold`` the sum runs
    over sampled sources and is scaled by ``n / pivots``.
    """
    src, scale = _pivots(g.n, exact_threshold, pivots, seed)
    return _harmonic_to(src, g.out_ptr, g.out_idx, g.n) * scale


def betweenness_scores(g: Graph, exact_threshold: int = 10_000, pivots: int = 100, seed: int = 0) -> np.ndarray:
    """Brandes dependency accumulation over unweighted shortest paths.

    Undirected graphs count each pair once (scores halved).
    """
    src, scale = _pivots(g.n, exact_threshold, pivots, seed)
    score = _brandes(src, g.out_ptr, g.out_idx, g.n) * scale
    if not g.directed:
        score /= 2.0
    return score


def baseline_scores(g: Graph, kind: BaselineKind) -> np.ndarray:
    if kind.kind == "degree":
        return g.out_deg.astype(np.float64)
    if kind.kind == "pagerank":
        return pagerank(g, kind.damping, kind.tol)
    if kind.kind == "closeness":
        return closeness_scores(g, kind.exact_threshold, kind.pivots, kind.seed)
    if kind.kind == "betweenness":
        return betweenness_scores(g, kind.exact_threshold, kind.pivots, kind.seed)
    raise ValueError(f"{kind.kind!r} has no score vector")


def baseline_select(g: Graph, kind: BaselineKind | str, k: int) -> SelectionResult:
    """Top-k nodes by a structural centrality; ``random`` draws k distinct nodes."""
    if isinstance(kind, str):
        kind = BaselineKind(kind)
    if k < 0 or k > g.n:
        raise ValueError(f"k={k} must lie in [0, n={g.n}]")
    t0 = time.perf_counter()
    params: dict = {"kind": kind.kind}
    if kind.kind == "random":
        rng = np.random.default_rng([kind.seed, zlib.crc32(b"random")])
        nodes = rng.choice(g.n, size=k, replace=False).astype(np.int64)
        scores = np.zeros(g.n)
        scores[nodes] = np.arange(k, 0, -1, dtype=np.float64)
        params["seed"] = kind.seed
    else:
        scores = baseline_scores(g, kind)
        nodes = top_k(scores, k)
        if kind.kind == "degree":
            params["degree"] = "out"
        elif kind.kind == "pagerank":
            params.update(damping=kind.damping, tol=kind.tol)
        else:
            exact = g.n <= kind.exact_threshold
            params.update(exact=exact, pivots=None if exact else kind.pivots, seed=kind.seed)
            if kind.kind == "closeness":
                params["variant"] = "harmonic"
    return SelectionResult(
        nodes=nodes,
        scores=scores,
        method=kind.kind,
        elapsed=time.perf_counter() - t0,
        params=params,
    )
