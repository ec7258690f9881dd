"""Monte Carlo estimators of structural centrality.

Two routes:

* RWB: absorbing random walks. A walk at node ``j`` stops with probability
  ``alpha[j]``, otherwise moves to a uniform out-neighbor; ``rho[v]`` is
  ``n`` times the fraction of walks absorbed at ``v``.
* Forest: loop-erased absorbing walks (Wilson's algorithm with root
  probabilities) sample spanning converging forests; ``rho[u]`` is the
  expected size of the tree rooted at ``u``.

Work is cut into fixed-size chunks, each with its own seed derived from a
``numpy.random.SeedSequence``. Chunk boundaries do not depend on the thread
count, so results are bit-identical for any ``threads``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import OpinionModel
from .graph import Graph
from .results import CentralityVector, SelectionResult, top_k

WALKS_PER_CHUNK = 1 << 16
FORESTS_PER_CHUNK = 64
MAX_STEPS = 10**9


class SamplerError(RuntimeError):
    """A walk exceeded the step cap."""


@dataclass(frozen=True)
class RwbParams:
    epsilon: float = 1e-2
    walks: int | None = None
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.walks is not None and self.walks < 1:
            raise ValueError("walks must be >= 1")

    def n_walks(self, n: int) -> int:
        if self.walks is not None:
            return int(self.walks)
        return default_walks(n, self.epsilon)


@dataclass(frozen=True)
class ForestParams:
    samples: int = 4000
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


def default_walks(n: int, epsilon: float) -> int:
    """``ceil(n / eps^2 * ln n)`` walks, at least one."""
    return max(1, math.ceil(n / epsilon**2 * math.log(n))) if n > 1 else 1


def _chunk_seeds(seed: int, n_chunks: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, np.uint32)[0]) for c in ss.spawn(n_chunks)]


def _fan_out(fn, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


@njit(cache=True, nogil=True)
def _walk_chunk(out_ptr, out_idx, alpha, n_walks, first, stratified, seed, max_steps):
    np.random.seed(seed)
    n = alpha.shape[0]
    counts = np.zeros(n, np.int64)
    steps = 0
    for w in range(n_walks):
        if stratified:
            u = (first + w) % n
        else:
            u = np.random.randint(0, n)
        while np.random.random() >= alpha[u]:
            lo = out_ptr[u]
            u = out_idx[lo + np.random.randint(0, out_ptr[u + 1] - lo)]
            steps += 1
            if steps > max_steps:
                return counts, -1
        counts[u] += 1
    return counts, steps


def rwb_counts(g: Graph, m: OpinionModel, p: RwbParams, threads: int = 1) -> tuple[np.ndarray, int, int]:
    """Absorption counts per node, total walks, total steps."""
    N = p.n_walks(g.n)
    n_chunks = -(-N // WALKS_PER_CHUNK)
    seeds = _chunk_seeds(p.seed, n_chunks)
    tasks = []
    for c in range(n_chunks):
        first = c * WALKS_PER_CHUNK
        size = min(WALKS_PER_CHUNK, N - first)
        tasks.append((g.out_ptr, g.out_idx, m.alpha, size, first, p.stratified, seeds[c], MAX_STEPS))
    counts = np.zeros(g.n, np.int64)
    steps = 0
    for c_counts, c_steps in _fan_out(_walk_chunk, tasks, threads):
        if c_steps < 0:
            raise SamplerError("absorbing walk exceeded the step cap")
        counts += c_counts
        steps += c_steps
    return counts, N, steps


def rwb_estimate(g: Graph, m: OpinionModel, p: RwbParams | None = None, threads: int = 1) -> CentralityVector:
    p = p or RwbParams()
    t0 = time.perf_counter()
    counts, N, steps = rwb_counts(g, m, p, threads)
    rho = counts * (g.n / N)
    # each walk contributes n with probability rho/n, so var = rho (n - rho) / N
    stderr = np.sqrt(np.maximum(rho * (g.n - rho), 0.0) / N)
    return CentralityVector(
        rho=rho,
        delta=rho * (1.0 - m.s),
        method="rwb",
        stderr=stderr,
        counts=counts,
        meta={
            "seed": p.seed,
            "walks": N,
            "epsilon": p.epsilon,
            "stratified": p.stratified,
            "mean_walk_length": steps / N,
            "elapsed_seconds": time.perf_counter() - t0,
        },
    )


def _select(cv: CentralityVector, k: int, method: str, params: dict, t0: float) -> SelectionResult:
    if k < 0 or k > cv.delta.size:
        raise ValueError(f"k={k} must lie in [0, n={cv.delta.size}]")
    return SelectionResult(
        nodes=top_k(cv.delta, k),
        scores=cv.delta,
        method=method,
        elapsed=time.perf_counter() - t0,
        params=params,
        telemetry={key: v for key, v in cv.meta.items() if key != "elapsed_seconds"},
    )


def rwb_select(g: Graph, m: OpinionModel, p: RwbParams | None, k: int, threads: int = 1) -> SelectionResult:
    p = p or RwbParams()
    if k < 0 or k > g.n:
        raise ValueError(f"k={k} must lie in [0, n={g.n}]")
    t0 = time.perf_counter()
    cv = rwb_estimate(g, m, p, threads)
    return _select(cv, k, "rwb", {"epsilon": p.epsilon, "walks": p.n_walks(g.n), "seed": p.seed}, t0)


@njit(cache=True, nogil=True)
def _random_forest(out_ptr, out_idx, alpha, in_forest, nxt, root, max_steps):
    """One loop-erased sample; fills ``root`` and returns the step count (-1 on cap)."""
    n = alpha.shape[0]
    for i in range(n):
        in_forest[i] = False
        nxt[i] = -1
        root[i] = 0
    steps = 0
    for i in range(n):
        u = i
        while not in_forest[u]:
            if np.random.random() < alpha[u]:
                in_forest[u] = True
                nxt[u] = -1
                root[u] = u
            else:
                lo = out_ptr[u]
                v = out_idx[lo + np.random.randint(0, out_ptr[u + 1] - lo)]
                nxt[u] = v
                u = v
            steps += 1
            if steps > max_steps:
                return -1
        r = root[u]
        u = i
        while not in_forest[u]:
            in_forest[u] = True
            root[u] = r
            u = nxt[u]
    return steps


@njit(cache=True, nogil=True)
def _forest_chunk(out_ptr, out_idx, alpha, n_samples, seed, max_steps):
    np.random.seed(seed)
    n = alpha.shape[0]
    in_forest = np.zeros(n, np.bool_)
    nxt = np.empty(n, np.int64)
    root = np.empty(n, np.int64)
    size = np.zeros(n, np.int64)
    total = np.zeros(n, np.int64)
    total_sq = np.zeros(n, np.int64)
    steps = 0
    for _ in range(n_samples):
        st = _random_forest(out_ptr, out_idx, alpha, in_forest, nxt, root, max_steps)
        if st < 0:
            return total, total_sq, -1
        steps += st
        size[:] = 0
        for v in range(n):
            size[root[v]] += 1
        for v in range(n):
            total[v] += size[v]
            total_sq[v] += size[v] * size[v]
    return total, total_sq, steps


def sample_random_forest(g: Graph, m: OpinionModel, rng: int | np.random.Generator | None = None) -> np.ndarray:
    """Root of the converging tree containing each node, for one sampled forest."""
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2**32))
    elif rng is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint32)[0])
    else:
        seed = _chunk_seeds(int(rng), 1)[0]
    _seed_numba(seed)
    in_forest = np.zeros(g.n, np.bool_)
    nxt = np.empty(g.n, np.int64)
    root = np.empty(g.n, np.int64)
    if _random_forest(g.out_ptr, g.out_idx, m.alpha, in_forest, nxt, root, MAX_STEPS) < 0:
        raise SamplerError("loop-erased walk exceeded the step cap")
    return root


@njit(cache=True)
def _seed_numba(seed):
    np.random.seed(seed)


def forest_estimate(g: Graph, m: OpinionModel, p: ForestParams | None = None, threads: int = 1) -> CentralityVector:
    p = p or ForestParams()
    t0 = time.perf_counter()
    l = p.samples
    n_chunks = -(-l // FORESTS_PER_CHUNK)
    seeds = _chunk_seeds(p.seed, n_chunks)
    tasks = [
        (g.out_ptr, g.out_idx, m.alpha, min(FORESTS_PER_CHUNK, l - c * FORESTS_PER_CHUNK), seeds[c], MAX_STEPS)
        for c in range(n_chunks)
    ]
    total = np.zeros(g.n, np.int64)
    total_sq = np.zeros(g.n, np.int64)
    steps = 0
    for t, tsq, st in _fan_out(_forest_chunk, tasks, threads):
        if st < 0:
            raise SamplerError("loop-erased walk exceeded the step cap")
        total += t
        total_sq += tsq
        steps += st
    rho = total / l
    if l > 1:
        var = np.maximum(total_sq - l * rho**2, 0.0) / (l - 1)
        stderr = np.sqrt(var / l)
    else:
        stderr = np.full(g.n, np.nan)
    return CentralityVector(
        rho=rho,
        delta=rho * (1.0 - m.s),
        method="forest",
        stderr=stderr,
        counts=total,
        meta={
            "seed": p.seed,
            "samples": l,
            "mean_steps_per_sample": steps / l,
            "elapsed_seconds": time.perf_counter() - t0,
        },
    )


def forest_select(g: Graph, m: OpinionModel, p: ForestParams | None, k: int, threads: int = 1) -> SelectionResult:
    p = p or ForestParams()
    if k < 0 or k > g.n:
        raise ValueError(f"k={k} must lie in [0, n={g.n}]")
    t0 = time.perf_counter()
    cv = forest_estimate(g, m, p, threads)
    return _select(cv, k, "forest", {"samples": p.samples, "seed": p.seed}, t0)
