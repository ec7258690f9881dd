"""Deterministic asynchronous push solver for exact top-k selection.

Three pieces:

``GlobalPush``
    Forward push over out-edges from the all-ones residual. On termination
    every residual is at most ``eps`` and the estimates satisfy
    ``(1 - eps) * delta <= delta_hat <= delta``.
``TargetedRefiner``
    Backward push over in-edges for one node, seeded with
    ``alpha_v * (1 - s_v) * e_v`` and weighted by the frozen forward
    residual. Residuals stay sparse between calls so a later, tighter
    threshold resumes where the previous one stopped.
``max_influence_selector``
    Global pass with relative error, candidate partition, then halving
    absolute-error rounds over the surviving candidates until exactly ``k``
    nodes are certified.

Queues are FIFO with an in-queue flag, so every node sits in the queue at
most once and runs are deterministic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import OpinionModel
from .graph import Graph
from .results import CentralityVector, SelectionResult, top_k

MAX_PUSHES = 10**10
_NO_TRACE_I = np.empty(0, np.int64)
_NO_TRACE_F = np.empty(0, np.float64)


class PushError(RuntimeError):
    """The push-count guard was hit."""


@njit(cache=True)
def _global_push(out_ptr, out_idx, alpha, gain, eps, delta_hat, r, queue, qs, in_queue, pushes,
                 budget, trace_node, trace_amt):
    n = alpha.shape[0]
    head = qs[0]
    size = qs[1]
    tracing = trace_node.shape[0] > 0
    done = 0
    while size > 0 and done < budget:
        v = queue[head]
        head += 1
        if head == n:
            head = 0
        size -= 1
        in_queue[v] = False
        val = r[v]
        r[v] = 0.0
        delta_hat[v] += gain[v] * val
        lo = out_ptr[v]
        hi = out_ptr[v + 1]
        share = (1.0 - alpha[v]) * val / (hi - lo)
        for j in range(lo, hi):
            u = out_idx[j]
            r[u] += share
            if not in_queue[u] and r[u] > eps:
                tail = head + size
                if tail >= n:
                    tail -= n
                queue[tail] = u
                size += 1
                in_queue[u] = True
        pushes[v] += 1
        if tracing:
            trace_node[done] = v
            trace_amt[done] = val
        done += 1
    qs[0] = head
    qs[1] = size
    return done


@njit(cache=True)
def _refine_push(in_ptr, in_idx, out_deg, alpha, r_a, eps, r_s, queue, qs, in_queue,
                 touched, tmark, tcount, pushes, budget, trace_node, trace_amt):
    n = alpha.shape[0]
    head = qs[0]
    size = qs[1]
    cnt = tcount[0]
    tracing = trace_node.shape[0] > 0
    tilde = 0.0
    done = 0
    while size > 0 and done < budget:
        v = queue[head]
        head += 1
        if head == n:
            head = 0
        size -= 1
        in_queue[v] = False
        val = r_s[v]
        r_s[v] = 0.0
        tilde += r_a[v] * val
        for j in range(in_ptr[v], in_ptr[v + 1]):
            u = in_idx[j]
            r_s[u] += (1.0 - alpha[u]) / out_deg[u] * val
            if not tmark[u]:
                tmark[u] = True
                touched[cnt] = u
                cnt += 1
            if not in_queue[u] and r_s[u] > eps * alpha[u]:
                tail = head + size
                if tail >= n:
                    tail -= n
                queue[tail] = u
                size += 1
                in_queue[u] = True
        pushes[v] += 1
        if tracing:
            trace_node[done] = v
            trace_amt[done] = val
        done += 1
    qs[0] = head
    qs[1] = size
    tcount[0] = cnt
    return tilde, done


class PushTrace:
    """Writes one line per push: ``phase round node residual``."""

    def __init__(self, path, chunk: int = 1 << 16):
        self.fh = open(path, "w")
        self.fh.write("phase\tround\tnode\tresidual\n")
        self.chunk = chunk
        self.nodes = np.empty(chunk, np.int64)
        self.amts = np.empty(chunk, np.float64)

    def write(self, phase: str, rnd: int, count: int) -> None:
        for v, a in zip(self.nodes[:count], self.amts[:count]):
            self.fh.write(f"{phase}\t{rnd}\t{int(v)}\t{float(a)!r}\n")

    def close(self) -> None:
        self.fh.close()


@dataclass
class PushState:
    """Forward-push state. ``r_a`` is dense; the queue is a ring buffer."""

    delta_hat: np.ndarray
    r_a: np.ndarray
    queue: np.ndarray
    queue_head_size: np.ndarray
    in_queue: np.ndarray
    pushes: np.ndarray

    @property
    def active(self) -> int:
        return int(self.queue_head_size[1])


class GlobalPush:
    """Resumable forward push; ``run(budget)`` performs at most ``budget`` pushes."""

    def __init__(self, g: Graph, m: OpinionModel, epsilon: float, trace: PushTrace | None = None):
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if m.n != g.n:
            raise ValueError("model and graph sizes differ")
        self.g, self.m, self.epsilon, self.trace = g, m, float(epsilon), trace
        n = g.n
        self.gain = (1.0 - m.s) * m.alpha
        self.state = PushState(
            delta_hat=np.zeros(n),
            r_a=np.ones(n),
            queue=np.arange(n, dtype=np.int64),
            queue_head_size=np.array([0, n], dtype=np.int64),
            in_queue=np.ones(n, dtype=np.bool_),
            pushes=np.zeros(n, dtype=np.int64),
        )
        self.total_pushes = 0

    @property
    def done(self) -> bool:
        return self.state.active == 0

    def run(self, budget: int | None = None) -> int:
        st, g = self.state, self.g
        left = MAX_PUSHES - self.total_pushes if budget is None else budget
        done = 0
        while left > 0 and not self.done:
            step = left if self.trace is None else min(left, self.trace.chunk)
            tn, ta = (_NO_TRACE_I, _NO_TRACE_F) if self.trace is None else (self.trace.nodes, self.trace.amts)
            c = _global_push(g.out_ptr, g.out_idx, self.m.alpha, self.gain, self.epsilon, st.delta_hat,
                             st.r_a, st.queue, st.queue_head_size, st.in_queue, st.pushes, step, tn, ta)
            if self.trace is not None:
                self.trace.write("global", 0, c)
            done += c
            left -= c
        self.total_pushes += done
        if budget is None and not self.done:
            raise PushError(f"forward push exceeded {MAX_PUSHES} pushes")
        return done


def global_inf_approx(g: Graph, m: OpinionModel, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Estimated potential influence and the terminal forward residual."""
    gp = GlobalPush(g, m, epsilon)
    gp.run()
    return gp.state.delta_hat, gp.state.r_a


def push_centrality(g: Graph, m: OpinionModel, epsilon: float):
    """Structural centrality by forward push with all opinions set to zero."""
    t0 = time.perf_counter()
    zero = OpinionModel(np.zeros(g.n), m.alpha)
    gp = GlobalPush(g, zero, epsilon)
    gp.run()
    rho = gp.state.delta_hat
    return CentralityVector(
        rho=rho,
        delta=rho * (1.0 - m.s),
        method="push",
        meta={"epsilon": epsilon, "pushes": gp.total_pushes, "elapsed_seconds": time.perf_counter() - t0},
    )


@dataclass
class RefineState:
    """Backward residual of one target, stored sparsely between rounds."""

    target: int
    tilde_delta: float = 0.0
    nodes: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    values: np.ndarray = field(default_factory=lambda: np.empty(0, np.float64))

    def as_dict(self) -> dict[int, float]:
        return {int(u): float(x) for u, x in zip(self.nodes, self.values)}


class TargetedRefiner:
    """Backward push against a frozen forward residual ``r_a``.

    One dense scratch vector is shared by all targets: ``start`` scatters a
    sparse residual into it, ``run`` pushes, ``finish`` gathers the touched
    entries back and clears the scratch.
    """

    def __init__(self, g: Graph, m: OpinionModel, r_a: np.ndarray, trace: PushTrace | None = None):
        n = g.n
        self.g, self.m, self.trace = g, m, trace
        self.r_a = np.ascontiguousarray(r_a, dtype=np.float64)
        self.out_deg = g.out_deg.astype(np.float64)
        self.r_s = np.zeros(n)
        self.queue = np.empty(n, np.int64)
        self.qs = np.zeros(2, np.int64)
        self.in_queue = np.zeros(n, np.bool_)
        self.touched = np.empty(n, np.int64)
        self.tmark = np.zeros(n, np.bool_)
        self.tcount = np.zeros(1, np.int64)
        self.pushes = np.zeros(n, np.int64)
        self.total_pushes = 0
        self.epsilon = 0.0
        self.tilde = 0.0
        self.round = 0

    def start(self, nodes, values, epsilon: float) -> None:
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        nodes = np.asarray(nodes, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if np.any(values < 0):
            raise ValueError("initial residual must be non-negative")
        self.epsilon = float(epsilon)
        self.tilde = 0.0
        order = np.argsort(nodes, kind="stable")
        nodes, values = nodes[order], values[order]
        k = nodes.size
        self.r_s[nodes] = values
        self.tmark[nodes] = True
        self.touched[:k] = nodes
        self.tcount[0] = k
        active = nodes[values > self.epsilon * self.m.alpha[nodes]]
        self.queue[:active.size] = active
        self.in_queue[active] = True
        self.qs[0], self.qs[1] = 0, active.size

    @property
    def done(self) -> bool:
        return self.qs[1] == 0

    def run(self, budget: int | None = None) -> int:
        g = self.g
        left = MAX_PUSHES - self.total_pushes if budget is None else budget
        done = 0
        while left > 0 and not self.done:
            step = left if self.trace is None else min(left, self.trace.chunk)
            tn, ta = (_NO_TRACE_I, _NO_TRACE_F) if self.trace is None else (self.trace.nodes, self.trace.amts)
            tilde, c = _refine_push(g.in_ptr, g.in_idx, self.out_deg, self.m.alpha, self.r_a, self.epsilon,
                                    self.r_s, self.queue, self.qs, self.in_queue, self.touched, self.tmark,
                                    self.tcount, self.pushes, step, tn, ta)
            if self.trace is not None:
                self.trace.write("refine", self.round, c)
            self.tilde += tilde
            done += c
            left -= c
        self.total_pushes += done
        if budget is None and not self.done:
            raise PushError(f"backward push exceeded {MAX_PUSHES} pushes")
        return done

    def residual(self) -> tuple[np.ndarray, np.ndarray]:
        """Current sparse residual (without clearing the scratch)."""
        idx = np.sort(self.touched[:self.tcount[0]])
        vals = self.r_s[idx]
        keep = vals != 0.0
        return idx[keep], vals[keep]

    def finish(self) -> tuple[float, np.ndarray, np.ndarray]:
        nodes, values = self.residual()
        idx = self.touched[:self.tcount[0]]
        self.r_s[idx] = 0.0
        self.tmark[idx] = False
        self.in_queue[idx] = False
        self.tcount[0] = 0
        self.qs[:] = 0
        return self.tilde, nodes.copy(), values.copy()

    def refine(self, state: RefineState, epsilon: float) -> float:
        """Push ``state`` down to threshold ``epsilon``; returns the increment."""
        self.start(state.nodes, state.values, epsilon)
        self.run()
        tilde, state.nodes, state.values = self.finish()
        state.tilde_delta += tilde
        return tilde


def _sparse_input(r0, n: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(r0, dict):
        nodes = np.fromiter(r0.keys(), dtype=np.int64, count=len(r0))
        vals = np.fromiter(r0.values(), dtype=np.float64, count=len(r0))
    elif isinstance(r0, tuple):
        nodes, vals = (np.asarray(x) for x in r0)
    else:
        dense = np.asarray(r0, dtype=np.float64)
        if dense.shape != (n,):
            raise ValueError("dense residual must have length n")
        nodes = np.flatnonzero(dense)
        vals = dense[nodes]
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n):
        raise IndexError("residual node id out of range")
    keep = vals != 0
    return nodes[keep].astype(np.int64), vals[keep].astype(np.float64)


def targeted_node_refine(g: Graph, m: OpinionModel, r_a: np.ndarray, r0, epsilon: float) -> tuple[float, dict]:
    """Backward push from residual ``r0`` (dict, ``(nodes, values)`` or dense array).

    Returns the accumulated increment and the sparse terminal residual.
    """
    nodes, vals = _sparse_input(r0, g.n)
    st = RefineState(target=-1, nodes=nodes, values=vals)
    tilde = TargetedRefiner(g, m, r_a).refine(st, epsilon)
    return tilde, st.as_dict()


def initial_residual(m: OpinionModel, v: int) -> RefineState:
    val = m.alpha[v] * (1.0 - m.s[v])
    if val == 0.0:
        return RefineState(target=int(v))
    return RefineState(target=int(v), nodes=np.array([v], np.int64), values=np.array([val]))


@dataclass
class Partition:
    confirmed: np.ndarray
    candidates: np.ndarray
    k_remaining: int


def partition_candidates(scores, k: int, err: float, mode: str = "absolute", ids=None) -> Partition:
    """Split a universe into certified top-k members and undecided candidates.

    ``scores`` must underestimate the true values by at most ``err``
    (absolute) or ``err`` times the true value (relative). A node is
    confirmed when it clears the (k+1)-th largest estimate by the error
    margin; it stays a candidate when it is within the margin of the k-th
    largest. Everything else is provably outside the top k.
    """
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.arange(scores.size, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    if err < 0:
        raise ValueError("err must be non-negative")
    if mode not in ("absolute", "relative"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "relative" and err >= 1:
        raise ValueError("relative err must be < 1")
    size = scores.size
    if k < 0 or k > size:
        raise ValueError(f"k={k} must lie in [0, {size}]")
    empty = np.empty(0, np.int64)
    if k == 0:
        return Partition(empty, empty, 0)
    if k + 1 > size:
        return Partition(ids[top_k(scores, k)], empty, 0)
    desc = -np.sort(-scores)
    kth, k1th = desc[k - 1], desc[k]
    # the strict "> k1th" only matters for err == 0 or a zero (k+1)-th value,
    # where the plain inequality would admit the (k+1)-th node itself
    if mode == "absolute":
        conf = (scores >= k1th + err) & (scores > k1th)
        cand = ~conf & (scores >= kth - err)
    else:
        conf = (scores >= k1th / (1.0 - err)) & (scores > k1th)
        cand = ~conf & (scores >= kth * (1.0 - err))
    return Partition(ids[conf], ids[cand], k - int(conf.sum()))


def max_influence_selector(
    g: Graph,
    m: OpinionModel,
    k: int,
    epsilon0: float = 1e-3,
    scope: str = "union",
    min_epsilon: float = 1e-15,
    record: bool = False,
    trace_path=None,
) -> SelectionResult:
    """Exact top-k potential influence by push with progressive refinement.

    ``scope`` picks how each refinement round re-partitions: ``"union"``
    re-ranks confirmed plus candidate nodes against the global ``k``;
    ``"remaining"`` ranks the candidates alone against ``k - |T|``.
    With ``record=True`` every refined estimate is kept in
    ``telemetry["rounds"]`` as ``(refine_eps, r_a_sum, node, estimate)``.
    """
    if not 0 < epsilon0 < 1:
        raise ValueError("epsilon0 must lie in (0, 1)")
    if k < 0 or k > g.n:
        raise ValueError(f"k={k} must lie in [0, n={g.n}]")
    if scope not in ("union", "remaining"):
        raise ValueError(f"unknown scope {scope!r}")
    t0 = time.perf_counter()
    trace = PushTrace(trace_path) if trace_path else None
    try:
        gp = GlobalPush(g, m, epsilon0, trace)
        gp.run()
        est = gp.state.delta_hat.copy()
        r_a = gp.state.r_a
        r_sum = math.fsum(r_a)

        part = partition_candidates(est, k, epsilon0, "relative")
        confirmed = set(part.confirmed.tolist())
        cands = sorted(part.candidates.tolist())
        n_cand0 = len(cands)

        refiner = TargetedRefiner(g, m, r_a, trace)
        states = {v: initial_residual(m, v) for v in cands}
        rounds: list[tuple] = []
        eps_p = 1.0
        n_rounds = 0
        tie_broken = False
        while len(confirmed) < k:
            if eps_p < min_epsilon:
                # exactly tied boundary values never separate; settle by node id
                need = k - len(confirmed)
                c = np.asarray(cands, dtype=np.int64)
                confirmed.update(c[top_k(est[c], need)].tolist())
                tie_broken = True
                break
            n_rounds += 1
            refiner.round = n_rounds
            thr = eps_p / r_sum if r_sum > 0 else math.inf
            err = eps_p if r_sum > 0 else 0.0
            for v in cands:
                est[v] += refiner.refine(states[v], thr)
                if record:
                    rounds.append((thr, r_sum, v, est[v]))
            if scope == "union":
                uni = np.asarray(sorted(confirmed.union(cands)), dtype=np.int64)
                part = partition_candidates(est[uni], k, err, "absolute", ids=uni)
            else:
                uni = np.asarray(cands, dtype=np.int64)
                part = partition_candidates(est[uni], k - len(confirmed), err, "absolute", ids=uni)
            confirmed.update(part.confirmed.tolist())
            cands = sorted(set(part.candidates.tolist()) - confirmed)
            for v in list(states):
                if v not in cands:
                    del states[v]
            eps_p /= 2
    finally:
        if trace is not None:
            trace.close()

    sel = np.asarray(sorted(confirmed), dtype=np.int64)
    nodes = sel[top_k(est[sel], sel.size)]
    total = gp.total_pushes + refiner.total_pushes
    telemetry = {
        "global_pushes": gp.total_pushes,
        "refine_pushes": refiner.total_pushes,
        "pushes_per_node": total / g.n,
        "initial_candidates": n_cand0,
        "n_rounds": n_rounds,
        "final_epsilon": eps_p * 2 if n_rounds else None,
        "residual_sum": r_sum,
    }
    if record:
        telemetry["rounds"] = rounds
    return SelectionResult(
        nodes=nodes,
        scores=est,
        method="mis",
        elapsed=time.perf_counter() - t0,
        params={"epsilon0": epsilon0, "k": k, "scope": scope},
        tie_broken=tie_broken,
        telemetry=telemetry,
    )
