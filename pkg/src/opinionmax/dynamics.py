"""Friedkin-Johnsen equilibrium, structural centrality and the dense oracle.

Model: ``z <- R s + (I - R) P z`` with ``R = diag(alpha)`` and ``P`` the
row-normalized out-adjacency. The equilibrium is ``z = M s`` where
``M = (I - (I - R) P)^{-1} R`` is row-stochastic; the column sums of ``M``
are the structural centralities ``rho`` and ``delta = rho * (1 - s)`` is
the exact gain from setting one node's internal opinion to 1.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .graph import Graph
from .results import CentralityVector, SelectionResult, top_k

DEFAULT_DENSE_LIMIT = 5000
DEFAULT_ALPHA_MIN = 0.01


class DenseSizeError(ValueError):
    """The graph is too large for an O(n^3) dense solve."""


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


def dense_limit() -> int:
    """Dense size guard; ``OPINIONMAX_DENSE_LIMIT`` overrides the default."""
    env = os.environ.get("OPINIONMAX_DENSE_LIMIT")
    return int(env) if env else DEFAULT_DENSE_LIMIT


@dataclass(frozen=True)
class OpinionModel:
    """Internal opinions ``s`` in [0, 1] and resistances ``alpha`` in (0, 1]."""

    s: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        s = np.ascontiguousarray(self.s, dtype=np.float64)
        a = np.ascontiguousarray(self.alpha, dtype=np.float64)
        if s.shape != a.shape or s.ndim != 1:
            raise ValueError("s and alpha must be 1-d arrays of equal length")
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("internal opinions must lie in [0, 1]")
        if np.any(a <= 0) or np.any(a > 1):
            raise ValueError("resistance coefficients must lie in (0, 1]")
        s.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "alpha", a)

    @property
    def n(self) -> int:
        return self.s.size

    def with_opinions(self, s) -> "OpinionModel":
        return OpinionModel(s, self.alpha)

    def set_to_one(self, nodes) -> "OpinionModel":
        s = self.s.copy()
        s[np.asarray(list(nodes), dtype=np.int64)] = 1.0
        return OpinionModel(s, self.alpha)


@dataclass
class EquilibriumResult:
    z: np.ndarray
    f: float
    iterations: int = 0
    residual_norm: float = 0.0

    def to_csv(self, path, labels=None) -> None:
        ids = np.arange(self.z.size) if labels is None else labels
        with open(path, "w") as fh:
            fh.write("node_id,z\n")
            for i, v in zip(ids, self.z):
                fh.write(f"{int(i)},{float(v)!r}\n")


def _check_model(g: Graph, m: OpinionModel) -> None:
    if m.n != g.n:
        raise ValueError(f"model has {m.n} nodes, graph has {g.n}")


def _guard(g: Graph, limit: int | None) -> None:
    limit = dense_limit() if limit is None else limit
    if g.n > limit:
        raise DenseSizeError(f"n={g.n} exceeds the dense limit {limit}")


def transition_matrix(g: Graph) -> sp.csr_matrix:
    """Sparse ``P = D^{-1} A``."""
    data = np.repeat(1.0 / g.out_deg, g.out_deg)
    return sp.csr_matrix((data, g.out_idx, g.out_ptr), shape=(g.n, g.n))


def _dense_system(g: Graph, m: OpinionModel) -> np.ndarray:
    """``I - (I - R) P`` as a dense array."""
    P = transition_matrix(g).toarray()
    return np.eye(g.n) - (1.0 - m.alpha)[:, None] * P


def fundamental_matrix(g: Graph, m: OpinionModel, limit: int | None = None) -> np.ndarray:
    """Dense ``M = (I - (I - R) P)^{-1} R``; used by the invariant checks."""
    _check_model(g, m)
    _guard(g, limit)
    return np.linalg.solve(_dense_system(g, m), np.diag(m.alpha))


def equilibrium_dense(g: Graph, m: OpinionModel, limit: int | None = None) -> EquilibriumResult:
    _check_model(g, m)
    _guard(g, limit)
    z = np.linalg.solve(_dense_system(g, m), m.alpha * m.s)
    return EquilibriumResult(z=z, f=float(z.sum()))


def default_max_iter(tol: float, alpha_min: float) -> int:
    if alpha_min >= 1.0:
        return 65
    return math.ceil(math.log(tol) / math.log1p(-alpha_min)) + 64


def equilibrium_iterative(
    g: Graph,
    m: OpinionModel,
    tol: float = 1e-12,
    max_iter: int | None = None,
) -> EquilibriumResult:
    """Run the update rule from ``z = s`` until the max-norm change drops below ``tol``."""
    _check_model(g, m)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = default_max_iter(tol, float(m.alpha.min()))
    P = transition_matrix(g)
    base = m.alpha * m.s
    keep = 1.0 - m.alpha
    z = m.s.copy()
    change = math.inf
    for it in range(1, max_iter + 1):
        z_new = base + keep * (P @ z)
        change = float(np.max(np.abs(z_new - z)))
        z = z_new
        if change < tol:
            return EquilibriumResult(z=z, f=float(z.sum()), iterations=it, residual_norm=change)
    raise ConvergenceError(f"no convergence after {max_iter} iterations", change)


def structural_centrality_dense(g: Graph, m: OpinionModel, limit: int | None = None) -> CentralityVector:
    """``rho = R (I - P^T (I - R))^{-1} 1`` via one transposed solve."""
    _check_model(g, m)
    _guard(g, limit)
    y = np.linalg.solve(_dense_system(g, m).T, np.ones(g.n))
    rho = m.alpha * y
    return CentralityVector(rho=rho, delta=rho * (1.0 - m.s), method="dense")


class OpinionEvaluator:
    """Overall opinion ``f_T`` for many sets ``T`` on one (graph, model).

    The dense system is LU-factorized once; above the dense limit the
    evaluator falls back to the iterative solver.
    """

    def __init__(self, g: Graph, m: OpinionModel, limit: int | None = None, tol: float = 1e-12):
        _check_model(g, m)
        self.g, self.m, self.tol = g, m, tol
        limit = dense_limit() if limit is None else limit
        self.dense = g.n <= limit
        self._lu = scipy.linalg.lu_factor(_dense_system(g, m)) if self.dense else None

    def equilibrium(self, s) -> np.ndarray:
        if self.dense:
            return scipy.linalg.lu_solve(self._lu, self.m.alpha * np.asarray(s, dtype=np.float64))
        return equilibrium_iterative(self.g, self.m.with_opinions(s), tol=self.tol).z

    def overall(self, T=()) -> float:
        s = self.m.s.copy()
        idx = np.asarray(list(T), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.g.n):
            raise IndexError("node id out of range")
        s[idx] = 1.0
        return float(self.equilibrium(s).sum())


def overall_opinion_after(g: Graph, m: OpinionModel, T=(), method: str = "auto") -> float:
    """Overall equilibrium opinion once every node in ``T`` has internal opinion 1."""
    _check_model(g, m)
    idx = np.asarray(list(T), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= g.n):
        raise IndexError("node id out of range")
    m2 = m.set_to_one(idx)
    if method == "dense" or (method == "auto" and g.n <= dense_limit()):
        return equilibrium_dense(g, m2, limit=g.n if method == "dense" else None).f
    return equilibrium_iterative(g, m2).f


def brute_force_topk(g: Graph, m: OpinionModel, k: int, limit: int | None = None) -> SelectionResult:
    """Exact optimum: the ``k`` largest potential influences from a dense solve."""
    if k < 0 or k > g.n:
        raise ValueError(f"k={k} must lie in [0, n={g.n}]")
    t0 = time.perf_counter()
    cv = structural_centrality_dense(g, m, limit=limit)
    nodes = top_k(cv.delta, k)
    return SelectionResult(
        nodes=nodes,
        scores=cv.delta,
        method="oracle",
        elapsed=time.perf_counter() - t0,
        params={"k": k},
    )
