"""Immutable directed graph in CSR form with out- and in-adjacency.

Undirected inputs are stored with both arc directions materialized, so every
algorithm in the package only ever sees a directed graph.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class GraphFormatError(ValueError):
    """Raised for malformed or empty edge-list files."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Directed graph with dense node ids ``0..n-1``.

    Attributes:
        n: number of nodes.
        m: number of directed arcs (an undirected edge counts twice,
            a self-loop once).
        out_ptr, out_idx: CSR out-adjacency; neighbors of ``v`` are
            ``out_idx[out_ptr[v]:out_ptr[v+1]]``, sorted ascending.
        in_ptr, in_idx: CSR in-adjacency (the transpose), sorted ascending.
        out_deg, in_deg: degree arrays.
        directed: whether the source data was directed.
        labels: original node label of each dense id.
        self_looped: dense ids that received a self-loop because they had
            no out-neighbors.
    """

    n: int
    m: int
    out_ptr: np.ndarray
    out_idx: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray
    out_deg: np.ndarray
    in_deg: np.ndarray
    directed: bool
    labels: np.ndarray
    self_looped: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    @classmethod
    def from_edges(
        cls,
        src,
        dst,
        n: int | None = None,
        directed: bool = True,
        labels=None,
        fix_dangling: bool = True,
    ) -> "Graph":
        """Build a graph from parallel arrays of dense endpoint ids.

        Duplicate arcs are collapsed, self-loops kept. With ``directed=False``
        each edge is stored in both directions. Nodes without out-neighbors
        get a self-loop unless ``fix_dangling`` is false.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise ValueError("src and dst must have the same length")
        if n is None:
            n = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
        if n <= 0:
            raise GraphFormatError("graph has no nodes")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise ValueError("edge endpoint out of range [0, n)")
        if not directed:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])

        keys = np.unique(src * n + dst)
        src, dst = keys // n, keys % n

        looped = np.empty(0, np.int64)
        if fix_dangling:
            has_out = np.zeros(n, dtype=bool)
            has_out[src] = True
            looped = np.flatnonzero(~has_out)
            if looped.size:
                keys = np.unique(np.concatenate([keys, looped * n + looped]))
                src, dst = keys // n, keys % n

        out_deg = np.bincount(src, minlength=n).astype(np.int64)
        in_deg = np.bincount(dst, minlength=n).astype(np.int64)
        out_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(out_deg, out=out_ptr[1:])
        in_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(in_deg, out=in_ptr[1:])
        # keys are sorted by (src, dst): out_idx is dst as-is
        out_idx = dst.astype(np.int64)
        order = np.lexsort((src, dst))
        in_idx = src[order].astype(np.int64)

        if labels is None:
            labels = np.arange(n, dtype=np.int64)
        labels = np.asarray(labels)
        if labels.shape[0] != n:
            raise ValueError("labels must have one entry per node")

        return cls(
            n=int(n),
            m=int(keys.size),
            out_ptr=_readonly(out_ptr),
            out_idx=_readonly(out_idx),
            in_ptr=_readonly(in_ptr),
            in_idx=_readonly(in_idx),
            out_deg=_readonly(out_deg),
            in_deg=_readonly(in_deg),
            directed=bool(directed),
            labels=_readonly(labels.copy()),
            self_looped=_readonly(looped.astype(np.int64)),
        )

    def _check(self, v: int) -> int:
        v = int(v)
        if not 0 <= v < self.n:
            raise IndexError(f"node id {v} out of range [0, {self.n})")
        return v

    def out_neighbors(self, v: int) -> np.ndarray:
        v = self._check(v)
        return self.out_idx[self.out_ptr[v]:self.out_ptr[v + 1]]

    def in_neighbors(self, v: int) -> np.ndarray:
        v = self._check(v)
        return self.in_idx[self.in_ptr[v]:self.in_ptr[v + 1]]

    def arcs(self) -> tuple[np.ndarray, np.ndarray]:
        """All arcs as ``(src, dst)`` arrays in CSR order."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.out_deg)
        return src, np.asarray(self.out_idx)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "directed": self.directed,
            "max_out_degree": int(self.out_deg.max()),
            "dangling_self_loops": int(self.self_looped.size),
        }


def out_neighbors(g: Graph, v: int) -> np.ndarray:
    return g.out_neighbors(v)


def in_neighbors(g: Graph, v: int) -> np.ndarray:
    return g.in_neighbors(v)


def _parse_lines(lines, path) -> tuple[np.ndarray, np.ndarray]:
    src: list[int] = []
    dst: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s[0] in "#%":
            continue
        parts = s.split()
        if len(parts) < 2:
            raise GraphFormatError(f"{path}:{lineno}: expected two node ids, got {s!r}")
        try:
            src.append(int(parts[0]))
            dst.append(int(parts[1]))
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: node ids must be integers, got {s!r}") from None
    return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)


def load_edge_list(path, directed: bool = False) -> Graph:
    """Read a whitespace-separated edge list.

    Lines starting with ``#`` or ``%`` are comments; columns past the second
    (weights, timestamps) are ignored. Original ids are remapped to
    ``0..n-1`` in ascending label order and kept in ``Graph.labels``.
    """
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            src, dst = _parse_lines(fh, path)
    except OSError as exc:
        raise FileNotFoundError(f"cannot read edge list {path!r}: {exc.strerror}") from exc
    if src.size == 0:
        raise GraphFormatError(f"{path}: no edges found")
    labels, inverse = np.unique(np.concatenate([src, dst]), return_inverse=True)
    k = src.size
    return Graph.from_edges(inverse[:k], inverse[k:], n=labels.size, directed=directed, labels=labels)


def write_edge_list(g: Graph, path, use_labels: bool = True) -> None:
    """Write ``g`` so that ``load_edge_list(path, g.directed)`` rebuilds it.

    Undirected graphs are written with one line per edge (``u <= v``).
    """
    src, dst = g.arcs()
    if not g.directed:
        keep = src <= dst
        src, dst = src[keep], dst[keep]
    if use_labels:
        src, dst = g.labels[src], g.labels[dst]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} m={g.m} directed={int(g.directed)}\n")
        np.savetxt(fh, np.column_stack([src, dst]), fmt="%d", delimiter=" ")


def write_ids(g: Graph, path) -> None:
    """Write the dense id -> original label table, one label per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for lab in g.labels:
            fh.write(f"{lab}\n")
