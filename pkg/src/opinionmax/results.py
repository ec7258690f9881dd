"""Result containers shared by the solvers, baselines and the harness."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, descending; ties go to the smallest id."""
    scores = np.asarray(scores, dtype=np.float64)
    if k < 0 or k > scores.size:
        raise ValueError(f"k={k} must lie in [0, {scores.size}]")
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:k].astype(np.int64)


@dataclass
class CentralityVector:
    """Structural centrality and potential influence per node.

    ``stderr`` and ``counts`` are only filled by the samplers.
    """

    rho: np.ndarray
    delta: np.ndarray
    method: str = "dense"
    stderr: np.ndarray | None = None
    counts: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, labels=None) -> None:
        ids = np.arange(self.rho.size) if labels is None else labels
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "rho", "delta"])
            for i, r, d in zip(ids, self.rho, self.delta):
                w.writerow([int(i), repr(float(r)), repr(float(d))])


@dataclass
class SelectionResult:
    """An ordered node set with the scores that produced it."""

    nodes: np.ndarray
    scores: np.ndarray
    method: str
    elapsed: float = 0.0
    params: dict = field(default_factory=dict)
    tie_broken: bool = False
    telemetry: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.nodes.size)

    def node_set(self) -> set[int]:
        return {int(v) for v in self.nodes}

    def metadata(self) -> dict:
        return {
            "method": self.method,
            "k": self.k,
            "params": self.params,
            "tie_broken": self.tie_broken,
            "telemetry": {k: v for k, v in self.telemetry.items() if k != "rounds"},
            "elapsed_seconds": self.elapsed,
        }

    def to_csv(self, path, labels=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "node_id", "score"])
            for rank, v in enumerate(self.nodes, start=1):
                lab = int(v) if labels is None else int(labels[v])
                w.writerow([rank, lab, repr(float(self.scores[v]))])

    def write_metadata(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
