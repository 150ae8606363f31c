"""Structural evaluation metrics: SHD, SHD-C and SID."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Dag, Pdag, dag_to_cpdag

__all__ = ["MetricsReport", "shd", "shd_c", "sid", "parent_adjustment_valid"]


@dataclass
class MetricsReport:
    shd: int
    shd_c: int
    sid: int
    edges_true: int
    edges_est: int
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "shd": self.shd,
            "shd_c": self.shd_c,
            "sid": self.sid,
            "edges_true": self.edges_true,
            "edges_est": self.edges_est,
            "provenance": self.provenance,
        }


def _as_pdag(g) -> Pdag:
    if isinstance(g, Pdag):
        return g
    if isinstance(g, Dag):
        return Pdag(g.adj | np.zeros_like(g.adj))
    raise TypeError(f"expected Dag or Pdag, got {type(g)}")


def shd(a, b) -> int:
    """Number of unordered pairs whose edge type (->, <-, --, none) differs."""
    pa, pb = _as_pdag(a), _as_pdag(b)
    if pa.d != pb.d:
        raise ValueError("graphs have different node counts")
    count = 0
    for i in range(pa.d):
        for j in range(i + 1, pa.d):
            if pa.edge_type(i, j) != pb.edge_type(i, j):
                count += 1
    return count


def shd_c(a: Dag, b: Dag) -> int:
    """SHD between the CPDAGs of two DAGs."""
    return shd(dag_to_cpdag(a), dag_to_cpdag(b))


def _descendants(adj: np.ndarray, i: int) -> set[int]:
    """Strict descendants of i (i excluded)."""
    seen = set()
    frontier = list(np.flatnonzero(adj[i]))
    while frontier:
        v = frontier.pop()
        if v in seen:
            continue
        seen.add(v)
        frontier.extend(np.flatnonzero(adj[v]))
    seen.discard(i)
    return seen


def _ancestors_inclusive(adj: np.ndarray, nodes) -> set[int]:
    seen = set(nodes)
    frontier = list(nodes)
    while frontier:
        v = frontier.pop()
        for p in np.flatnonzero(adj[:, v]):
            if p not in seen:
                seen.add(int(p))
                frontier.append(int(p))
    return seen


def _d_separated(adj: np.ndarray, x: int, y: int, z: set[int]) -> bool:
    """d-separation of x and y given z, via the moralized ancestral graph."""
    anc = _ancestors_inclusive(adj, {x, y} | z)
    nodes = sorted(anc)
    idx = {v: k for k, v in enumerate(nodes)}
    n = len(nodes)
    moral = np.zeros((n, n), dtype=bool)
    for v in nodes:
        for c in np.flatnonzero(adj[v]):
            if c in anc:
                moral[idx[v], idx[c]] = moral[idx[c], idx[v]] = True
    for v in nodes:
        parents = [p for p in np.flatnonzero(adj[:, v]) if p in anc]
        for a in range(len(parents)):
            for b in range(a + 1, len(parents)):
                moral[idx[parents[a]], idx[parents[b]]] = True
                moral[idx[parents[b]], idx[parents[a]]] = True
    # reachability from x to y avoiding conditioning nodes
    blocked = {idx[v] for v in z if v in idx}
    start, goal = idx[x], idx[y]
    seen = {start}
    frontier = [start]
    while frontier:
        v = frontier.pop()
        if v == goal:
            return False
        for w in np.flatnonzero(moral[v]):
            if w not in seen and w not in blocked:
                seen.add(int(w))
                frontier.append(int(w))
    return True


def parent_adjustment_valid(adj_true: np.ndarray, i: int, j: int,
                            z: frozenset[int] | set[int]) -> bool:
    """Would adjusting for set z correctly give the effect of i on j?

    Follows the adjustment criterion for single interventions: when j is in
    z the estimate predicts no effect, correct iff j is not a descendant of
    i; otherwise z must avoid descendants of nodes on causal paths i -> j
    and d-separate i from j once the first edges of those paths are removed.
    """
    z = set(z)
    de_i = _descendants(adj_true, i)
    if j in z:
        return j not in de_i
    # nodes (other than i) lying on a directed path i -> ... -> j
    causal_nodes = {w for w in de_i if w == j or j in _descendants(adj_true, w)}
    forbidden = set()
    for w in causal_nodes:
        forbidden.add(w)
        forbidden |= _descendants(adj_true, w)
    if z & forbidden:
        return False
    g2 = adj_true.copy()
    for c in causal_nodes:
        g2[i, c] = 0
    return _d_separated(g2, i, j, z)


def sid(true_g: Dag, est_g: Dag) -> int:
    """Count ordered pairs whose interventional distribution would be
    miscalculated using the estimate's parents as adjustment set."""
    if not isinstance(est_g, Dag):
        raise ValueError("SID requires an acyclic estimate")
    if true_g.d != est_g.d:
        raise ValueError("graphs have different node counts")
    d = true_g.d
    total = 0
    cache: dict[tuple[int, int, frozenset], bool] = {}
    for i in range(d):
        z = frozenset(int(p) for p in est_g.parents(i))
        for j in range(d):
            if i == j:
                continue
            key = (i, j, z)
            if key not in cache:
                cache[key] = parent_adjustment_valid(true_g.adj, i, j, z)
            if not cache[key]:
                total += 1
    return total


def evaluate(true_g: Dag, est_g: Dag, provenance: dict | None = None,
             metrics: tuple[str, ...] = ("shd", "shdc", "sid")) -> MetricsReport:
    """Full report for one (truth, estimate) pair."""
    return MetricsReport(
        shd=shd(true_g, est_g) if "shd" in metrics else -1,
        shd_c=shd_c(true_g, est_g) if "shdc" in metrics else -1,
        sid=sid(true_g, est_g) if "sid" in metrics else -1,
        edges_true=true_g.num_edges,
        edges_est=est_g.num_edges,
        provenance=dict(provenance or {}),
    )
