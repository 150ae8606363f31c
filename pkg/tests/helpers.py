"""Shared test utilities: graph enumeration and independent metric oracles.

Everything here is deliberately implemented with different algorithms than
the package (path enumeration, matrix powers, Taylor series) so tests check
two independent routes to the same answer.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from nndag.graph import Dag


def all_dags(d: int) -> list[np.ndarray]:
    """Every DAG adjacency matrix on d labelled nodes."""
    positions = [(i, j) for i in range(d) for j in range(d) if i != j]
    out = []
    for bits in itertools.product((0, 1), repeat=len(positions)):
        adj = np.zeros((d, d), dtype=np.int8)
        for (i, j), b in zip(positions, bits):
            adj[i, j] = b
        if _acyclic_by_powers(adj):
            out.append(adj)
    return out


def _acyclic_by_powers(adj: np.ndarray) -> bool:
    # trace of every power up to d vanishes iff no cycles
    d = adj.shape[0]
    p = np.eye(d, dtype=np.int64)
    a = adj.astype(np.int64)
    for _ in range(d):
        p = np.minimum(p @ a, 1)
        if np.trace(p) > 0:
            return False
    return True


def reachability(adj: np.ndarray) -> np.ndarray:
    """reach[i, j] = 1 iff a directed path i -> ... -> j exists (length >= 1)."""
    d = adj.shape[0]
    reach = adj.astype(np.int64).copy()
    p = adj.astype(np.int64)
    for _ in range(d):
        p = np.minimum(p @ adj, 1)
        reach = np.minimum(reach + p, 1)
    return reach


def descendants(adj: np.ndarray, i: int) -> frozenset[int]:
    return frozenset(int(v) for v in np.flatnonzero(reachability(adj)[i]))


def simple_paths(adj: np.ndarray, i: int, j: int):
    """All simple paths between i and j as (nodes, directions) pairs.

    directions[k] is +1 when the edge between nodes[k] and nodes[k+1] points
    forward along the path, -1 when it points backward.  Pairs connected in
    both directions yield two separate paths.
    """
    d = adj.shape[0]
    results = []

    def extend(nodes, dirs):
        v = nodes[-1]
        if v == j:
            results.append((list(nodes), list(dirs)))
            return
        for w in range(d):
            if w in nodes:
                continue
            if adj[v, w]:
                extend(nodes + [w], dirs + [1])
            if adj[w, v]:
                extend(nodes + [w], dirs + [-1])

    extend([i], [])
    return results


def path_blocked(adj: np.ndarray, nodes: list[int], dirs: list[int],
                 z: frozenset[int]) -> bool:
    """Classic blocking rule applied to one explicit path."""
    for k in range(1, len(nodes) - 1):
        v = nodes[k]
        collider = dirs[k - 1] == 1 and dirs[k] == -1
        if collider:
            opened = v in z or (descendants(adj, v) & z)
            if not opened:
                return True
        else:
            if v in z:
                return True
    return False


def oracle_adjustment_valid(adj: np.ndarray, i: int, j: int,
                            z: frozenset[int]) -> bool:
    """Adjustment-criterion oracle by explicit path enumeration.

    Independent of the implementation: descendants via matrix powers,
    blocking via the per-path collider rule, no moralization and no
    back-door graph surgery.
    """
    de_i = descendants(adj, i)
    if j in z:
        return j not in de_i
    reach = reachability(adj)
    causal = {w for w in de_i if w == j or reach[w, j]}
    forbidden = set()
    for w in causal:
        forbidden.add(w)
        forbidden |= descendants(adj, w)
    if z & forbidden:
        return False
    for nodes, dirs in simple_paths(adj, i, j):
        is_causal = all(s == 1 for s in dirs)
        if is_causal:
            continue
        if not path_blocked(adj, nodes, dirs, z):
            return False
    return True


def oracle_sid(true_adj: np.ndarray, est_adj: np.ndarray) -> int:
    d = true_adj.shape[0]
    total = 0
    for i in range(d):
        z = frozenset(int(p) for p in np.flatnonzero(est_adj[:, i]))
        for j in range(d):
            if i != j and not oracle_adjustment_valid(true_adj, i, j, z):
                total += 1
    return total


def skeleton_and_vstructs(adj: np.ndarray):
    d = adj.shape[0]
    skel = frozenset((min(i, j), max(i, j))
                     for i in range(d) for j in range(d) if adj[i, j])
    full = adj + adj.T
    vs = set()
    for c in range(d):
        pa = np.flatnonzero(adj[:, c])
        for a, b in itertools.combinations(pa, 2):
            if not full[a, b]:
                vs.add((int(min(a, b)), int(c), int(max(a, b))))
    return skel, frozenset(vs)


@lru_cache(maxsize=None)
def cpdag_classes(d: int):
    """Map (skeleton, v-structures) -> class-consensus CPDAG amat.

    The oracle CPDAG directs an edge iff every member of the Markov
    equivalence class directs it the same way.
    """
    groups: dict[tuple, list[np.ndarray]] = {}
    for adj in all_dags(d):
        groups.setdefault(skeleton_and_vstructs(adj), []).append(adj)
    out = {}
    for key, members in groups.items():
        amat = np.zeros((d, d), dtype=np.int8)
        for i, j in key[0]:
            fwd = all(m[i, j] for m in members)
            bwd = all(m[j, i] for m in members)
            if fwd:
                amat[i, j] = 1
            elif bwd:
                amat[j, i] = 1
            else:
                amat[i, j] = amat[j, i] = 1
        out[key] = amat
    return out


def oracle_cpdag(adj: np.ndarray) -> np.ndarray:
    return cpdag_classes(adj.shape[0])[skeleton_and_vstructs(adj)]


def taylor_expm(a: np.ndarray, terms: int = 60) -> np.ndarray:
    """Plain Taylor series matrix exponential, for small-norm oracles."""
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    return out


def random_dag(d: int, rng: np.random.Generator, p: float = 0.4) -> Dag:
    adj = np.triu((rng.random((d, d)) < p).astype(np.int8), k=1)
    perm = rng.permutation(d)
    return Dag(adj[np.ix_(perm, perm)])
