"""DAG and PDAG structures, random graph sampling, and CPDAG conversion."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dag",
    "Pdag",
    "is_acyclic",
    "topological_order",
    "sample_er",
    "sample_sf",
    "dag_to_cpdag",
    "save_edge_list",
    "load_edge_list",
    "load_adjacency_csv",
]


def _check_adj(adj: np.ndarray) -> np.ndarray:
    adj = np.asarray(adj)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got shape {adj.shape}")
    if not np.isin(adj, (0, 1)).all():
        raise ValueError("adjacency matrix must be binary")
    if np.diagonal(adj).any():
        raise ValueError("adjacency matrix must have a zero diagonal")
    return adj.astype(np.int8)


def is_acyclic(adj: np.ndarray) -> bool:
    """True iff the directed graph given by ``adj`` admits a topological order.

    Kahn-style elimination: repeatedly remove nodes with no remaining parents.
    """
    adj = _check_adj(adj)
    return topological_order(adj) is not None


def topological_order(adj: np.ndarray) -> list[int] | None:
    """Topological order of the graph, or None if it contains a cycle."""
    adj = np.asarray(adj)
    d = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    alive = np.ones(d, dtype=bool)
    order: list[int] = []
    frontier = [i for i in range(d) if indeg[i] == 0]
    while frontier:
        i = frontier.pop()
        order.append(i)
        alive[i] = False
        for j in np.flatnonzero(adj[i]):
            indeg[j] -= 1
            if indeg[j] == 0 and alive[j]:
                frontier.append(j)
    return order if len(order) == d else None


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over ``d`` nodes; ``adj[i, j] == 1`` means i -> j."""

    adj: np.ndarray

    def __post_init__(self):
        adj = _check_adj(self.adj)
        if topological_order(adj) is None:
            raise ValueError("graph contains a cycle")
        object.__setattr__(self, "adj", adj)
        self.adj.setflags(write=False)

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self.adj.sum())

    def parents(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.adj[:, j])

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adj))]

    def __eq__(self, other) -> bool:
        return isinstance(other, Dag) and np.array_equal(self.adj, other.adj)


@dataclass(frozen=True)
class Pdag:
    """Partially directed graph.

    ``amat[i, j] == 1 and amat[j, i] == 0`` encodes i -> j;
    ``amat[i, j] == amat[j, i] == 1`` encodes an undirected edge.
    """

    amat: np.ndarray

    def __post_init__(self):
        amat = _check_adj(self.amat)
        object.__setattr__(self, "amat", amat)
        self.amat.setflags(write=False)

    @property
    def d(self) -> int:
        return self.amat.shape[0]

    def edge_type(self, i: int, j: int) -> str:
        """One of 'none', '->', '<-', '--' for the unordered pair (i, j)."""
        a, b = self.amat[i, j], self.amat[j, i]
        if a and b:
            return "--"
        if a:
            return "->"
        if b:
            return "<-"
        return "none"

    def __eq__(self, other) -> bool:
        return isinstance(other, Pdag) and np.array_equal(self.amat, other.amat)


def sample_er(d: int, e: float, rng: np.random.Generator) -> Dag:
    """Erdos-Renyi DAG: random topological order, then independent edges.

    Edges are allowed only from earlier to later positions in a uniformly
    random permutation, each present with probability p = 2e / (d^2 - d),
    giving expected edge count ``e``.
    """
    if d < 2:
        raise ValueError("need d >= 2")
    max_edges = d * (d - 1) / 2
    if not 0 <= e <= max_edges:
        raise ValueError(f"expected edge count {e} outside [0, {max_edges}]")
    p = 2.0 * e / (d * d - d)
    order = rng.permutation(d)
    adj = np.zeros((d, d), dtype=np.int8)
    for a in range(d):
        for b in range(a + 1, d):
            if rng.random() < p:
                adj[order[a], order[b]] = 1
    return Dag(adj)


def sample_sf(d: int, m: int, rng: np.random.Generator) -> Dag:
    """Scale-free DAG via preferential attachment.

    Nodes are inserted one at a time starting from ``m`` seed nodes (each
    with an attachment weight of 1); every new node receives min(m, existing)
    edges from existing nodes chosen with probability proportional to their
    current degree weight.  Insertion order orients edges, so the result is
    acyclic by construction.
    """
    if d < 2:
        raise ValueError("need d >= 2")
    if m < 1:
        raise ValueError("need m >= 1")
    n_seed = min(m, d - 1)
    adj = np.zeros((d, d), dtype=np.int8)
    weight = np.zeros(d)
    weight[:n_seed] = 1.0
    for new in range(n_seed, d):
        k = min(m, new)
        probs = weight[:new] / weight[:new].sum()
        targets = rng.choice(new, size=k, replace=False, p=probs)
        for t in targets:
            adj[t, new] = 1
            weight[t] += 1
        weight[new] += k
    return Dag(adj)


def _v_structures(g: Dag) -> set[tuple[int, int, int]]:
    """Colliders a -> c <- b with a, b nonadjacent; returned as (a, c, b), a < b."""
    out = set()
    adj = g.adj
    skel = adj | adj.T
    for c in range(g.d):
        pa = np.flatnonzero(adj[:, c])
        for a, b in itertools.combinations(pa, 2):
            if not skel[a, b]:
                out.add((int(min(a, b)), int(c), int(max(a, b))))
    return out


def _apply_meek_rules(amat: np.ndarray) -> None:
    """Orient undirected edges in-place until no rule fires."""
    d = amat.shape[0]
    skel = (amat | amat.T).astype(bool)

    def directed(i, j):
        return amat[i, j] and not amat[j, i]

    def undirected(i, j):
        return amat[i, j] and amat[j, i]

    changed = True
    while changed:
        changed = False
        for a, b in itertools.permutations(range(d), 2):
            if not undirected(a, b):
                continue
            orient = False
            # R1: c -> a, a -- b, c and b nonadjacent  =>  a -> b
            for c in range(d):
                if directed(c, a) and not skel[c, b]:
                    orient = True
                    break
            # R2: a -> c -> b with a -- b  =>  a -> b
            if not orient:
                for c in range(d):
                    if directed(a, c) and directed(c, b):
                        orient = True
                        break
            # R3: a -- c -> b and a -- e -> b with c, e nonadjacent  =>  a -> b
            if not orient:
                into_b = [c for c in range(d) if undirected(a, c) and directed(c, b)]
                for c, e in itertools.combinations(into_b, 2):
                    if not skel[c, e]:
                        orient = True
                        break
            # R4: a -- c, c -> e -> b, c and b nonadjacent, a and e adjacent  =>  a -> b
            if not orient:
                for c in range(d):
                    if not (undirected(a, c) and not skel[c, b]):
                        continue
                    for e in range(d):
                        if directed(c, e) and directed(e, b) and skel[a, e]:
                            orient = True
                            break
                    if orient:
                        break
            if orient:
                amat[b, a] = 0
                changed = True


def dag_to_cpdag(g: Dag) -> Pdag:
    """Completed PDAG of the Markov equivalence class of ``g``.

    Skeleton plus v-structures, closed under the Meek orientation rules.
    """
    amat = (g.adj | g.adj.T).astype(np.int8)
    for a, c, b in _v_structures(g):
        amat[c, a] = 0
        amat[c, b] = 0
    _apply_meek_rules(amat)
    return Pdag(amat)


def save_edge_list(g: Dag, path) -> None:
    """Write the 'd=<n>' header followed by one zero-indexed 'i j' pair per line."""
    lines = [f"d={g.d}"]
    lines += [f"{i} {j}" for i, j in g.edges()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_edge_list(path) -> Dag:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("d="):
        raise ValueError(f"{path}: expected header line 'd=<n>'")
    d = int(lines[0][2:])
    adj = np.zeros((d, d), dtype=np.int8)
    for ln in lines[1:]:
        i, j = map(int, ln.split())
        adj[i, j] = 1
    return Dag(adj)


def load_adjacency_csv(path) -> Dag:
    """Read a d x d 0/1 adjacency matrix written as CSV rows."""
    adj = np.loadtxt(path, delimiter=",", ndmin=2)
    return Dag(adj.astype(np.int8))


def load_graph(path) -> Dag:
    """Load either edge-list text or adjacency CSV, sniffing the header."""
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("d="):
        return load_edge_list(path)
    return load_adjacency_csv(path)
