"""Graph types, skeleton invariants, d-separation, and orientation rules.

Adjacency convention everywhere: a boolean d x d matrix with adj[i, j] = True
meaning the directed edge i -> j; row index is the source, column the target.
Dense matrices are intentional, the toolkit targets d up to about 100.
"""

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "DirectedGraph",
    "Dag",
    "PartiallyDirectedGraph",
    "FVector",
    "is_acyclic",
    "topological_order",
    "skeleton",
    "common_neighbors",
    "f_vector",
    "d_separated",
    "orient_v_structures",
    "meek_closure",
    "dag_to_cpdag",
    "write_adjacency_csv",
    "read_adjacency_csv",
]


def _as_bool_matrix(adj) -> np.ndarray:
    a = np.asarray(adj, dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be a square matrix")
    return a


def _default_labels(d: int) -> Tuple[str, ...]:
    return tuple("X%d" % k for k in range(d))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Directed graph over d labeled variables. Immutable after construction."""

    adj: np.ndarray
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        a = _as_bool_matrix(self.adj)
        if a.diagonal().any():
            raise ValueError("self-loops are not allowed")
        labels = tuple(self.labels) if self.labels else _default_labels(a.shape[0])
        if len(labels) != a.shape[0]:
            raise ValueError("labels length must equal variable count")
        object.__setattr__(self, "adj", _freeze(a))
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    def n_edges(self) -> int:
        return int(self.adj.sum())


class Dag(DirectedGraph):
    """DirectedGraph whose acyclicity is verified by topological sort."""

    def __post_init__(self):
        super().__post_init__()
        if topological_order(self.adj) is None:
            raise ValueError("graph contains a directed cycle")

    def topological_order(self) -> Sequence[int]:
        order = topological_order(self.adj)
        assert order is not None
        return order

    def parents(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adj[:, v])


@dataclass(frozen=True, eq=False)
class PartiallyDirectedGraph:
    """Mixed graph: a directed part and a symmetric undirected part, disjoint per pair."""

    directed: np.ndarray
    undirected: np.ndarray
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        dmat = _as_bool_matrix(self.directed)
        umat = _as_bool_matrix(self.undirected)
        if dmat.shape != umat.shape:
            raise ValueError("directed and undirected parts must share a shape")
        if dmat.diagonal().any() or umat.diagonal().any():
            raise ValueError("self-loops are not allowed")
        if not np.array_equal(umat, umat.T):
            raise ValueError("undirected part must be symmetric")
        if ((dmat | dmat.T) & umat).any():
            raise ValueError("a pair cannot be both directed and undirected")
        labels = tuple(self.labels) if self.labels else _default_labels(dmat.shape[0])
        if len(labels) != dmat.shape[0]:
            raise ValueError("labels length must equal variable count")
        object.__setattr__(self, "directed", _freeze(dmat))
        object.__setattr__(self, "undirected", _freeze(umat))
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return self.directed.shape[0]

    def as_adjacency(self) -> np.ndarray:
        """Directed edges one-way, undirected edges encoded in both directions."""
        return self.directed | self.undirected


class FVector(NamedTuple):
    """Face counts of the clique complex up to triangles, with derived invariants."""

    f0: int
    f1: int
    f2: int
    chi: int
    b1: int
    c: int


def _adj_of(g) -> np.ndarray:
    if isinstance(g, PartiallyDirectedGraph):
        return g.as_adjacency()
    if isinstance(g, DirectedGraph):
        return g.adj
    return _as_bool_matrix(g)


def topological_order(adj) -> Optional[list]:
    """Kahn's algorithm; returns None when no topological order exists."""
    a = _adj_of(adj)
    d = a.shape[0]
    indeg = a.sum(axis=0).astype(int)
    ready = sorted(np.flatnonzero(indeg == 0).tolist())
    order = []
    indeg = indeg.copy()
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in np.flatnonzero(a[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    return order if len(order) == d else None


def is_acyclic(g) -> bool:
    """True iff a topological order exists."""
    return topological_order(_adj_of(g)) is not None


def skeleton(g) -> np.ndarray:
    """Undirected view: symmetric boolean matrix with zero diagonal."""
    a = _adj_of(g)
    s = a | a.T
    np.fill_diagonal(s, False)
    return s


def common_neighbors(skel, u: int, v: int) -> int:
    """|Gamma(u) & Gamma(v)| in a skeleton, iterating over the smaller set."""
    if u == v:
        raise ValueError("common_neighbors needs two distinct endpoints")
    s = _as_bool_matrix(skel)
    small, other = (u, v) if s[u].sum() <= s[v].sum() else (v, u)
    return int(s[other][np.flatnonzero(s[small])].sum())


def _component_count(skel: np.ndarray) -> int:
    """Union-find over skeleton edges."""
    d = skel.shape[0]
    parent = list(range(d))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in zip(*np.nonzero(np.triu(skel, k=1))):
        ru, rv = find(int(u)), find(int(v))
        if ru != rv:
            parent[ru] = rv
    return len({find(x) for x in range(d)})


def f_vector(skel) -> FVector:
    """Vertex, edge, and triangle counts with Euler characteristic and cycle rank."""
    s = _as_bool_matrix(skel)
    if not np.array_equal(s, s.T) or s.diagonal().any():
        raise ValueError("skeleton must be symmetric with zero diagonal")
    f0 = s.shape[0]
    f1 = int(np.triu(s, k=1).sum())
    a = s.astype(np.int64)
    f2 = int(np.trace(a @ a @ a)) // 6
    c = _component_count(s)
    chi = f0 - f1 + f2
    b1 = f1 - f0 + c
    return FVector(f0=f0, f1=f1, f2=f2, chi=chi, b1=b1, c=c)


def d_separated(dag, i: int, j: int, S: Iterable[int]) -> bool:
    """d-separation of i and j given S, by reachability over active trails.

    The ball walks the graph carrying the direction it arrived from; collider
    openings require an ancestor of S. This is the standard linear-time
    formulation; tests compare it against exhaustive path enumeration.
    """
    a = _adj_of(dag)
    d = a.shape[0]
    S = set(int(s) for s in S)
    for node in (i, j, *S):
        if not 0 <= node < d:
            raise IndexError("node index out of range")
    if i == j or i in S or j in S:
        raise ValueError("endpoints must be distinct and outside S")

    parents = [np.flatnonzero(a[:, v]) for v in range(d)]
    children = [np.flatnonzero(a[v]) for v in range(d)]

    # Ancestors of S, S included, found by walking parent links.
    anc = set(S)
    stack = list(S)
    while stack:
        v = stack.pop()
        for p in parents[v]:
            if p not in anc:
                anc.add(int(p))
                stack.append(int(p))

    UP, DOWN = 0, 1  # arrived from a child / from a parent
    visited = set()
    queue = [(i, UP)]
    while queue:
        v, direction = queue.pop()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v == j:
            return False
        if direction == UP and v not in S:
            for p in parents[v]:
                queue.append((int(p), UP))
            for cnode in children[v]:
                queue.append((int(cnode), DOWN))
        elif direction == DOWN:
            if v not in S:
                for cnode in children[v]:
                    queue.append((int(cnode), DOWN))
            if v in anc:
                for p in parents[v]:
                    queue.append((int(p), UP))
    return True


def _sepset_lookup(sepsets: Mapping, i: int, j: int):
    key = frozenset((i, j))
    if key in sepsets:
        return sepsets[key]
    for alt in ((i, j), (j, i)):
        if alt in sepsets:
            return sepsets[alt]
    return None


def orient_v_structures(skel, sepsets: Mapping) -> PartiallyDirectedGraph:
    """Orient unshielded triples i - k - j with k outside sepset(i, j) as i -> k <- j.

    Sepsets may be keyed by frozenset or by tuple in either order. Pairs with
    no recorded sepset are skipped. When two triples disagree on a direction
    the first orientation (lowest triple in sorted order) wins.
    """
    s = _as_bool_matrix(skel)
    d = s.shape[0]
    directed = np.zeros((d, d), dtype=bool)
    undirected = s.copy()
    for i in range(d):
        for j in range(i + 1, d):
            if s[i, j]:
                continue
            sep = _sepset_lookup(sepsets, i, j)
            if sep is None:
                continue
            sep = set(int(x) for x in sep)
            for k in np.flatnonzero(s[i] & s[j]):
                k = int(k)
                if k in sep:
                    continue
                for src in (i, j):
                    if directed[k, src]:
                        continue  # conflicting earlier orientation stands
                    directed[src, k] = True
                    undirected[src, k] = undirected[k, src] = False
    return PartiallyDirectedGraph(directed=directed, undirected=undirected)


def _orient(directed, undirected, u, v) -> bool:
    if undirected[u, v] and not directed[v, u]:
        directed[u, v] = True
        undirected[u, v] = undirected[v, u] = False
        return True
    return False


def meek_closure(pdag: PartiallyDirectedGraph) -> PartiallyDirectedGraph:
    """Apply the four Meek orientation rules to fixpoint.

    R1: a -> b, b - c, a and c nonadjacent        => b -> c
    R2: a -> c -> b, a - b                        => a -> b
    R3: a - b, a - c -> b, a - d -> b, c/d nonadj => a -> b
    R4: a - b, a - c -> d -> b, a/d adjacent,
        b and c nonadjacent                       => a -> b

    Never creates a new v-structure or a two-cycle; idempotent.
    """
    directed = pdag.directed.copy()
    undirected = pdag.undirected.copy()
    d = pdag.d
    changed = True
    while changed:
        changed = False
        adjacent = directed | directed.T | undirected
        # R1
        for b in range(d):
            for c in np.flatnonzero(undirected[b]):
                c = int(c)
                fires = directed[:, b] & ~adjacent[:, c]
                fires[c] = False
                if fires.any():
                    changed |= _orient(directed, undirected, b, c)
        # R2
        for a in range(d):
            for b in np.flatnonzero(undirected[a]):
                b = int(b)
                if (directed[a] & directed[:, b]).any():
                    changed |= _orient(directed, undirected, a, b)
        # R3
        for a in range(d):
            for b in np.flatnonzero(undirected[a]):
                b = int(b)
                cands = np.flatnonzero(undirected[a] & directed[:, b])
                hit = False
                for x in range(len(cands)):
                    for y in range(x + 1, len(cands)):
                        if not adjacent[cands[x], cands[y]]:
                            hit = True
                            break
                    if hit:
                        break
                if hit:
                    changed |= _orient(directed, undirected, a, b)
        # R4
        for a in range(d):
            for b in np.flatnonzero(undirected[a]):
                b = int(b)
                hit = False
                for c in np.flatnonzero(undirected[a]):
                    c = int(c)
                    if c == b or adjacent[b, c]:
                        continue
                    if (directed[c] & directed[:, b] & adjacent[a]).any():
                        hit = True
                        break
                if hit:
                    changed |= _orient(directed, undirected, a, b)
        if changed:
            continue
    return PartiallyDirectedGraph(directed=directed, undirected=undirected,
                                  labels=pdag.labels)


def dag_to_cpdag(dag) -> PartiallyDirectedGraph:
    """Equivalence-class representative: skeleton + the DAG's v-structures + Meek."""
    a = _adj_of(dag)
    s = skeleton(a)
    d = a.shape[0]
    directed = np.zeros((d, d), dtype=bool)
    undirected = s.copy()
    for k in range(d):
        ps = np.flatnonzero(a[:, k])
        for x in range(len(ps)):
            for y in range(x + 1, len(ps)):
                u, v = int(ps[x]), int(ps[y])
                if not s[u, v]:
                    for src in (u, v):
                        directed[src, k] = True
                        undirected[src, k] = undirected[k, src] = False
    labels = dag.labels if isinstance(dag, DirectedGraph) else ()
    seed = PartiallyDirectedGraph(directed=directed, undirected=undirected,
                                  labels=labels)
    return meek_closure(seed)


def write_adjacency_csv(path, adj, labels=None) -> None:
    """Header row of labels, then d rows of 0/1; row = source, column = target."""
    a = _adj_of(adj)
    d = a.shape[0]
    if labels is None:
        labels = (adj.labels if isinstance(adj, (DirectedGraph, PartiallyDirectedGraph))
                  else _default_labels(d))
    if len(labels) != d:
        raise ValueError("labels length must equal variable count")
    with open(path, "w") as fh:
        fh.write(",".join(str(x) for x in labels) + "\n")
        for row in a.astype(int):
            fh.write(",".join(str(int(x)) for x in row) + "\n")


def read_adjacency_csv(path):
    """Inverse of write_adjacency_csv. Returns (bool matrix, label list)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    labels = lines[0].split(",")
    rows = [[int(x) for x in ln.split(",")] for ln in lines[1:]]
    a = np.asarray(rows, dtype=bool)
    if a.shape != (len(labels), len(labels)):
        raise ValueError("adjacency CSV shape does not match its header")
    return a, labels
