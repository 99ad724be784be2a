"""Brute-force reference implementations used only by the test suite.

Everything here is deliberately naive: exhaustive path enumeration,
full orientation enumeration, triple loops. The library must agree with
these on small instances; none of this code is imported by the package.
"""

from itertools import combinations

import numpy as np


def random_dag_adj(rng, d, n_edges=None, p_edge=None):
    """Random DAG adjacency: edges point from earlier to later in a random order."""
    order = rng.permutation(d)
    pairs = [(order[a], order[b]) for a in range(d) for b in range(a + 1, d)]
    adj = np.zeros((d, d), dtype=bool)
    if n_edges is None:
        p = 0.4 if p_edge is None else p_edge
        for (u, v) in pairs:
            if rng.random() < p:
                adj[u, v] = True
    else:
        idx = rng.choice(len(pairs), size=min(n_edges, len(pairs)), replace=False)
        for k in idx:
            u, v = pairs[k]
            adj[u, v] = True
    return adj


def has_cycle_dfs(adj):
    """Exhaustive cycle search by coloring DFS."""
    d = adj.shape[0]
    color = [0] * d  # 0 white, 1 gray, 2 black

    def visit(u):
        color[u] = 1
        for v in np.flatnonzero(adj[u]):
            if color[v] == 1:
                return True
            if color[v] == 0 and visit(v):
                return True
        color[u] = 2
        return False

    return any(color[u] == 0 and visit(u) for u in range(d))


def descendants_of(adj, v):
    """All nodes reachable from v by directed edges, v included."""
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in np.flatnonzero(adj[u]):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def _simple_paths(sym, i, j):
    """All simple undirected paths from i to j in a symmetric adjacency."""
    paths = []
    stack = [(i, [i])]
    while stack:
        u, path = stack.pop()
        if u == j:
            paths.append(path)
            continue
        for w in np.flatnonzero(sym[u]):
            if w not in path:
                stack.append((w, path + [w]))
    return paths


def path_enum_d_separated(adj, i, j, S):
    """d-separation by checking every undirected path with the blocking rules.

    A path is blocked given S if some intermediate node v is a collider on the
    path with neither v nor any descendant of v in S, or a non-collider in S.
    """
    S = set(S)
    sym = adj | adj.T
    for path in _simple_paths(sym, i, j):
        active = True
        for k in range(1, len(path) - 1):
            prev, v, nxt = path[k - 1], path[k], path[k + 1]
            collider = adj[prev, v] and adj[nxt, v]
            if collider:
                if not (descendants_of(adj, v) & S):
                    active = False
                    break
            else:
                if v in S:
                    active = False
                    break
        if active:
            return False
    return True


def v_structure_set(adj):
    """Unshielded colliders as (min parent, collider, max parent) triples."""
    d = adj.shape[0]
    sym = adj | adj.T
    out = set()
    for k in range(d):
        parents = np.flatnonzero(adj[:, k])
        for a, b in combinations(parents, 2):
            if not sym[a, b]:
                out.add((min(a, b), k, max(a, b)))
    return out


def mec_cpdag(adj):
    """CPDAG of a DAG by enumerating every orientation of its skeleton.

    Members of the Markov equivalence class are the acyclic orientations with
    the same v-structures. An edge is compelled iff all members agree on it.
    Returns (directed, undirected) boolean matrices. Exponential in the edge
    count; keep inputs small.
    """
    d = adj.shape[0]
    sym = adj | adj.T
    edges = [(u, v) for u in range(d) for v in range(u + 1, d) if sym[u, v]]
    target_vs = v_structure_set(adj)
    members = []
    for bits in range(1 << len(edges)):
        cand = np.zeros((d, d), dtype=bool)
        for idx, (u, v) in enumerate(edges):
            if bits >> idx & 1:
                cand[u, v] = True
            else:
                cand[v, u] = True
        if has_cycle_dfs(cand):
            continue
        if v_structure_set(cand) != target_vs:
            continue
        members.append(cand)
    assert members, "a DAG is always a member of its own class"
    directed = np.zeros((d, d), dtype=bool)
    undirected = np.zeros((d, d), dtype=bool)
    for (u, v) in edges:
        fwd = all(m[u, v] for m in members)
        bwd = all(m[v, u] for m in members)
        if fwd:
            directed[u, v] = True
        elif bwd:
            directed[v, u] = True
        else:
            undirected[u, v] = undirected[v, u] = True
    return directed, undirected


def naive_common_neighbors(skel, u, v):
    d = skel.shape[0]
    return sum(1 for w in range(d) if skel[u, w] and skel[v, w])


def naive_triangle_count(skel):
    d = skel.shape[0]
    count = 0
    for a, b, c in combinations(range(d), 3):
        if skel[a, b] and skel[b, c] and skel[a, c]:
            count += 1
    return count


def naive_component_count(skel):
    """Connected components by BFS flood fill."""
    d = skel.shape[0]
    seen = set()
    comps = 0
    for s in range(d):
        if s in seen:
            continue
        comps += 1
        stack = [s]
        seen.add(s)
        while stack:
            u = stack.pop()
            for w in np.flatnonzero(skel[u]):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
    return comps
