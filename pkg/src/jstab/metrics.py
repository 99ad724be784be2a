"""Structure-accuracy and stability metrics.

Directed scoring works on ordered node pairs, skeleton scoring on unordered
pairs. A predicted undirected edge over a directed true edge counts as
skeleton-correct plus one orientation flip; this choice is applied uniformly.
"""

from typing import Iterable, NamedTuple, Set, Tuple

import numpy as np

from .graphs import Dag, DirectedGraph, PartiallyDirectedGraph, skeleton

__all__ = [
    "Confusion",
    "ShdBreakdown",
    "confusion",
    "shd",
    "jaccard",
    "stability_index",
    "soundness_completeness",
    "metric_block",
]


class Confusion(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float


class ShdBreakdown(NamedTuple):
    skeleton_diff: int
    orientation_flips: int
    shd: int
    dir_sym: int


def _coerce(g) -> np.ndarray:
    if isinstance(g, PartiallyDirectedGraph):
        return g.as_adjacency()
    if isinstance(g, DirectedGraph):
        return np.asarray(g.adj, dtype=bool)
    a = np.asarray(g, dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    return a


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def confusion(pred, truth, mode: str = "directed") -> Confusion:
    p = _coerce(pred)
    t = _coerce(truth)
    if p.shape != t.shape:
        raise ValueError("prediction and truth differ in dimension")
    if mode == "skeleton":
        p, t = np.triu(skeleton(p), k=1), np.triu(skeleton(t), k=1)
        total = p.shape[0] * (p.shape[0] - 1) // 2
    elif mode == "directed":
        total = p.shape[0] * (p.shape[0] - 1)
    else:
        raise ValueError("mode must be 'directed' or 'skeleton'")
    tp = int((p & t).sum())
    fp = int((p & ~t).sum())
    fn = int((~p & t).sum())
    tn = total - tp - fp - fn
    prec = _ratio(tp, tp + fp)
    rec = _ratio(tp, tp + fn)
    f1 = _ratio(2 * prec * rec, prec + rec) if (prec + rec) else 0.0
    return Confusion(tp=tp, fp=fp, fn=fn, tn=tn,
                     precision=prec, recall=rec, f1=f1)


def shd(pred, truth, mode: str = "directed") -> ShdBreakdown:
    """Structural Hamming distance split into skeleton errors and flips."""
    p = _coerce(pred)
    t = _coerce(truth)
    if p.shape != t.shape:
        raise ValueError("prediction and truth differ in dimension")
    if mode not in ("directed", "skeleton"):
        raise ValueError("mode must be 'directed' or 'skeleton'")
    sp, st_ = skeleton(p), skeleton(t)
    upper = np.triu(np.ones_like(sp), k=1).astype(bool)
    skel_diff = int((upper & (sp ^ st_)).sum())
    flips = 0
    if mode == "directed":
        shared = upper & sp & st_
        for i, j in zip(*np.nonzero(shared)):
            if (p[i, j], p[j, i]) != (t[i, j], t[j, i]):
                flips += 1
    return ShdBreakdown(skeleton_diff=skel_diff, orientation_flips=flips,
                        shd=skel_diff + flips, dir_sym=skel_diff + 2 * flips)


def jaccard(a, b) -> float:
    """Overlap of off-diagonal edge sets; 1.0 when both are empty."""
    x = _coerce(a).copy()
    y = _coerce(b).copy()
    np.fill_diagonal(x, False)
    np.fill_diagonal(y, False)
    union = int((x | y).sum())
    if union == 0:
        return 1.0
    return int((x & y).sum()) / union


def stability_index(scores_by_regime) -> float:
    """1 - mean over edges of Var across regimes, normalized by the run max.

    Rows are edges, columns regimes. The normalizer is the largest per-edge
    variance observed in this run, plus 1e-9.
    """
    s = np.atleast_2d(np.asarray(scores_by_regime, dtype=float))
    if s.size == 0:
        raise ValueError("need at least one edge and one regime")
    v = s.var(axis=1)
    stab = 1.0 - float(np.mean(v / (v.max() + 1e-9)))
    return float(np.clip(stab, 0.0, 1.0))


def _normalize_statements(ciJ) -> Set[Tuple[int, int, frozenset]]:
    out = set()
    for stmt in ciJ:
        try:
            x, j, Z = stmt
            x, j = int(x), int(j)
            Z = frozenset(int(z) for z in Z)
        except (TypeError, ValueError):
            raise ValueError("CI statements must look like (x, j, Z)") from None
        if x == j or x in Z or j in Z:
            raise ValueError("malformed CI statement: %r" % (stmt,))
        out.add((x, j, Z))
    return out


def _implied_local_markov(dag: Dag) -> Set[Tuple[int, int, frozenset]]:
    adj = dag.adj
    d = dag.d
    implied = set()
    for j in range(d):
        pa = frozenset(int(x) for x in np.flatnonzero(adj[:, j]))
        desc = {j}
        stack = [j]
        while stack:
            u = stack.pop()
            for c in np.flatnonzero(adj[u]):
                c = int(c)
                if c not in desc:
                    desc.add(c)
                    stack.append(c)
        for x in range(d):
            if x != j and x not in pa and x not in desc:
                implied.add((x, j, pa))
    return implied


def soundness_completeness(graph: Dag, ciJ: Iterable) -> Tuple[float, float]:
    """Fraction of graph-implied CIs absent from ciJ, and vice versa.

    Implied statements are the local Markov ones: each node given its parents
    against each non-descendant non-parent. Both fractions use 0/0 -> 0.
    """
    stated = _normalize_statements(ciJ)
    implied = _implied_local_markov(graph)
    delta_sound = _ratio(len(implied - stated), len(implied))
    delta_complete = _ratio(len(stated - implied), len(stated))
    return float(delta_sound), float(delta_complete)


def metric_block(pred, truth, mode: str = "directed") -> dict:
    """Flat dict of the standard metrics, ready for report.json."""
    c = confusion(pred, truth, mode=mode)
    b = shd(pred, truth, mode=mode)
    return {
        "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
        "precision": c.precision, "recall": c.recall, "f1": c.f1,
        "shd": b.shd, "skeleton_diff": b.skeleton_diff,
        "orientation_flips": b.orientation_flips,
    }
