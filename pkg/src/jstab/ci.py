"""Constraint-based discovery with regime-aggregated CI decisions.

The learner is PC-flavored: skeleton elimination with neighbor-subset
conditioning, v-structure orientation from separating sets, then the Meek
closure. Each CI decision can pool evidence over regimes through a p-value
combiner, optionally overruled by a stability veto. A d-separation callable
may replace the statistical test wholesale; that oracle mode is a supported
fixture, not test scaffolding.
"""

import warnings
from itertools import combinations
from typing import Callable, Dict, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from .graphs import PartiallyDirectedGraph, meek_closure, orient_v_structures
from .stats import aggregate_pvalues, fisher_z_test
from .synth import MultiRegimeData

__all__ = [
    "CiDecision",
    "jstable_ci_decision",
    "skeleton_search",
    "orient",
    "discover_per_regime",
    "sepsets_to_json",
    "sepsets_from_json",
]


class CiDecision(NamedTuple):
    pair: Tuple[int, int]
    S: Tuple[int, ...]
    per_regime_p: Dict[str, float]
    p_sheaf: float
    dependent: bool
    vetoed: bool


def jstable_ci_decision(data_by_env: Mapping[str, np.ndarray], i: int, j: int,
                        S, alpha: float, kind: str = "fisher",
                        veto_ref: Optional[str] = None,
                        veto_aggregate: bool = False) -> CiDecision:
    """One aggregated CI verdict for (i, j | S) across regimes.

    Regimes too small for the test at this |S| are skipped with a warning.
    Two veto gates exist: the reference gate fires when the named regime
    looks independent while some regime rejects; the aggregate gate fires
    when the combined p looks independent while some regime rejects. Either
    way a fired veto forces the dependent verdict.
    """
    S = tuple(int(s) for s in S)
    ps = {}
    for rid, mat in data_by_env.items():
        mat = np.asarray(mat, dtype=float)
        if mat.shape[0] - len(S) - 3 <= 0:
            warnings.warn("regime %r too small for |S|=%d, skipped"
                          % (rid, len(S)))
            continue
        ps[rid] = fisher_z_test(mat, i, j, S)
    if not ps:
        raise ValueError("no regime large enough to test (%d, %d | %r)"
                         % (i, j, S))
    p_sheaf = aggregate_pvalues(list(ps.values()), kind)
    any_rejects = any(p <= alpha for p in ps.values())
    vetoed = False
    if veto_ref is not None:
        if veto_ref not in ps:
            raise ValueError("reference regime %r unavailable" % veto_ref)
        vetoed = ps[veto_ref] > alpha and any_rejects
    elif veto_aggregate:
        vetoed = p_sheaf > alpha and any_rejects
    dependent = (p_sheaf <= alpha) or vetoed
    return CiDecision(pair=(i, j), S=S, per_regime_p=ps, p_sheaf=p_sheaf,
                      dependent=dependent, vetoed=vetoed)


def skeleton_search(data_by_env, alpha: float = 0.01, depth: int = 3,
                    kind: str = "fisher", veto_ref: Optional[str] = None,
                    veto_aggregate: bool = False,
                    independence_oracle: Optional[Callable] = None,
                    n_vars: Optional[int] = None):
    """PC-style skeleton elimination with level-synchronous removals.

    Neighbor sets are frozen within each conditioning-set size, so the
    outcome does not depend on pair iteration order. Returns the symmetric
    adjacency plus the separating set recorded for every removed pair.
    independence_oracle(i, j, S) -> bool replaces the statistical decision
    when given (n_vars then required).
    """
    if independence_oracle is not None:
        if n_vars is None:
            raise ValueError("oracle mode needs n_vars")
        d = n_vars

        def independent(i, j, S):
            return bool(independence_oracle(i, j, set(S)))
    else:
        widths = {np.asarray(m).shape[1] for m in data_by_env.values()}
        if len(widths) != 1:
            raise ValueError("regimes disagree on variable count")
        d = widths.pop()

        def independent(i, j, S):
            dec = jstable_ci_decision(data_by_env, i, j, S, alpha, kind,
                                      veto_ref, veto_aggregate)
            return not dec.dependent

    adj = np.ones((d, d), dtype=bool)
    np.fill_diagonal(adj, False)
    sepsets: Dict[frozenset, Tuple[int, ...]] = {}
    for level in range(depth + 1):
        neighbors = [frozenset(np.flatnonzero(adj[v]).tolist())
                     for v in range(d)]
        if all(len(nb) - 1 < level for nb in neighbors):
            break
        removals = []
        for i in range(d):
            for j in range(i + 1, d):
                if not adj[i, j]:
                    continue
                tried = set()
                hit = None
                for base in (neighbors[i] - {j}, neighbors[j] - {i}):
                    for S in combinations(sorted(base), level):
                        if S in tried:
                            continue
                        tried.add(S)
                        if independent(i, j, S):
                            hit = S
                            break
                    if hit is not None:
                        break
                if hit is not None:
                    removals.append((i, j))
                    sepsets[frozenset({i, j})] = hit
        for i, j in removals:
            adj[i, j] = adj[j, i] = False
    return adj, sepsets


def orient(skel: np.ndarray, sepsets: Mapping) -> PartiallyDirectedGraph:
    """V-structures from separating sets, then the Meek closure."""
    return meek_closure(orient_v_structures(skel, sepsets))


def discover_per_regime(data: MultiRegimeData, alpha: float, depth: int,
                        kind: str = "fisher"):
    """Independent single-regime discovery, one graph per regime.

    A failing regime lands in the error map; the rest are unaffected.
    """
    graphs: Dict[str, PartiallyDirectedGraph] = {}
    errors: Dict[str, str] = {}
    for reg in data.regimes:
        try:
            skel, seps = skeleton_search({reg.regime_id: reg.data},
                                         alpha=alpha, depth=depth, kind=kind)
            graphs[reg.regime_id] = orient(skel, seps)
        except Exception as exc:
            errors[reg.regime_id] = str(exc)
    return graphs, errors


def sepsets_to_json(sepsets: Mapping) -> Dict[str, list]:
    """{"i,j": [k, ...]} with i < j."""
    out = {}
    for pair, S in sepsets.items():
        i, j = sorted(pair)
        out["%d,%d" % (i, j)] = [int(k) for k in S]
    return out


def sepsets_from_json(blob: Mapping) -> Dict[frozenset, Tuple[int, ...]]:
    out = {}
    for key, S in blob.items():
        i, j = (int(x) for x in key.split(","))
        out[frozenset({i, j})] = tuple(int(k) for k in S)
    return out
