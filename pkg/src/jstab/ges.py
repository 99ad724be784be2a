"""Greedy score-based structure search with topology and drift penalties.

One engine serves three configurations: plain BIC hill-climbing, the same
search with skeleton-complexity penalties (edge and triangle counts), and
the regime-aware variant that additionally charges coefficient drift across
environments plus a chart-overlap divergence on each node's local
neighborhood. Moves live in DAG space; covered reversals stand in for
equivalence-class operators.
"""

import dataclasses
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .graphs import Dag, common_neighbors, f_vector, skeleton
from .stats import (
    DegenerateDataError,
    GaussianFit,
    bic_local,
    default_ridge,
    energy_distance,
    gaussian_sym_kl,
    mmd,
    ols_fit,
)

SHEAF_METRICS = ("mmd", "energy", "gauss_kl")
_ACCEPT_TOL = 1e-9
_KIND_RANK = {"add": 0, "delete": 1, "reverse": 2}


@dataclass(frozen=True)
class ScoreConfig:
    """Penalty weights and structural limits shared by the search family.

    All lambdas at zero reduce the score to plain per-node BIC. `seed`
    fixes the row-split substreams used by the chart-overlap penalty;
    `pseudo_envs` is the fold count used to fabricate regimes when the
    input carries a single environment.
    """

    lambda_top: float = 0.0
    lambda_tri: float = 0.0
    lambda_sheaf: float = 0.0
    lambda_j: float = 0.0
    d_max: int = 32
    sheaf_metric: str = "energy"
    sheaf_splits: int = 3
    sheaf_min_overlap: int = 1
    standardize: bool = True
    pseudo_envs: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda_top", "lambda_tri", "lambda_sheaf", "lambda_j"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_max < 1:
            raise ValueError("d_max must be at least 1")
        if self.sheaf_metric not in SHEAF_METRICS:
            raise ValueError(f"sheaf_metric must be one of {SHEAF_METRICS}")
        if self.sheaf_splits < 1:
            raise ValueError("sheaf_splits must be at least 1")
        if self.sheaf_min_overlap < 1:
            raise ValueError("sheaf_min_overlap must be at least 1")
        if self.pseudo_envs < 2:
            raise ValueError("pseudo_envs must be at least 2")


class ScoreDelta(NamedTuple):
    """One candidate move and its score change, split by component.

    total = d_bic - lambda_top*d_f1 - lambda_tri*d_f2
            - lambda_sheaf*d_sheaf - lambda_j*d_j
    """

    total: float
    d_bic: float
    d_f1: int
    d_f2: int
    d_sheaf: float
    d_j: float
    move: Tuple[str, int, int]


class SearchResult(NamedTuple):
    dag: Dag
    log: Tuple[ScoreDelta, ...]
    score: float
    base_score: float


class BootstrapFrequencies(NamedTuple):
    directed: np.ndarray
    undirected: np.ndarray
    n_boot: int


def _regime_matrices(data) -> list:
    """Accepts MultiRegimeData, a single matrix, an env->matrix mapping, or
    a sequence of matrices. Mapping order is insertion order."""
    if hasattr(data, "regimes"):
        mats = [np.asarray(r.data, dtype=float) for r in data.regimes]
    elif isinstance(data, Mapping):
        mats = [np.asarray(m, dtype=float) for m in data.values()]
    elif isinstance(data, np.ndarray):
        mats = [np.asarray(data, dtype=float)]
    else:
        mats = [np.asarray(m, dtype=float) for m in data]
    if not mats:
        raise ValueError("need at least one regime")
    widths = {m.shape[1] for m in mats}
    if len(widths) != 1:
        raise ValueError("all regimes must share the same column count")
    return mats


def _standardize(m: np.ndarray) -> np.ndarray:
    sd = m.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)  # constant columns fail later in BIC
    return (m - m.mean(axis=0)) / sd


def _prep(data, cfg: ScoreConfig):
    """Pooled matrix plus the environment list the drift penalty runs on."""
    mats = _regime_matrices(data)
    if cfg.standardize:
        mats = [_standardize(m) for m in mats]
    pooled = mats[0] if len(mats) == 1 else np.vstack(mats)
    d = pooled.shape[1]
    if pooled.shape[0] <= d + 2:
        raise ValueError("need more pooled rows than variables + 2")
    envs = None
    if cfg.lambda_j > 0:
        if len(mats) >= 2:
            envs = mats
        else:
            k = min(cfg.pseudo_envs, pooled.shape[0])
            envs = np.array_split(pooled, k, axis=0)
    return pooled, envs


def tces_jstab_local(data_by_env, v: int, parents) -> float:
    """Sum of pairwise L2 distances between per-regime parent coefficients.

    Fits v ~ parents separately in each regime (plain least squares, ridge
    retry on singular designs) on the data exactly as given. Zero for a
    single regime or an empty parent set.
    """
    mats = _regime_matrices(data_by_env)
    parents = tuple(sorted(int(p) for p in parents))
    if not parents or len(mats) == 1:
        return 0.0
    betas = []
    for m in mats:
        if m.shape[0] < len(parents) + 2:
            raise DegenerateDataError("regime too small for the parent set")
        X = m[:, parents]
        y = m[:, v]
        try:
            fit = ols_fit(X, y)
        except np.linalg.LinAlgError:
            try:
                fit = ols_fit(X, y, ridge=default_ridge(X))
            except np.linalg.LinAlgError:
                raise DegenerateDataError(
                    "regime design stayed singular after ridge retry") from None
        betas.append(fit.coefficients)
    total = 0.0
    for a in range(len(betas)):
        for b in range(a + 1, len(betas)):
            total += float(np.linalg.norm(betas[a] - betas[b]))
    return total


def _divergence(a: np.ndarray, b: np.ndarray, metric: str) -> float:
    if metric == "energy":
        return energy_distance(a, b)
    if metric == "mmd":
        return mmd(a, b)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    return gaussian_sym_kl(GaussianFit(a.mean(axis=0), cov_a),
                           GaussianFit(b.mean(axis=0), cov_b))


def tces_sheaf_local(data, v: int, parents, cfg: ScoreConfig) -> float:
    """Chart-overlap divergence over the star cover of {v} + parents.

    Each chart omits one member of the cover; a chart pair is scored on its
    overlap columns by averaging the configured divergence between the two
    halves of `sheaf_splits` random row splits. Splits are driven by a
    substream keyed on (seed, v, parents) so repeated calls agree.
    """
    parents = tuple(sorted(int(p) for p in parents))
    if not parents:
        return 0.0
    members = (int(v),) + parents
    X = np.asarray(data, dtype=float)[:, members]
    n, k = X.shape
    if n < 4:
        return 0.0
    pairs = []
    for i in range(k):
        for j in range(i + 1, k):
            overlap = [t for t in range(k) if t != i and t != j]
            if len(overlap) >= cfg.sheaf_min_overlap:
                pairs.append(overlap)
    if not pairs:
        return 0.0
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(cfg.seed, int(v)) + parents))
    half = n // 2
    total = 0.0
    for overlap in pairs:
        vals = []
        for _ in range(cfg.sheaf_splits):
            perm = rng.permutation(n)
            a = X[np.ix_(perm[:half], overlap)]
            b = X[np.ix_(perm[half:], overlap)]
            vals.append(_divergence(a, b, cfg.sheaf_metric))
        total += float(np.mean(vals))
    return total


def _has_path(adj: np.ndarray, src: int, dst: int) -> bool:
    """Directed reachability src -> dst (used as the acyclicity guard)."""
    if src == dst:
        return True
    seen = np.zeros(adj.shape[0], dtype=bool)
    stack = [src]
    seen[src] = True
    while stack:
        u = stack.pop()
        for w in np.flatnonzero(adj[u]):
            if w == dst:
                return True
            if not seen[w]:
                seen[w] = True
                stack.append(int(w))
    return False


class _Scorer:
    """Memoized local scores over a fixed prepared dataset."""

    def __init__(self, data, cfg: ScoreConfig):
        self.cfg = cfg
        self.pooled, self.envs = _prep(data, cfg)
        self.d = self.pooled.shape[1]
        self._bic = {}
        self._sheaf = {}
        self._jpen = {}

    def bic(self, v: int, parents: tuple) -> float:
        key = (v, parents)
        if key not in self._bic:
            self._bic[key] = bic_local(self.pooled, v, parents)
        return self._bic[key]

    def sheaf(self, v: int, parents: tuple) -> float:
        if self.cfg.lambda_sheaf == 0 or not parents:
            return 0.0
        key = (v, parents)
        if key not in self._sheaf:
            self._sheaf[key] = tces_sheaf_local(self.pooled, v, parents,
                                                self.cfg)
        return self._sheaf[key]

    def jpen(self, v: int, parents: tuple) -> float:
        if self.cfg.lambda_j == 0 or not parents:
            return 0.0
        key = (v, parents)
        if key not in self._jpen:
            self._jpen[key] = tces_jstab_local(self.envs, v, parents)
        return self._jpen[key]

    def node_deltas(self, v: int, old: tuple, new: tuple):
        d_bic = self.bic(v, new) - self.bic(v, old)
        d_sheaf = self.sheaf(v, new) - self.sheaf(v, old)
        d_j = self.jpen(v, new) - self.jpen(v, old)
        return d_bic, d_sheaf, d_j

    def delta(self, adj: np.ndarray, move) -> ScoreDelta:
        """Score change for one move against the current adjacency.

        Raises ValueError for malformed or cycle-creating moves; an
        indegree-cap violation instead comes back with total = -inf so the
        search can skip it without special-casing.
        """
        cfg = self.cfg
        kind, u, v = move
        u, v = int(u), int(v)
        if kind not in _KIND_RANK:
            raise ValueError(f"unknown move kind {kind!r}")
        if u == v:
            raise ValueError("move endpoints must differ")
        parents_of = lambda w: tuple(sorted(np.flatnonzero(adj[:, w]).tolist()))
        if kind == "add":
            if adj[u, v] or adj[v, u]:
                raise ValueError("edge already present")
            if _has_path(adj, v, u):
                raise ValueError("addition would create a cycle")
            old = parents_of(v)
            if len(old) + 1 > cfg.d_max:
                return ScoreDelta(-np.inf, 0.0, 1, 0, 0.0, 0.0, (kind, u, v))
            new = tuple(sorted(old + (u,)))
            d_bic, d_sheaf, d_j = self.node_deltas(v, old, new)
            d_f1 = 1
            d_f2 = common_neighbors(skeleton(adj), u, v)
        elif kind == "delete":
            if not adj[u, v]:
                raise ValueError("edge not present")
            old = parents_of(v)
            new = tuple(p for p in old if p != u)
            d_bic, d_sheaf, d_j = self.node_deltas(v, old, new)
            d_f1 = -1
            d_f2 = -common_neighbors(skeleton(adj), u, v)
        else:  # reverse
            if not adj[u, v]:
                raise ValueError("edge not present")
            stripped = adj.copy()
            stripped[u, v] = False
            if _has_path(stripped, u, v):
                raise ValueError("reversal would create a cycle")
            old_u = parents_of(u)
            if len(old_u) + 1 > cfg.d_max:
                return ScoreDelta(-np.inf, 0.0, 0, 0, 0.0, 0.0, (kind, u, v))
            old_v = parents_of(v)
            new_v = tuple(p for p in old_v if p != u)
            new_u = tuple(sorted(old_u + (v,)))
            bic_v, sheaf_v, j_v = self.node_deltas(v, old_v, new_v)
            bic_u, sheaf_u, j_u = self.node_deltas(u, old_u, new_u)
            d_bic, d_sheaf, d_j = bic_v + bic_u, sheaf_v + sheaf_u, j_v + j_u
            d_f1 = 0
            d_f2 = 0
        total = (d_bic - cfg.lambda_top * d_f1 - cfg.lambda_tri * d_f2
                 - cfg.lambda_sheaf * d_sheaf - cfg.lambda_j * d_j)
        return ScoreDelta(float(total), float(d_bic), d_f1, d_f2,
                          float(d_sheaf), float(d_j), (kind, u, v))


def cges_delta(data, adj, move, cfg: ScoreConfig) -> ScoreDelta:
    """Standalone score change for `move` against adjacency `adj`.

    The search state is the (data, adjacency) pair; this builds a fresh
    scorer, so use the engine inside loops and this for inspection.
    """
    scorer = _Scorer(data, cfg)
    a = np.asarray(adj, dtype=bool)
    if a.shape != (scorer.d, scorer.d):
        raise ValueError("adjacency shape does not match the data")
    return scorer.delta(a, move)


def _covered(adj: np.ndarray, u: int, v: int) -> bool:
    pa_v = set(np.flatnonzero(adj[:, v]).tolist()) - {u}
    pa_u = set(np.flatnonzero(adj[:, u]).tolist())
    return pa_v == pa_u


def _forward_moves(adj: np.ndarray, d_max: int):
    d = adj.shape[0]
    indeg = adj.sum(axis=0)
    moves = []
    for v in range(d):
        if indeg[v] + 1 > d_max:
            continue
        for u in range(d):
            if u == v or adj[u, v] or adj[v, u] or _has_path(adj, v, u):
                continue
            moves.append(("add", u, v))
    moves.extend(_reversal_moves(adj, d_max))
    return moves


def _backward_moves(adj: np.ndarray, d_max: int):
    moves = [("delete", int(u), int(v)) for u, v in zip(*np.nonzero(adj))]
    moves.extend(_reversal_moves(adj, d_max))
    return moves


def _reversal_moves(adj: np.ndarray, d_max: int):
    indeg = adj.sum(axis=0)
    moves = []
    for u, v in zip(*np.nonzero(adj)):
        u, v = int(u), int(v)
        if indeg[u] + 1 > d_max or not _covered(adj, u, v):
            continue
        stripped = adj.copy()
        stripped[u, v] = False
        if not _has_path(stripped, u, v):
            moves.append(("reverse", u, v))
    return moves


def _run_search(data, cfg: ScoreConfig) -> SearchResult:
    scorer = _Scorer(data, cfg)
    d = scorer.d
    labels = getattr(data, "labels", None)
    adj = np.zeros((d, d), dtype=bool)
    base = sum(scorer.bic(v, ()) for v in range(d))
    score = base
    log = []
    while True:
        progressed = False
        for generate in (_forward_moves, _backward_moves):
            while True:
                best = None
                best_key = None
                for move in generate(adj, cfg.d_max):
                    ds = scorer.delta(adj, move)
                    if not np.isfinite(ds.total) or ds.total <= _ACCEPT_TOL:
                        continue
                    key = (-ds.total, move[1], move[2], _KIND_RANK[move[0]])
                    if best is None or key < best_key:
                        best, best_key = ds, key
                if best is None:
                    break
                kind, u, v = best.move
                if kind == "add":
                    adj[u, v] = True
                elif kind == "delete":
                    adj[u, v] = False
                else:
                    adj[u, v] = False
                    adj[v, u] = True
                log.append(best)
                score += best.total
                progressed = True
        if not progressed:
            break
    return SearchResult(Dag(adj, labels=labels), tuple(log),
                        float(score), float(base))


def ges_search(data, cfg: ScoreConfig) -> SearchResult:
    """Two-phase greedy hill-climb without the regime-aware penalties.

    Forward adds (plus covered reversals), backward deletes, repeated until
    a full sweep accepts nothing. lambda_sheaf and lambda_j are forced to
    zero; use tces_search to keep them.
    """
    plain = dataclasses.replace(cfg, lambda_sheaf=0.0, lambda_j=0.0)
    return _run_search(data, plain)


def tces_search(data, cfg: ScoreConfig) -> SearchResult:
    """The same greedy engine with drift and chart-overlap penalties live.

    With lambda_sheaf = lambda_j = 0 the decision log matches ges_search
    step for step. The neighbor counts feeding d_f2 are always recomputed
    from the current adjacency, so incremental and from-scratch topology
    bookkeeping cannot drift apart.
    """
    return _run_search(data, cfg)


def total_score(data, adj, cfg: ScoreConfig) -> float:
    """From-scratch score of a full graph; matches base + summed deltas."""
    scorer = _Scorer(data, cfg)
    a = np.asarray(adj, dtype=bool)
    total = 0.0
    for v in range(scorer.d):
        parents = tuple(sorted(np.flatnonzero(a[:, v]).tolist()))
        total += (scorer.bic(v, parents)
                  - cfg.lambda_sheaf * scorer.sheaf(v, parents)
                  - cfg.lambda_j * scorer.jpen(v, parents))
    faces = f_vector(skeleton(a))
    return float(total - cfg.lambda_top * faces.f1 - cfg.lambda_tri * faces.f2)


def bootstrap_ges(data, n_boot: int, cfg: ScoreConfig,
                  rng: np.random.Generator) -> BootstrapFrequencies:
    """Edge frequencies over row resamples, drawn independently per regime.

    Each replicate resamples rows with replacement inside every regime and
    reruns the configured search; counts come back as directed and
    skeleton frequencies in [0, 1]. Deterministic for a given rng state.
    """
    if n_boot < 1:
        raise ValueError("need at least one replicate")
    mats = _regime_matrices(data)
    d = mats[0].shape[1]
    count_dir = np.zeros((d, d))
    count_und = np.zeros((d, d))
    for _ in range(n_boot):
        resampled = [m[rng.integers(0, m.shape[0], size=m.shape[0])]
                     for m in mats]
        result = _run_search(resampled, cfg)
        count_dir += result.dag.adj
        count_und += skeleton(result.dag.adj)
    return BootstrapFrequencies(directed=count_dir / n_boot,
                                undirected=count_und / n_boot,
                                n_boot=n_boot)


def decision_log_rows(log: Sequence[ScoreDelta], cfg: ScoreConfig) -> list:
    """Flattens a search log for CSV export.

    `child` is the node whose parent set changed (the gaining node for a
    reversal); the two penalty columns are pre-multiplied by their lambdas
    to match the reported table layout.
    """
    rows = []
    for step, ds in enumerate(log):
        kind, u, v = ds.move
        rows.append({
            "step": step,
            "move": f"{kind}({u},{v})",
            "child": u if kind == "reverse" else v,
            "delta_total": ds.total,
            "delta_bic": ds.d_bic,
            "lambda_j_dJ": cfg.lambda_j * ds.d_j,
            "lambda_s_dsheaf": cfg.lambda_sheaf * ds.d_sheaf,
        })
    return rows
