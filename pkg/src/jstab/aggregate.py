"""Gluing layer: combine per-regime adjacencies into one stable graph.

The structural path (support counts, threshold rules, skeleton, orientation)
works purely on boolean adjacency matrices: no sample rows ever enter it.
Validation-likelihood pi selection and the backdoor estimator are the two
operations that legitimately consume data.
"""

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import trim_mean

from .graphs import PartiallyDirectedGraph
from .stats import ols_fit, default_ridge

__all__ = [
    "SupportTable",
    "ThresholdRule",
    "OrientationPolicy",
    "MarginReport",
    "PI_GRID_DEFAULT",
    "support",
    "aggregate",
    "aggregate_stream",
    "pi_skeleton",
    "orient_net_preference",
    "select_pi",
    "jdo_backdoor",
    "mixture_conditional",
    "stability_margin_report",
    "parse_rule",
]

PI_GRID_DEFAULT = tuple(round(0.1 * k, 1) for k in range(1, 11))


@dataclass(frozen=True)
class SupportTable:
    """Per-edge counts C and frequencies F = C / E across E regimes."""

    E: int
    C: np.ndarray
    F: np.ndarray

    @property
    def s(self) -> np.ndarray:
        return self.F


@dataclass(frozen=True)
class ThresholdRule:
    kind: str
    value: float = 0.0

    @classmethod
    def intersection(cls):
        return cls("intersection")

    @classmethod
    def union(cls):
        return cls("union")

    @classmethod
    def kofe(cls, tau: int):
        return cls("kofe", int(tau))

    @classmethod
    def allbutk(cls, k: int):
        return cls("allbutk", int(k))

    @classmethod
    def ratio(cls, tau: float):
        return cls("ratio", float(tau))

    def threshold(self, E: int) -> int:
        """Integer count threshold equivalent to this rule at E regimes."""
        if self.kind == "intersection":
            return E
        if self.kind == "union":
            return 1
        if self.kind == "kofe":
            t = int(self.value)
            if not 1 <= t <= E:
                raise ValueError("k-of-E threshold %d outside [1, %d]" % (t, E))
            return t
        if self.kind == "allbutk":
            k = int(self.value)
            if not 0 <= k <= E - 1:
                raise ValueError("all-but-k with k=%d outside [0, %d]" % (k, E - 1))
            return E - k
        if self.kind == "ratio":
            tau = float(self.value)
            if not 0.0 < tau <= 1.0:
                raise ValueError("ratio threshold %g outside (0, 1]" % tau)
            # ties kept: C >= tau*E, nudged so an exact product stays integral
            return int(math.ceil(tau * E - 1e-12))
        raise ValueError("unknown rule kind %r" % self.kind)

    def tag(self) -> str:
        if self.kind in ("intersection", "union"):
            return self.kind
        if self.kind == "ratio":
            return "ratio%g" % self.value
        return "%s%d" % (self.kind, int(self.value))


def parse_rule(text: str) -> ThresholdRule:
    """CLI form: intersection | union | kofe:N | allbutk:N | ratio:X."""
    name, _, arg = text.strip().lower().partition(":")
    if name == "intersection":
        return ThresholdRule.intersection()
    if name == "union":
        return ThresholdRule.union()
    if name == "kofe":
        return ThresholdRule.kofe(int(arg))
    if name == "allbutk":
        return ThresholdRule.allbutk(int(arg))
    if name == "ratio":
        return ThresholdRule.ratio(float(arg))
    raise ValueError("unknown aggregation rule %r" % text)


@dataclass(frozen=True)
class OrientationPolicy:
    delta_margin: float = 0.1
    guards: frozenset = field(default_factory=frozenset)


class MarginReport(NamedTuple):
    margins: np.ndarray
    support_curve: List[Tuple[int, int]]


def _check_square_stack(adjs) -> List[np.ndarray]:
    mats = [np.asarray(a, dtype=bool) for a in adjs]
    if not mats:
        raise ValueError("need at least one adjacency")
    shape = mats[0].shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError("adjacencies must be square")
    if any(m.shape != shape for m in mats):
        raise ValueError("adjacency dimensions differ")
    return mats


def support(adjs: Iterable[np.ndarray]) -> SupportTable:
    """Elementwise edge counts across regimes; the diagonal is forced to zero."""
    mats = _check_square_stack(adjs)
    C = np.sum([m.astype(int) for m in mats], axis=0)
    np.fill_diagonal(C, 0)
    E = len(mats)
    return SupportTable(E=E, C=C, F=C / E)


def aggregate(table: SupportTable, rule: ThresholdRule) -> np.ndarray:
    """Batch thresholding: keep an edge iff its count reaches the rule's bar."""
    t = rule.threshold(table.E)
    out = table.C >= t
    np.fill_diagonal(out, False)
    return out


def aggregate_stream(adjs: Sequence[np.ndarray], rule: ThresholdRule,
                     count: Optional[int] = None):
    """Streaming fold with per-edge early stopping.

    An edge is accepted as soon as its running count reaches the threshold
    and rejected as soon as the remaining charts cannot lift it there.
    Returns (adjacency, visits) where visits[i, j] counts the charts examined
    before edge (i, j) was decided; equal to batch aggregation on all inputs.
    """
    mats = _check_square_stack(adjs)
    E = len(mats) if count is None else count
    t = rule.threshold(E)
    d = mats[0].shape[0]
    running = np.zeros((d, d), dtype=int)
    visits = np.zeros((d, d), dtype=int)
    accepted = np.zeros((d, d), dtype=bool)
    decided = np.zeros((d, d), dtype=bool)
    for e, A in enumerate(mats):
        undecided = ~decided
        if not undecided.any():
            break
        visits[undecided] += 1
        running[undecided] += A[undecided]
        remaining = E - e - 1
        newly_in = undecided & (running >= t)
        newly_out = undecided & (running + remaining < t)
        accepted |= newly_in
        decided |= newly_in | newly_out
    np.fill_diagonal(accepted, False)
    return accepted, visits


def pi_skeleton(F: np.ndarray, pi: float) -> np.ndarray:
    """Keep pair {i, j} iff max(F[i,j], F[j,i]) >= pi. Symmetric output."""
    if not 0.0 <= pi <= 1.0:
        raise ValueError("pi must lie in [0, 1]")
    F = np.asarray(F, dtype=float)
    keep = np.maximum(F, F.T) >= pi
    np.fill_diagonal(keep, False)
    return keep


def orient_net_preference(F: np.ndarray, policy: OrientationPolicy,
                          base: np.ndarray) -> PartiallyDirectedGraph:
    """Direct each skeleton edge by the frequency margin, honoring guards.

    i -> j needs F[i,j] - F[j,i] >= delta and a strictly positive margin, and
    must not be a guarded direction; anything else stays undirected. A guard
    can therefore only ever turn a won direction into an undirected edge.
    """
    F = np.asarray(F, dtype=float)
    base = np.asarray(base, dtype=bool)
    d = F.shape[0]
    delta = policy.delta_margin
    directed = np.zeros((d, d), dtype=bool)
    undirected = np.zeros((d, d), dtype=bool)
    for i in range(d):
        for j in range(i + 1, d):
            if not (base[i, j] or base[j, i]):
                continue
            m = F[i, j] - F[j, i]
            winner = None
            if m >= delta and m > 0:
                winner = (i, j)
            elif -m >= delta and -m > 0:
                winner = (j, i)
            if winner is not None and winner not in policy.guards:
                directed[winner] = True
            else:
                undirected[i, j] = undirected[j, i] = True
    return PartiallyDirectedGraph(directed=directed, undirected=undirected)


def _stacked_rows(split) -> np.ndarray:
    if hasattr(split, "regimes"):
        return np.vstack([r.data for r in split.regimes])
    return np.vstack(list(split))


def _structure_ll(directed: np.ndarray, train: np.ndarray,
                  val: np.ndarray) -> float:
    """Average per-row Gaussian log-likelihood of val under a train fit."""
    d = train.shape[1]
    total = np.zeros(val.shape[0])
    for v in range(d):
        parents = np.flatnonzero(directed[:, v])
        X = train[:, parents]
        try:
            fit = ols_fit(X, train[:, v], ridge=0.0)
        except np.linalg.LinAlgError:
            fit = ols_fit(X, train[:, v], ridge=default_ridge(X))
        sigma2 = max(fit.residual_variance, 1e-12)
        resid = val[:, v] - fit.intercept - val[:, parents] @ fit.coefficients
        total += -0.5 * (np.log(2.0 * np.pi * sigma2) + resid**2 / sigma2)
    return float(total.mean())


def select_pi(F: np.ndarray, candidate_pis: Sequence[float], train, val,
              policy: Optional[OrientationPolicy] = None):
    """Pick the pi whose induced structure scores best on held-out regimes.

    Each candidate's skeleton is oriented by net preference; undirected edges
    are dropped from parent sets for the likelihood fit (the drop count is
    recorded per candidate). Ties go to the larger, sparser pi.
    """
    cands = sorted(float(p) for p in candidate_pis)
    if not cands:
        raise ValueError("need at least one candidate pi")
    policy = policy or OrientationPolicy()
    train_rows = _stacked_rows(train)
    val_rows = _stacked_rows(val)
    if val_rows.shape[0] < 1:
        raise ValueError("need at least one validation regime")
    table = []
    best_pi, best_ll = None, -np.inf
    for pi in cands:
        pdag = orient_net_preference(F, policy, pi_skeleton(F, pi))
        ll = _structure_ll(pdag.directed, train_rows, val_rows)
        dropped = int(pdag.undirected.sum()) // 2
        table.append({"pi": pi, "val_ll": ll, "undirected_dropped": dropped,
                      "n_directed": int(pdag.directed.sum())})
        if ll >= best_ll:  # >= so equal scores prefer the larger pi
            best_pi, best_ll = pi, ll
    return best_pi, table


def _encode_column(pooled_col: np.ndarray, col: np.ndarray, bins: int):
    """Category codes for one variable, shared across regimes.

    Columns with at most `bins` distinct pooled values keep those values as
    categories; anything wider is cut at pooled quantiles into `bins` bins
    labeled 0..bins-1.
    """
    levels = np.unique(pooled_col)
    if len(levels) <= bins:
        codes = np.searchsorted(levels, col)
        if not np.array_equal(levels[codes], col):
            raise ValueError("value outside the pooled category set")
        return codes, levels
    edges = np.quantile(pooled_col, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, col), np.arange(bins)


def jdo_backdoor(data_by_env: Mapping[str, np.ndarray], x_var: int, x_val,
                 y_var: int, z_vars: Sequence[int], cover: Sequence[str],
                 kind: str = "mean", bins: int = 4):
    """Backdoor-adjusted distribution of y under setting x, glued over a cover.

    Per cover regime: sum_z P(y|x,z) P(z) from Laplace-smoothed (0.5/cell)
    empirical tables; the per-regime answers are combined by an
    order-preserving mean ("mean" or "trimmed") and renormalized. For binned
    variables x_val is the bin index; for discrete ones it is the raw level.
    Returns (y_levels, probabilities).
    """
    if not cover:
        raise ValueError("cover must name at least one regime")
    if kind not in ("mean", "trimmed"):
        raise ValueError("j-do aggregation must be an order-preserving mean, "
                         "got %r" % kind)
    mats = [np.asarray(data_by_env[c], dtype=float) for c in cover]
    pooled = np.vstack(mats)
    z_vars = tuple(int(z) for z in z_vars)

    def codes_for(var, mat):
        return _encode_column(pooled[:, var], mat[:, var], bins)

    _, x_levels = _encode_column(pooled[:, x_var], pooled[:1, x_var], bins)
    if len(np.unique(pooled[:, x_var])) <= bins:
        hits = np.flatnonzero(x_levels == x_val)
        if hits.size == 0:
            raise ValueError("x level %r never observed in the cover" % (x_val,))
        x_code = int(hits[0])
    else:
        x_code = int(x_val)
        if not 0 <= x_code < bins:
            raise ValueError("x bin index %r outside 0..%d" % (x_val, bins - 1))

    _, y_levels = _encode_column(pooled[:, y_var], pooled[:1, y_var], bins)
    n_y = len(y_levels)
    z_sizes = [len(_encode_column(pooled[:, z], pooled[:1, z], bins)[1])
               for z in z_vars]
    n_z = int(np.prod(z_sizes)) if z_sizes else 1

    estimates = []
    for mat in mats:
        if z_vars:
            z_codes = [codes_for(z, mat)[0] for z in z_vars]
            z_joint = np.ravel_multi_index(z_codes, z_sizes)
        else:
            z_joint = np.zeros(mat.shape[0], dtype=int)
        y_codes = codes_for(y_var, mat)[0]
        x_codes = codes_for(x_var, mat)[0]
        pz = np.bincount(z_joint, minlength=n_z) + 0.5
        pz /= pz.sum()
        sel = x_codes == x_code
        cnt = np.bincount(z_joint[sel] * n_y + y_codes[sel],
                          minlength=n_z * n_y).reshape(n_z, n_y) + 0.5
        cond = cnt / cnt.sum(axis=1, keepdims=True)
        estimates.append(pz @ cond)
    stack = np.vstack(estimates)
    if kind == "trimmed":
        agg = trim_mean(stack, 0.1, axis=0)
    else:
        agg = stack.mean(axis=0)
    agg = agg / agg.sum()
    return y_levels, agg


def mixture_conditional(kernel: np.ndarray, mix: np.ndarray, x_val: int):
    """sum_z P(y|x,z) P(z|x) for one x. Tables must be normalized."""
    kernel = np.asarray(kernel, dtype=float)
    mix = np.asarray(mix, dtype=float)
    if np.abs(kernel.sum(axis=2) - 1.0).max() > 1e-9:
        raise ValueError("kernel slices must sum to 1 over y")
    if np.abs(mix.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValueError("mixture rows must sum to 1 over z")
    return mix[x_val] @ kernel[x_val]


def stability_margin_report(table: SupportTable) -> MarginReport:
    """Net directional margins plus the support curve over thresholds 0..E.

    The curve counts ordered off-diagonal pairs with count >= t; at t=0 that
    is all d(d-1) pairs by convention.
    """
    off = ~np.eye(table.C.shape[0], dtype=bool)
    curve = [(t, int((table.C[off] >= t).sum())) for t in range(table.E + 1)]
    return MarginReport(margins=table.F - table.F.T, support_curve=curve)
