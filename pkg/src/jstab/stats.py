"""Statistical primitives shared by the learners.

Regression and score functions here are standardization-agnostic: callers that
want z-scored columns must z-score before calling. Everything is a pure
function of its arguments and safe to call concurrently.
"""

import warnings
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import linalg as sla
from scipy import stats as sps
from scipy.spatial.distance import cdist

__all__ = [
    "FitResult",
    "GaussianFit",
    "DegenerateDataError",
    "AGGREGATOR_KINDS",
    "ols_fit",
    "default_ridge",
    "bic_local",
    "fisher_z_test",
    "aggregate_pvalues",
    "gaussian_sym_kl",
    "energy_distance",
    "mmd",
]

AGGREGATOR_KINDS = ("fisher", "stouffer", "tippett", "mean")


class DegenerateDataError(ValueError):
    """A column or fitted covariance carries no usable variation."""


class FitResult(NamedTuple):
    coefficients: np.ndarray
    intercept: float
    residual_variance: float
    n: int


class GaussianFit(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray


def default_ridge(X: np.ndarray) -> float:
    """Scale-aware fallback penalty used when a plain fit is singular."""
    k = X.shape[1]
    if k == 0:
        return 0.0
    return 1e-8 * float(np.trace(X.T @ X)) / k


def ols_fit(X, y, ridge: float = 0.0) -> FitResult:
    """Least squares with optional ridge on the slopes (never the intercept).

    Solves the centered normal equations by Cholesky; an indefinite Gram
    matrix with ridge=0 raises LinAlgError so the caller can retry with
    ridge > 0. residual_variance is the population mean squared residual.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n < 1:
        raise ValueError("need at least one sample")
    if k == 0:
        return FitResult(coefficients=np.empty(0), intercept=float(y.mean()),
                         residual_variance=float(y.var()), n=n)
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    yc = y - ym
    G = Xc.T @ Xc + ridge * np.eye(k)
    try:
        cho = sla.cho_factor(G)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "singular fit; retry with ridge > 0") from None
    diag = np.abs(np.diagonal(cho[0]))
    if ridge == 0.0 and diag.min() <= 1e-7 * diag.max():
        # Cholesky succeeded but a pivot collapsed: numerically singular.
        raise np.linalg.LinAlgError("singular fit; retry with ridge > 0")
    beta = sla.cho_solve(cho, Xc.T @ yc)
    resid = yc - Xc @ beta
    return FitResult(coefficients=beta, intercept=float(ym - xm @ beta),
                     residual_variance=float(np.mean(resid**2)), n=n)


def bic_local(data, v: int, parents: Iterable[int]) -> float:
    """Gaussian BIC of node v given its parent set; higher is better.

    ll - (log n / 2) * df with df = |parents| + 2 (slopes, intercept,
    variance). Parent order does not matter.
    """
    data = np.asarray(data, dtype=float)
    parents = tuple(sorted(int(p) for p in parents))
    if v in parents:
        raise ValueError("a node cannot be its own parent")
    y = data[:, v]
    n = data.shape[0]
    if y.var() == 0.0:
        raise DegenerateDataError("target column has zero variance")
    X = data[:, parents] if parents else np.empty((n, 0))
    try:
        fit = ols_fit(X, y, ridge=0.0)
    except np.linalg.LinAlgError:
        fit = ols_fit(X, y, ridge=default_ridge(X))
    sigma2 = fit.residual_variance
    if sigma2 <= 0.0:
        raise DegenerateDataError("residual variance collapsed to zero")
    ll = -(n / 2.0) * (np.log(2.0 * np.pi * sigma2) + 1.0)
    df = len(parents) + 2
    return float(ll - (np.log(n) / 2.0) * df)


def _residual_against(data: np.ndarray, col: int, S: Sequence[int]) -> np.ndarray:
    y = data[:, col]
    if not S:
        return y - y.mean()
    X = data[:, list(S)]
    try:
        fit = ols_fit(X, y, ridge=0.0)
    except np.linalg.LinAlgError:
        fit = ols_fit(X, y, ridge=default_ridge(X))
    return y - fit.intercept - X @ fit.coefficients


def fisher_z_test(data, i: int, j: int, S: Iterable[int]) -> float:
    """Two-sided p-value for partial correlation of columns i, j given S."""
    data = np.asarray(data, dtype=float)
    S = tuple(int(s) for s in S)
    if i == j or i in S or j in S:
        raise ValueError("test endpoints must be distinct and outside S")
    n = data.shape[0]
    dof = n - len(S) - 3
    if dof <= 0:
        raise ValueError("insufficient samples for |S|=%d at n=%d" % (len(S), n))
    ri = _residual_against(data, i, S)
    rj = _residual_against(data, j, S)
    denom = np.linalg.norm(ri) * np.linalg.norm(rj)
    if denom == 0.0:
        raise DegenerateDataError("constant residual in CI test")
    r = float(np.clip(ri @ rj / denom, -1.0, 1.0))
    if 1.0 - abs(r) < 1e-15:
        return 0.0
    z = np.sqrt(dof) * np.arctanh(r)
    return float(min(1.0, 2.0 * sps.norm.sf(abs(z))))


def aggregate_pvalues(ps, kind: str) -> float:
    """Combine per-regime p-values into one, by the named rule.

    A zero input is clamped to the smallest positive float with a warning.
    Single-element inputs pass through unchanged for every kind.
    """
    if kind not in AGGREGATOR_KINDS:
        raise ValueError("unknown aggregator kind: %r" % (kind,))
    ps = np.asarray(list(ps), dtype=float)
    if ps.size == 0:
        raise ValueError("need at least one p-value")
    if ((ps < 0) | (ps > 1)).any():
        raise ValueError("p-values must lie in [0, 1]")
    if (ps == 0.0).any():
        warnings.warn("zero p-value clamped to the smallest positive float")
        ps = np.maximum(ps, np.finfo(float).tiny)
    m = ps.size
    if m == 1:
        return float(ps[0])
    if kind == "fisher":
        stat = -2.0 * np.log(ps).sum()
        return float(sps.chi2.sf(stat, 2 * m))
    if kind == "stouffer":
        z = sps.norm.isf(ps / 2.0).sum() / np.sqrt(m)
        return float(min(1.0, 2.0 * sps.norm.sf(z)))
    if kind == "tippett":
        pmin = ps.min()
        if pmin >= 1.0:
            return 1.0
        return float(-np.expm1(m * np.log1p(-pmin)))
    return float(min(1.0, ps.mean()))


def gaussian_sym_kl(fit_a: GaussianFit, fit_b: GaussianFit) -> float:
    """Symmetrized KL divergence between two multivariate Gaussian fits."""
    mu_a = np.atleast_1d(np.asarray(fit_a.mean, dtype=float))
    mu_b = np.atleast_1d(np.asarray(fit_b.mean, dtype=float))
    cov_a = np.atleast_2d(np.asarray(fit_a.cov, dtype=float))
    cov_b = np.atleast_2d(np.asarray(fit_b.cov, dtype=float))
    d = mu_a.size

    def kl(mu0, cov0, mu1, cov1):
        try:
            cho = sla.cho_factor(cov1)
        except np.linalg.LinAlgError:
            raise DegenerateDataError("covariance is not positive definite") from None
        diff = mu1 - mu0
        tr = np.trace(sla.cho_solve(cho, cov0))
        quad = diff @ sla.cho_solve(cho, diff)
        _, ld1 = np.linalg.slogdet(cov1)
        _, ld0 = np.linalg.slogdet(cov0)
        return 0.5 * (tr + quad - d + ld1 - ld0)

    return float(0.5 * (kl(mu_a, cov_a, mu_b, cov_b)
                        + kl(mu_b, cov_b, mu_a, cov_a)))


def energy_distance(sample_a, sample_b) -> float:
    """All-pairs energy statistic 2 E|A-B| - E|A-A'| - E|B-B'|.

    The all-pairs (biased) form keeps the value nonnegative and exactly zero
    when both samples coincide.
    """
    a = np.atleast_2d(np.asarray(sample_a, dtype=float))
    b = np.atleast_2d(np.asarray(sample_b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples must share their column count")
    between = cdist(a, b).mean()
    within_a = cdist(a, a).mean()
    within_b = cdist(b, b).mean()
    return float(2.0 * between - within_a - within_b)


def mmd(sample_a, sample_b, bandwidth: float = None) -> float:
    """Squared maximum mean discrepancy with a Gaussian kernel.

    bandwidth defaults to the median pairwise distance of the pooled sample.
    """
    a = np.atleast_2d(np.asarray(sample_a, dtype=float))
    b = np.atleast_2d(np.asarray(sample_b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples must share their column count")
    if bandwidth is None:
        pooled = np.vstack([a, b])
        dists = cdist(pooled, pooled)
        off = dists[np.triu_indices_from(dists, k=1)]
        bandwidth = float(np.median(off)) if off.size else 1.0
        if bandwidth <= 0.0:
            bandwidth = 1.0

    def kmean(x, y):
        sq = cdist(x, y, "sqeuclidean")
        return np.exp(-sq / (2.0 * bandwidth**2)).mean()

    val = kmean(a, a) + kmean(b, b) - 2.0 * kmean(a, b)
    return float(max(0.0, val))
