"""Linear-Gaussian benchmark generator with perfect interventions.

A benchmark is one ground-truth DAG plus several data regimes: a baseline
regime that follows every structural equation, and interventional regimes
where one target node has its incoming edges cut and is redrawn as
mean_shift + noise. Regime streams are derived from one seed sequence, so a
benchmark is reproducible bit for bit from its seed.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .graphs import Dag

__all__ = [
    "LinearSem",
    "RegimeSpec",
    "RegimeDataset",
    "MultiRegimeData",
    "sample_dag",
    "sample_weights",
    "simulate_regime",
    "make_benchmark",
    "write_dataset_csv",
    "read_dataset_csv",
]


@dataclass(frozen=True)
class LinearSem:
    """X_j = sum_i W[i, j] X_i + noise_std_j * eps_j over a DAG."""

    dag: Dag
    weights: np.ndarray
    noise_std: float = 1.0

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        if W.shape != self.dag.adj.shape:
            raise ValueError("weight matrix shape must match the DAG")
        if (W[~self.dag.adj] != 0).any():
            raise ValueError("weights must vanish off the edge support")
        W = W.copy()
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @property
    def d(self) -> int:
        return self.dag.d

    @property
    def order(self) -> Sequence[int]:
        return self.dag.topological_order()


@dataclass(frozen=True)
class RegimeSpec:
    regime_id: str
    intervention_target: Optional[int] = None
    mean_shift: float = 0.0


@dataclass(frozen=True)
class RegimeDataset:
    regime_id: str
    data: np.ndarray
    spec: RegimeSpec

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("regime data must be a nonempty matrix")
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class MultiRegimeData:
    regimes: Tuple[RegimeDataset, ...]
    labels: Tuple[str, ...]
    truth: Optional[Dag] = None

    def __post_init__(self):
        regimes = tuple(self.regimes)
        labels = tuple(self.labels)
        ids = [r.regime_id for r in regimes]
        if len(set(ids)) != len(ids):
            raise ValueError("regime ids must be unique")
        widths = {r.data.shape[1] for r in regimes}
        if widths and widths != {len(labels)}:
            raise ValueError("every regime must have one column per label")
        object.__setattr__(self, "regimes", regimes)
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return len(self.labels)

    def pooled(self) -> np.ndarray:
        return np.vstack([r.data for r in self.regimes])


def sample_dag(d: int, density: float, rng: np.random.Generator) -> Dag:
    """Random DAG with exactly floor(density * d) edges.

    A random permutation fixes a causal order; edges are drawn uniformly
    without replacement from the pairs compatible with it.
    """
    if d < 2:
        raise ValueError("need at least two nodes")
    m = int(np.floor(density * d))
    n_pairs = d * (d - 1) // 2
    if m > n_pairs:
        raise ValueError("density %g asks for %d edges, only %d pairs exist"
                         % (density, m, n_pairs))
    perm = rng.permutation(d)
    pairs = [(a, b) for a in range(d) for b in range(a + 1, d)]
    chosen = rng.choice(n_pairs, size=m, replace=False) if m else []
    adj = np.zeros((d, d), dtype=bool)
    for idx in chosen:
        a, b = pairs[int(idx)]
        adj[perm[a], perm[b]] = True  # earlier position -> later position
    return Dag(adj)


def sample_weights(dag: Dag, rng: np.random.Generator,
                   weight_range: Tuple[float, float] = (0.5, 2.0)) -> LinearSem:
    """Equiprobable sign times Unif[weight_range] magnitude on every edge."""
    lo, hi = weight_range
    W = np.zeros(dag.adj.shape)
    m = dag.n_edges()
    signs = rng.integers(0, 2, size=m) * 2 - 1
    mags = rng.uniform(lo, hi, size=m)
    W[dag.adj] = signs * mags
    return LinearSem(dag=dag, weights=W)


def simulate_regime(sem: LinearSem, spec: RegimeSpec, n: int,
                    rng: np.random.Generator) -> RegimeDataset:
    """Forward substitution in topological order; the target, if any, is cut."""
    if n < 1:
        raise ValueError("need at least one sample")
    d = sem.d
    target = spec.intervention_target
    if target is not None and not 0 <= target < d:
        raise ValueError("intervention target out of range")
    eps = rng.normal(scale=sem.noise_std, size=(n, d))
    X = np.zeros((n, d))
    for v in sem.order:
        if v == target:
            X[:, v] = spec.mean_shift + eps[:, v]
            continue
        X[:, v] = X @ sem.weights[:, v] + eps[:, v]
    return RegimeDataset(regime_id=spec.regime_id, data=X, spec=spec)


def make_benchmark(d: int, density: float, n_regimes: int, n_per: int,
                   seed: int, weight_range: Tuple[float, float] = (0.5, 2.0),
                   mean_shift: float = 0.0) -> MultiRegimeData:
    """One DAG, one baseline regime, n_regimes - 1 single-node interventions."""
    if n_regimes < 1:
        raise ValueError("need at least one regime")
    if n_regimes - 1 > d:
        raise ValueError("cannot target %d distinct nodes among %d"
                         % (n_regimes - 1, d))
    ss = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(child) for child in ss.spawn(2 + n_regimes)]
    dag = sample_dag(d, density, streams[0])
    sem = sample_weights(dag, streams[1], weight_range=weight_range)
    targets = streams[1].choice(d, size=n_regimes - 1, replace=False)
    specs = [RegimeSpec("e0")]
    specs += [RegimeSpec("e%d" % (r + 1), intervention_target=int(targets[r]),
                         mean_shift=mean_shift)
              for r in range(n_regimes - 1)]
    regimes = tuple(simulate_regime(sem, sp, n_per, streams[2 + r])
                    for r, sp in enumerate(specs))
    labels = dag.labels
    return MultiRegimeData(regimes=regimes, labels=labels, truth=dag)


def write_dataset_csv(path, mrd: MultiRegimeData, env_col: str = "env") -> None:
    """Samples stacked over regimes; the env column holds each row's regime id."""
    frames = []
    for reg in mrd.regimes:
        df = pd.DataFrame(reg.data, columns=list(mrd.labels))
        df[env_col] = reg.regime_id
        frames.append(df)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)


def read_dataset_csv(path, env_col: str = "env") -> MultiRegimeData:
    """Inverse of write_dataset_csv; regimes ordered by first appearance."""
    df = pd.read_csv(path)
    if env_col not in df.columns:
        raise ValueError("dataset is missing the %r column" % env_col)
    labels = tuple(c for c in df.columns if c != env_col)
    regimes = []
    for rid in df[env_col].drop_duplicates():
        block = df.loc[df[env_col] == rid, list(labels)].to_numpy(dtype=float)
        regimes.append(RegimeDataset(regime_id=str(rid), data=block,
                                     spec=RegimeSpec(str(rid))))
    return MultiRegimeData(regimes=tuple(regimes), labels=labels)
