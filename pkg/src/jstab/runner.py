"""Batch orchestration and the command-line entry point.

The pipeline is a map-reduce over regimes: every regime gets an independent
structure fit (optionally in worker processes), and everything downstream
of the fits consumes adjacency matrices only. Sample rows never cross the
aggregation boundary; what the reducer sees is the boolean matrix each
regime voted with. Reports are a pure function of (config, seed): worker
count and wall-clock live in a separate timing block so runs with
different parallelism compare byte-identical.
"""

import argparse
import dataclasses
import json
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .aggregate import (
    OrientationPolicy,
    aggregate_stream,
    orient_net_preference,
    parse_rule,
    pi_skeleton,
    select_pi,
    stability_margin_report,
    support,
)
from .ci import orient, skeleton_search
from .ges import ScoreConfig, bootstrap_ges, ges_search, tces_search
from .graphs import dag_to_cpdag, write_adjacency_csv
from .metrics import metric_block
from .synth import MultiRegimeData, RegimeDataset, RegimeSpec, make_benchmark

LEARNERS = ("ges", "cges", "tces", "ci")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """One pipeline invocation: data source, learner, aggregation, output."""

    input_path: Optional[str] = None
    synthetic: Optional[str] = None  # "d:density:R:n_per"
    env_col: str = "env"
    learner: str = "ci"
    alpha: float = 0.01
    depth: int = 3
    agg: str = "fisher"
    veto_ref: Optional[str] = None
    veto_aggregate: bool = False
    rule: str = "intersection"
    pi_grid: Optional[Tuple[float, ...]] = None
    delta: float = 0.1
    guards: Tuple[Tuple[int, int], ...] = ()
    lambda_top: float = 0.0
    lambda_tri: float = 0.0
    lambda_sheaf: float = 0.0
    lambda_j: float = 0.0
    d_max: int = 32
    bootstrap: int = 0
    workers: int = 1
    seed: int = 0
    out_dir: Optional[str] = None
    min_regime_rows: int = 25

    def __post_init__(self):
        if (self.input_path is None) == (self.synthetic is None):
            raise ValueError(
                "exactly one of input_path / synthetic must be given")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.learner not in LEARNERS:
            raise ValueError(f"learner must be one of {LEARNERS}")
        if self.bootstrap < 0:
            raise ValueError("bootstrap count cannot be negative")


def load_csv(path, env_col: str = "env",
             min_rows: int = 25) -> MultiRegimeData:
    """Rows partitioned by the env column; numeric columns become features.

    A missing env column degrades to a single regime named "pooled";
    non-numeric feature columns are dropped, and regimes below min_rows are
    excluded. Both degradations warn. Zero usable regimes or zero numeric
    columns is an error.
    """
    frame = pd.read_csv(path)
    if env_col in frame.columns:
        env = frame[env_col].astype(str)
        features = frame.drop(columns=[env_col])
    else:
        warnings.warn(f"no {env_col!r} column; treating file as one regime")
        env = pd.Series(["pooled"] * len(frame))
        features = frame
    numeric = features.select_dtypes(include=[np.number])
    dropped = [c for c in features.columns if c not in numeric.columns]
    if dropped:
        warnings.warn(f"dropping non-numeric columns {dropped}")
    if numeric.shape[1] == 0:
        raise ValueError("no numeric feature columns")
    regimes = []
    for rid in env.unique():  # first-appearance order
        block = numeric[env.values == rid]
        if len(block) < min_rows:
            warnings.warn(
                f"regime {rid!r} has {len(block)} rows < {min_rows}; excluded")
            continue
        regimes.append(RegimeDataset(regime_id=str(rid),
                                     data=block.to_numpy(dtype=float),
                                     spec=RegimeSpec(regime_id=str(rid))))
    if not regimes:
        raise ValueError("no regime meets the minimum row count")
    return MultiRegimeData(regimes=tuple(regimes),
                           labels=tuple(numeric.columns))


def _parse_synthetic(text: str):
    parts = text.split(":")
    if len(parts) != 4:
        raise ValueError("synthetic spec must be d:density:R:n_per")
    return int(parts[0]), float(parts[1]), int(parts[2]), int(parts[3])


def _load_data(cfg: RunConfig) -> MultiRegimeData:
    if cfg.synthetic is not None:
        d, density, n_regimes, n_per = _parse_synthetic(cfg.synthetic)
        return make_benchmark(d=d, density=density, n_regimes=n_regimes,
                              n_per=n_per, seed=cfg.seed)
    return load_csv(cfg.input_path, env_col=cfg.env_col,
                    min_rows=cfg.min_regime_rows)


def _learner_params(cfg: RunConfig) -> dict:
    return {
        "alpha": cfg.alpha,
        "depth": cfg.depth,
        "agg": cfg.agg,
        "score": {"lambda_top": cfg.lambda_top, "lambda_tri": cfg.lambda_tri,
                  "lambda_sheaf": cfg.lambda_sheaf, "lambda_j": cfg.lambda_j,
                  "d_max": cfg.d_max, "seed": cfg.seed},
    }


def _regime_adjacency(task) -> np.ndarray:
    """Fit one regime and return its vote as a plain boolean adjacency.

    Runs in worker processes, so it is a module-level function over a
    picklable (regime_id, matrix, learner, params) tuple. Partially
    directed results are flattened to adjacency form (undirected edges
    occupy both cells) before leaving the fit.
    """
    rid, matrix, learner, params = task
    if learner == "ci":
        skel, sepsets = skeleton_search({rid: matrix}, alpha=params["alpha"],
                                        depth=params["depth"],
                                        kind=params["agg"])
        return orient(skel, sepsets).as_adjacency()
    score = dict(params["score"])
    if learner == "ges":
        score["lambda_top"] = score["lambda_tri"] = 0.0
    score_cfg = ScoreConfig(**score)
    search = tces_search if learner == "tces" else ges_search
    return dag_to_cpdag(search(matrix, score_cfg).dag).as_adjacency()


def _safe_fit(task):
    try:
        return task[0], _regime_adjacency(task), None
    except Exception as exc:
        return task[0], None, repr(exc)


def _map_phase(tasks, workers: int):
    if workers == 1 or len(tasks) <= 1:
        return [_safe_fit(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_fit, tasks))


def _metric_pair(pred: np.ndarray, truth) -> Optional[dict]:
    if truth is None:
        return None
    return {"skeleton": metric_block(pred, truth, mode="skeleton"),
            "directed": metric_block(pred, truth, mode="directed")}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _write_matrix_csv(path, matrix: np.ndarray, labels) -> None:
    pd.DataFrame(matrix, columns=list(labels)).to_csv(path, index=False)


def run_pipeline(cfg: RunConfig) -> dict:
    """Map per-regime fits, reduce adjacencies, report, write artifacts.

    Individual regime failures are recorded and drop out of aggregation
    (the effective regime count E shrinks); only a fully failed map phase
    aborts. The returned dict is the report.json content.
    """
    timing = {}
    t0 = time.perf_counter()
    data = _load_data(cfg)
    truth = data.truth.adj if data.truth is not None else None
    labels = data.labels
    timing["load"] = time.perf_counter() - t0

    params = _learner_params(cfg)
    tasks = [(r.regime_id, r.data, cfg.learner, params) for r in data.regimes]
    t0 = time.perf_counter()
    outcomes = _map_phase(tasks, cfg.workers)
    timing["map"] = time.perf_counter() - t0

    fitted, regime_info = {}, {}
    for rid, adj, err in sorted(outcomes, key=lambda r: r[0]):
        rows = next(r.data.shape[0] for r in data.regimes
                    if r.regime_id == rid)
        regime_info[rid] = {"n_rows": rows, "error": err,
                            "n_edges": None if err else int(adj.sum())}
        if err is None:
            fitted[rid] = adj
    if not fitted:
        raise RuntimeError(
            "every regime fit failed: "
            + "; ".join(f"{rid}: {info['error']}"
                        for rid, info in regime_info.items()))

    t0 = time.perf_counter()
    pooled_adj = _regime_adjacency(("pooled", data.pooled(), cfg.learner,
                                    params))
    timing["pooled"] = time.perf_counter() - t0

    order = sorted(fitted)
    adjs = [fitted[rid] for rid in order]
    t0 = time.perf_counter()
    table = support(adjs)
    rule = parse_rule(cfg.rule)
    accepted, visits = aggregate_stream(adjs, rule)
    margins = stability_margin_report(table)
    timing["aggregate"] = time.perf_counter() - t0

    rule_block = {
        "n_edges": int(accepted.sum()),
        "visits_max": int(visits.max()) if visits.size else 0,
        "visits_mean": float(visits.mean()) if visits.size else 0.0,
        "metrics": _metric_pair(accepted, truth),
    }

    pi_block = None
    pi_adjacency = None
    policy = OrientationPolicy(delta_margin=cfg.delta,
                               guards=frozenset(tuple(g) for g in cfg.guards))
    if cfg.pi_grid:
        t0 = time.perf_counter()
        if len(order) < 2:
            warnings.warn("pi selection needs at least 2 fitted regimes")
        else:
            by_id = {r.regime_id: r.data for r in data.regimes}
            n_val = max(1, len(order) // 5)
            train = [by_id[rid] for rid in order[:-n_val]]
            val = [by_id[rid] for rid in order[-n_val:]]
            best_pi, pi_table = select_pi(table.F, cfg.pi_grid, train, val,
                                          policy)
            pdag = orient_net_preference(table.F, policy,
                                         pi_skeleton(table.F, best_pi))
            pi_adjacency = pdag.as_adjacency()
            pi_block = {"chosen": best_pi, "table": pi_table,
                        "n_edges": int(pi_adjacency.sum()),
                        "metrics": _metric_pair(pi_adjacency, truth)}
        timing["select_pi"] = time.perf_counter() - t0

    boot_block = None
    if cfg.bootstrap > 0 and cfg.learner != "ci":
        t0 = time.perf_counter()
        score = dict(params["score"])
        if cfg.learner == "ges":
            score["lambda_top"] = score["lambda_tri"] = 0.0
        freqs = bootstrap_ges(data, cfg.bootstrap, ScoreConfig(**score),
                              np.random.default_rng(cfg.seed))
        boot_block = {"directed": freqs.directed, "undirected":
                      freqs.undirected, "n_boot": freqs.n_boot}
        timing["bootstrap"] = time.perf_counter() - t0

    config_block = dataclasses.asdict(cfg)
    config_block.pop("workers")  # execution detail, reported under timing
    config_block.pop("out_dir")
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": config_block,
        "n_regimes": len(fitted),
        "regimes": regime_info,
        "pooled": {"n_edges": int(pooled_adj.sum()),
                   "metrics": _metric_pair(pooled_adj, truth)},
        "rules": {rule.tag(): rule_block},
        "pi": pi_block,
        "bootstrap": boot_block,
    }
    report = _jsonable(report)

    if cfg.out_dir is not None:
        t0 = time.perf_counter()
        out = cfg.out_dir
        os.makedirs(out, exist_ok=True)
        for rid in order:
            write_adjacency_csv(f"{out}/A_env_{rid}.csv", fitted[rid], labels)
        write_adjacency_csv(f"{out}/A_pooled.csv", pooled_adj, labels)
        write_adjacency_csv(f"{out}/A_Jstable_{rule.tag()}.csv", accepted,
                            labels)
        if pi_adjacency is not None:
            write_adjacency_csv(f"{out}/A_Jstable_pi.csv", pi_adjacency,
                                labels)
        _write_matrix_csv(f"{out}/support_counts.csv", table.C, labels)
        _write_matrix_csv(f"{out}/stability.csv", table.F, labels)
        _write_matrix_csv(f"{out}/margins.csv", margins.margins, labels)
        pd.DataFrame(margins.support_curve,
                     columns=["threshold", "n_edges"]).to_csv(
            f"{out}/support_curve.csv", index=False)
        timing["write"] = time.perf_counter() - t0

    timing["workers"] = cfg.workers
    report["timing"] = _jsonable(timing)
    if cfg.out_dir is not None:
        with open(f"{cfg.out_dir}/report.json", "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
    return report


def _cell_row(cfg: RunConfig, alpha: float, rule: str, depth: int) -> dict:
    row = {"alpha": alpha, "rule": rule, "depth": depth,
           "wall_clock": np.nan, "error": None, "n_edges": np.nan,
           "skeleton_f1": np.nan, "skeleton_fp": np.nan,
           "skeleton_shd": np.nan, "directed_shd": np.nan,
           "pooled_skeleton_f1": np.nan}
    cell = dataclasses.replace(cfg, alpha=alpha, rule=rule, depth=depth,
                               out_dir=None)
    start = time.perf_counter()
    try:
        report = run_pipeline(cell)
    except Exception as exc:
        row["error"] = repr(exc)
        return row
    row["wall_clock"] = time.perf_counter() - start
    block = next(iter(report["rules"].values()))
    row["n_edges"] = block["n_edges"]
    if block["metrics"] is not None:
        sk = block["metrics"]["skeleton"]
        row["skeleton_f1"] = sk["f1"]
        row["skeleton_fp"] = sk["fp"]
        row["skeleton_shd"] = sk["shd"]
        row["directed_shd"] = block["metrics"]["directed"]["shd"]
        row["pooled_skeleton_f1"] = \
            report["pooled"]["metrics"]["skeleton"]["f1"]
    return row


def sweep(cfg: RunConfig, alphas=None, rules=None, depths=None) -> pd.DataFrame:
    """Cross-product of alpha, rule, and depth grids; one row per cell.

    Cell failures are isolated into an error column. Best-per-metric marks
    are added for F1 (max) and SHD (min) where metrics exist.
    """
    alphas = tuple(alphas) if alphas else (cfg.alpha,)
    rules = tuple(rules) if rules else (cfg.rule,)
    depths = tuple(depths) if depths else (cfg.depth,)
    rows = [_cell_row(cfg, a, r, dp)
            for a in alphas for r in rules for dp in depths]
    frame = pd.DataFrame(rows)
    for col, pick in (("skeleton_f1", "max"), ("skeleton_shd", "min"),
                      ("directed_shd", "min")):
        values = frame[col]
        if values.notna().any():
            best = values.max() if pick == "max" else values.min()
            frame[f"best_{col}"] = values == best
        else:
            frame[f"best_{col}"] = False
    return frame


def _read_guards(path) -> Tuple[Tuple[int, int], ...]:
    guards = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            i, j = line.split(",")
            guards.append((int(i), int(j)))
    return tuple(guards)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="jstab",
        description="Per-regime structure discovery with j-stable "
                    "aggregation over regime covers.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV with an environment column")
    src.add_argument("--synthetic", metavar="d:density:R:n_per",
                     help="generate a linear-Gaussian benchmark")
    p.add_argument("--env-col", default="env")
    p.add_argument("--learner", default="ci", choices=LEARNERS)
    p.add_argument("--alpha", default="0.01",
                   help="CI test level; comma list sweeps")
    p.add_argument("--depth", default="3",
                   help="max conditioning set size; comma list sweeps")
    p.add_argument("--agg", default="fisher",
                   choices=["fisher", "stouffer", "tippett", "mean"])
    p.add_argument("--veto-ref", default=None)
    p.add_argument("--veto-aggregate", action="store_true")
    p.add_argument("--rule", default="intersection",
                   help="intersection|union|kofe:N|allbutk:N|ratio:X; "
                        "comma list sweeps")
    p.add_argument("--pi-grid", default=None,
                   help="comma list of candidate pi thresholds")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--guards", default=None,
                   help="file of i,j lines naming forbidden directions")
    p.add_argument("--lambda-top", type=float, default=0.0)
    p.add_argument("--lambda-tri", type=float, default=0.0)
    p.add_argument("--lambda-sheaf", type=float, default=0.0)
    p.add_argument("--lambda-j", type=float, default=0.0)
    p.add_argument("--dmax", type=int, default=32)
    p.add_argument("--bootstrap", type=int, default=0, metavar="B")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    alphas = tuple(float(a) for a in args.alpha.split(","))
    depths = tuple(int(x) for x in args.depth.split(","))
    rules = tuple(args.rule.split(","))
    pi_grid = (tuple(float(x) for x in args.pi_grid.split(","))
               if args.pi_grid else None)
    guards = _read_guards(args.guards) if args.guards else ()
    cfg = RunConfig(
        input_path=args.input, synthetic=args.synthetic,
        env_col=args.env_col, learner=args.learner, alpha=alphas[0],
        depth=depths[0], agg=args.agg, veto_ref=args.veto_ref,
        veto_aggregate=args.veto_aggregate, rule=rules[0], pi_grid=pi_grid,
        delta=args.delta, guards=guards, lambda_top=args.lambda_top,
        lambda_tri=args.lambda_tri, lambda_sheaf=args.lambda_sheaf,
        lambda_j=args.lambda_j, d_max=args.dmax, bootstrap=args.bootstrap,
        workers=args.workers, seed=args.seed, out_dir=args.out)
    if len(alphas) > 1 or len(rules) > 1 or len(depths) > 1:
        frame = sweep(cfg, alphas=alphas, rules=rules, depths=depths)
        frame.to_csv(f"{args.out}/sweep.csv", index=False)
        ok = frame[frame["error"].isna()]
        if len(ok) == 0:
            print("sweep: every cell failed; see sweep.csv")
            return 1
        pick = ok.iloc[0]
        if ok["skeleton_f1"].notna().any():
            pick = ok.loc[ok["skeleton_f1"].idxmax()]
        cfg = dataclasses.replace(cfg, alpha=float(pick["alpha"]),
                                  rule=str(pick["rule"]),
                                  depth=int(pick["depth"]))
        print(f"sweep: {len(frame)} cells; rerunning best cell "
              f"(alpha={cfg.alpha}, rule={cfg.rule}, depth={cfg.depth})")
    report = run_pipeline(cfg)
    keys = ", ".join(sorted(report["rules"]))
    print(f"wrote {args.out}/report.json ({report['n_regimes']} regimes, "
          f"rules: {keys})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
