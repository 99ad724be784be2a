"""Two-plant exposure study with overlapping wind-sector covers.

Two emitters are switched on and off at random while wind direction and a
mixing index modulate how much of each plume reaches the outcome series.
Covers slice time by wind sector (a wide and a narrow west sector, an east
sector, a low-mixing slice, and intersections); each cover is cut into
contiguous charts, a standardized regression of the outcome on both
exposures runs per chart, and an edge counts as present where its
coefficient clears a threshold. Stability then asks for a high presence
frequency in every member of a cover family.
"""

import warnings
from dataclasses import dataclass
from typing import Dict, Mapping, NamedTuple, Tuple

import numpy as np
import pandas as pd

from .stats import ols_fit

WEST_CENTER = 270.0
EAST_CENTER = 90.0
_MIN_SHARD_ROWS = 5


@dataclass(frozen=True)
class InterferenceConfig:
    """Simulation scales, sector bounds, and decision thresholds."""

    t_steps: int = 20000
    beta1: float = 1.0
    beta2: float = 1.0
    eta_sd: float = 0.05
    eps_sd: float = 0.1
    west_large: Tuple[float, float] = (230.0, 310.0)
    west_small: Tuple[float, float] = (250.0, 290.0)
    east: Tuple[float, float] = (70.0, 110.0)
    mixing_threshold: float = -0.5
    k_charts: int = 10
    tau_beta: float = 0.2
    pi: float = 0.8

    def __post_init__(self):
        if self.k_charts < 2:
            raise ValueError("need at least 2 charts per cover")
        if self.tau_beta <= 0:
            raise ValueError("tau_beta must be positive")
        lo, hi = self.west_small
        if not (self.west_large[0] <= lo <= hi <= self.west_large[1]):
            raise ValueError("west_small must nest inside west_large")
        if self.eta_sd < 0 or self.eps_sd < 0:
            raise ValueError("noise scales must be nonnegative")


@dataclass(frozen=True)
class ExposureSeries:
    """One simulated run: treatments, wind, mixing, exposures, outcome."""

    z1: np.ndarray
    z2: np.ndarray
    theta: np.ndarray
    mixing: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    y: np.ndarray


class ChartFrequencies(NamedTuple):
    f_e1: float
    f_e2: float
    betas: np.ndarray
    k_used: int
    n_skipped: int


def _wind_weight(theta: np.ndarray, center: float,
                 mixing: np.ndarray, threshold: float) -> np.ndarray:
    """Cosine bump around the sector center, floored at zero and
    amplified by 50% under low mixing."""
    bump = np.maximum(0.0, np.cos(np.deg2rad(theta - center)))
    return bump * (1.0 + 0.5 * (mixing < threshold))


def simulate_interference(cfg: InterferenceConfig,
                          rng: np.random.Generator) -> ExposureSeries:
    """Draws treatments, wind, and noise, then applies the two structural
    equations: exposures from wind-weighted treatments, outcome from both
    exposures."""
    if cfg.t_steps < 100:
        raise ValueError("need at least 100 time steps")
    n = cfg.t_steps
    z1 = rng.integers(0, 2, size=n)
    z2 = rng.integers(0, 2, size=n)
    theta = rng.uniform(0.0, 360.0, size=n)
    mixing = rng.standard_normal(n)
    w1 = _wind_weight(theta, WEST_CENTER, mixing, cfg.mixing_threshold)
    w2 = _wind_weight(theta, EAST_CENTER, mixing, cfg.mixing_threshold)
    e1 = w1 * z1 + cfg.eta_sd * rng.standard_normal(n)
    e2 = w2 * z2 + cfg.eta_sd * rng.standard_normal(n)
    y = cfg.beta1 * e1 + cfg.beta2 * e2 + cfg.eps_sd * rng.standard_normal(n)
    return ExposureSeries(z1=z1, z2=z2, theta=theta, mixing=mixing,
                          e1=e1, e2=e2, y=y)


def _in_sector(theta: np.ndarray, bounds: Tuple[float, float]) -> np.ndarray:
    return (theta >= bounds[0]) & (theta <= bounds[1])


def regime_masks(series: ExposureSeries,
                 cfg: InterferenceConfig) -> Dict[str, np.ndarray]:
    """Time-index sets for each cover; empty covers are warned about and
    dropped so downstream decisions never run on them."""
    base = {
        "WL": _in_sector(series.theta, cfg.west_large),
        "WS": _in_sector(series.theta, cfg.west_small),
        "E": _in_sector(series.theta, cfg.east),
        "LM": series.mixing < cfg.mixing_threshold,
    }
    base["WL&LM"] = base["WL"] & base["LM"]
    base["E&LM"] = base["E"] & base["LM"]
    masks = {}
    for name, hit in base.items():
        idx = np.flatnonzero(hit)
        if idx.size == 0:
            warnings.warn(f"cover {name} is empty; excluded")
            continue
        masks[name] = idx
    return masks


def _standardized_betas(series: ExposureSeries, rows: np.ndarray):
    """Coefficients of Y ~ E1 + E2 with all three columns z-scored;
    None when the shard is degenerate."""
    cols = [series.e1[rows], series.e2[rows], series.y[rows]]
    scaled = []
    for c in cols:
        sd = c.std()
        if sd == 0.0:
            return None
        scaled.append((c - c.mean()) / sd)
    X = np.column_stack(scaled[:2])
    try:
        fit = ols_fit(X, scaled[2])
    except np.linalg.LinAlgError:
        return None
    return fit.coefficients


def chart_frequencies(series: ExposureSeries, mask: np.ndarray, k: int,
                      tau_beta: float) -> ChartFrequencies:
    """Contiguous equal shards of a cover, one standardized fit each.

    An edge is present in a shard when its |coefficient| meets tau_beta;
    the frequency is the presence fraction over usable shards. Shards too
    small or degenerate to fit are skipped and reported in n_skipped.
    """
    mask = np.asarray(mask)
    if mask.size < 2 * k:
        raise ValueError("cover smaller than two rows per chart")
    betas = []
    skipped = 0
    for shard in np.array_split(np.sort(mask), k):
        if shard.size < _MIN_SHARD_ROWS:
            skipped += 1
            continue
        b = _standardized_betas(series, shard)
        if b is None:
            skipped += 1
            continue
        betas.append(b)
    if not betas:
        raise ValueError("no usable chart in this cover")
    stacked = np.vstack(betas)
    present = np.abs(stacked) >= tau_beta
    return ChartFrequencies(f_e1=float(present[:, 0].mean()),
                            f_e2=float(present[:, 1].mean()),
                            betas=stacked, k_used=len(betas),
                            n_skipped=skipped)


def stability_decision(freqs_by_cover: Mapping, pi: float) -> Dict[str, bool]:
    """An edge is stable on the family iff its frequency meets pi in every
    member. Accepts ChartFrequencies values or plain (f_e1, f_e2) pairs."""
    f1, f2 = [], []
    for val in freqs_by_cover.values():
        if isinstance(val, ChartFrequencies):
            f1.append(val.f_e1)
            f2.append(val.f_e2)
        else:
            f1.append(val[0])
            f2.append(val[1])
    return {"E1->Y": all(f >= pi for f in f1),
            "E2->Y": all(f >= pi for f in f2)}


def run_interference_demo(cfg: InterferenceConfig, seed: int,
                          out_dir=None) -> dict:
    """Full pipeline: simulate, build covers, score charts, decide
    stability per sector family; optionally writes the two CSV tables."""
    series = simulate_interference(cfg, np.random.default_rng(seed))
    masks = regime_masks(series, cfg)
    freqs = {name: chart_frequencies(series, idx, cfg.k_charts, cfg.tau_beta)
             for name, idx in masks.items()}
    west = {n: freqs[n] for n in ("WL", "WS", "WL&LM") if n in freqs}
    east = {n: freqs[n] for n in ("E", "E&LM") if n in freqs}
    decisions = {"west": stability_decision(west, cfg.pi),
                 "east": stability_decision(east, cfg.pi)}
    result = {"frequencies": freqs, "decisions": decisions, "masks": masks}
    if out_dir is not None:
        freq_rows = [{"cover": name, "f_e1y": f.f_e1, "f_e2y": f.f_e2,
                      "n_rows": int(masks[name].size), "k_used": f.k_used}
                     for name, f in freqs.items()]
        pd.DataFrame(freq_rows).to_csv(
            f"{out_dir}/interference_frequencies.csv", index=False)
        chart_rows = [{"cover": name, "chart": i,
                       "beta1_hat": float(b[0]), "beta2_hat": float(b[1])}
                      for name, f in freqs.items()
                      for i, b in enumerate(f.betas)]
        pd.DataFrame(chart_rows).to_csv(f"{out_dir}/charts.csv", index=False)
    return result
