"""Two-plant exposure demo: simulation, covers, chart frequencies."""

import dataclasses

import numpy as np
import pytest

from jstab.interference import (
    ExposureSeries,
    InterferenceConfig,
    chart_frequencies,
    regime_masks,
    simulate_interference,
    stability_decision,
)

CFG = InterferenceConfig()


def _series_with(theta, mixing):
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    mixing = np.asarray(mixing, dtype=float)
    zeros = np.zeros(n)
    return ExposureSeries(z1=np.zeros(n, dtype=int), z2=np.zeros(n, dtype=int),
                          theta=theta, mixing=mixing, e1=zeros, e2=zeros,
                          y=zeros)


def test_structural_equations_hold_exactly():
    cfg = dataclasses.replace(CFG, t_steps=500, eta_sd=0.0, eps_sd=0.0)
    s = simulate_interference(cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(s.y, cfg.beta1 * s.e1 + cfg.beta2 * s.e2)


def test_noise_scale_matches_config():
    s = simulate_interference(dataclasses.replace(CFG, t_steps=20000),
                              np.random.default_rng(1))
    resid = s.y - CFG.beta1 * s.e1 - CFG.beta2 * s.e2
    assert np.std(resid) == pytest.approx(CFG.eps_sd, rel=0.05)


def test_zero_beta2_partials_out():
    cfg = dataclasses.replace(CFG, t_steps=10000, beta2=0.0)
    s = simulate_interference(cfg, np.random.default_rng(2))

    # partial correlation of E2 with Y given E1 via residuals
    def _resid(a, b):
        slope, icpt = np.polyfit(b, a, 1)
        return a - slope * b - icpt
    pc = np.corrcoef(_resid(s.e2, s.e1), _resid(s.y, s.e1))[0, 1]
    assert abs(pc) < 0.03


def test_sector_contrast_in_outcome_means():
    cfg = dataclasses.replace(CFG, t_steps=10000)
    s = simulate_interference(cfg, np.random.default_rng(3))
    masks = regime_masks(s, cfg)
    for sector, lo, hi in (("WL", 0.3, np.inf), ("E", 0.0, 0.1)):
        idx = masks[sector]
        on = s.y[idx][s.z1[idx] == 1].mean()
        off = s.y[idx][s.z1[idx] == 0].mean()
        assert lo <= on - off < hi


def test_membership_examples():
    s = _series_with([270.0, 90.0, 10.0], [-1.0, 0.5, 0.0])
    with pytest.warns(UserWarning):  # E&LM has no member here
        masks = regime_masks(s, CFG)
    assert 0 in masks["WL"] and 0 in masks["WS"] and 0 in masks["LM"]
    assert 0 in masks["WL&LM"]
    assert 1 in masks["E"] and 1 not in masks["WL"]
    assert 1 not in masks.get("E&LM", [])
    assert 2 not in masks["WL"] and 2 not in masks["E"]


def test_cover_nesting():
    s = simulate_interference(dataclasses.replace(CFG, t_steps=5000),
                              np.random.default_rng(4))
    masks = regime_masks(s, CFG)
    assert len(masks["WS"]) <= len(masks["WL"])
    assert set(masks["WS"]).issubset(set(masks["WL"]))
    assert set(masks["WL&LM"]) == set(masks["WL"]) & set(masks["LM"])


def test_empty_cover_warned_and_dropped():
    s = _series_with(np.full(300, 270.0), np.zeros(300))  # never in east
    with pytest.warns(UserWarning):
        masks = regime_masks(s, CFG)
    assert "E" not in masks and "WL" in masks


def test_west_east_frequency_flip():
    s = simulate_interference(CFG, np.random.default_rng(5))
    masks = regime_masks(s, CFG)
    for west in ("WL", "WS", "WL&LM"):
        f = chart_frequencies(s, masks[west], CFG.k_charts, CFG.tau_beta)
        assert f.f_e1 >= 0.8 and f.f_e2 <= 0.2
    for east in ("E", "E&LM"):
        f = chart_frequencies(s, masks[east], CFG.k_charts, CFG.tau_beta)
        assert f.f_e2 >= 0.8 and f.f_e1 <= 0.2


def test_null_betas_rarely_cross_threshold():
    cfg = dataclasses.replace(CFG, t_steps=10000, beta1=0.0, beta2=0.0)
    s = simulate_interference(cfg, np.random.default_rng(6))
    masks = regime_masks(s, cfg)
    f = chart_frequencies(s, masks["WL"], cfg.k_charts, cfg.tau_beta)
    assert f.f_e1 < 0.2 and f.f_e2 < 0.2


def test_outcome_scaling_leaves_decisions_unchanged():
    s = simulate_interference(dataclasses.replace(CFG, t_steps=6000),
                              np.random.default_rng(7))
    masks = regime_masks(s, CFG)
    scaled = dataclasses.replace(s, y=s.y * 3.0)
    for name, idx in masks.items():
        a = chart_frequencies(s, idx, CFG.k_charts, CFG.tau_beta)
        b = chart_frequencies(scaled, idx, CFG.k_charts, CFG.tau_beta)
        assert a.f_e1 == b.f_e1 and a.f_e2 == b.f_e2


def test_chart_frequencies_guards():
    s = simulate_interference(dataclasses.replace(CFG, t_steps=1000),
                              np.random.default_rng(8))
    with pytest.raises(ValueError):
        chart_frequencies(s, np.arange(15), 10, CFG.tau_beta)  # < 2K rows
    # a constant-exposure stretch makes its shard unusable
    e1 = s.e1.copy()
    e1[:60] = 1.0
    broken = dataclasses.replace(s, e1=e1)
    f = chart_frequencies(broken, np.arange(600), 10, CFG.tau_beta)
    assert f.k_used == 9 and f.n_skipped == 1
    assert f.betas.shape == (9, 2)


def test_stability_decision_rules():
    full = {"a": (1.0, 1.0), "b": (1.0, 0.9)}
    assert stability_decision(full, 0.8) == {"E1->Y": True, "E2->Y": True}
    mixed = {"a": (1.0, 0.5), "b": (1.0, 0.9)}
    assert stability_decision(mixed, 0.8) == {"E1->Y": True, "E2->Y": False}
    assert stability_decision(mixed, 0.0) == {"E1->Y": True, "E2->Y": True}


def test_config_validation():
    with pytest.raises(ValueError):
        InterferenceConfig(k_charts=1)
    with pytest.raises(ValueError):
        InterferenceConfig(tau_beta=0.0)
    with pytest.raises(ValueError):
        InterferenceConfig(west_small=(100.0, 340.0))  # not inside WL
    with pytest.raises(ValueError):
        simulate_interference(dataclasses.replace(CFG, t_steps=50),
                              np.random.default_rng(9))
