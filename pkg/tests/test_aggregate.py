"""Gluing layer: support counts, threshold rules, orientation, pi selection, j-do."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jstab.aggregate import (
    OrientationPolicy,
    SupportTable,
    ThresholdRule,
    aggregate,
    aggregate_stream,
    jdo_backdoor,
    mixture_conditional,
    orient_net_preference,
    parse_rule,
    pi_skeleton,
    select_pi,
    stability_margin_report,
    support,
)
from jstab.synth import MultiRegimeData, RegimeDataset, RegimeSpec


def _random_stack(rng, E, d, p=0.3):
    mats = []
    for _ in range(E):
        m = rng.random((d, d)) < p
        np.fill_diagonal(m, False)
        mats.append(m)
    return mats


def _naive_threshold(mats, t):
    C = np.sum(mats, axis=0)
    out = C >= t
    np.fill_diagonal(out, False)
    return out


# ---------------------------------------------------------------- support

def test_support_identical():
    a = np.array([[0, 1], [0, 0]], dtype=bool)
    tab = support([a, a, a])
    assert tab.E == 3
    assert np.array_equal(tab.C, 3 * a.astype(int))
    assert np.array_equal(tab.F, a.astype(float))
    assert tab.s is tab.F


def test_support_single():
    a = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=bool)
    tab = support([a])
    assert np.array_equal(tab.F, a.astype(float))


def test_support_matches_naive_fold():
    rng = np.random.default_rng(0)
    mats = _random_stack(rng, 5, 6)
    tab = support(mats)
    d = 6
    for i in range(d):
        for j in range(d):
            want = 0 if i == j else sum(int(m[i, j]) for m in mats)
            assert tab.C[i, j] == want


def test_support_rejects_mismatch():
    with pytest.raises(ValueError):
        support([np.zeros((2, 2), dtype=bool), np.zeros((3, 3), dtype=bool)])
    with pytest.raises(ValueError):
        support([])


# ---------------------------------------------------------------- rules

def test_rule_equivalences():
    rng = np.random.default_rng(1)
    mats = _random_stack(rng, 6, 5)
    tab = support(mats)
    inter = aggregate(tab, ThresholdRule.intersection())
    assert np.array_equal(inter, aggregate(tab, ThresholdRule.kofe(6)))
    assert np.array_equal(aggregate(tab, ThresholdRule.union()),
                          aggregate(tab, ThresholdRule.kofe(1)))
    assert np.array_equal(aggregate(tab, ThresholdRule.allbutk(2)),
                          aggregate(tab, ThresholdRule.kofe(4)))


def test_rule_parsing():
    assert parse_rule("intersection") == ThresholdRule.intersection()
    assert parse_rule("union") == ThresholdRule.union()
    assert parse_rule("kofe:3") == ThresholdRule.kofe(3)
    assert parse_rule("allbutk:1") == ThresholdRule.allbutk(1)
    assert parse_rule("ratio:0.5") == ThresholdRule.ratio(0.5)
    with pytest.raises(ValueError):
        parse_rule("majority")


def test_rule_threshold_validation():
    tab = support(_random_stack(np.random.default_rng(2), 4, 4))
    for bad in (ThresholdRule.kofe(0), ThresholdRule.kofe(5),
                ThresholdRule.ratio(0.0), ThresholdRule.ratio(1.2)):
        with pytest.raises(ValueError):
            aggregate(tab, bad)


def test_aggregate_examples():
    a = np.array([[0, 1], [0, 0]], dtype=bool)
    assert np.array_equal(aggregate(support([a, a, a]),
                                    ThresholdRule.intersection()), a)
    b = np.zeros((2, 2), dtype=bool)
    tab = support([a, a, b])  # present in 2 of 3 charts
    assert aggregate(tab, ThresholdRule.allbutk(1))[0, 1]
    assert not aggregate(tab, ThresholdRule.intersection())[0, 1]


def test_ratio_ties_kept():
    a = np.array([[0, 1], [0, 0]], dtype=bool)
    b = np.zeros((2, 2), dtype=bool)
    tab = support([a, a, b, b])  # F = 0.5
    assert aggregate(tab, ThresholdRule.ratio(0.5))[0, 1]
    assert not aggregate(support([a, b, b, b]), ThresholdRule.ratio(0.5))[0, 1]


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_rule_nesting(seed):
    rng = np.random.default_rng(seed)
    E = int(rng.integers(1, 7))
    tab = support(_random_stack(rng, E, 5))
    inter = aggregate(tab, ThresholdRule.intersection())
    union = aggregate(tab, ThresholdRule.union())
    for tau in range(1, E + 1):
        mid = aggregate(tab, ThresholdRule.kofe(tau))
        assert not (inter & ~mid).any()
        assert not (mid & ~union).any()


# ---------------------------------------------------------------- streaming

@given(st.integers(0, 10**6))
@settings(max_examples=200, deadline=None)
def test_stream_equals_batch(seed):
    rng = np.random.default_rng(seed)
    E = int(rng.integers(1, 9))
    d = int(rng.integers(2, 8))
    mats = _random_stack(rng, E, d, p=float(rng.uniform(0.1, 0.9)))
    rules = [ThresholdRule.intersection(), ThresholdRule.union(),
             ThresholdRule.kofe(int(rng.integers(1, E + 1))),
             ThresholdRule.allbutk(int(rng.integers(0, E))),
             ThresholdRule.ratio(float(rng.uniform(0.05, 1.0)))]
    tab = support(mats)
    for rule in rules:
        got, visits = aggregate_stream(mats, rule)
        assert np.array_equal(got, aggregate(tab, rule))
        off = ~np.eye(d, dtype=bool)
        assert (visits[off] >= 1).all() and (visits[off] <= E).all()


def test_stream_intersection_rejects_on_first_absence():
    d = 4
    first = np.zeros((d, d), dtype=bool)
    rest = np.ones((d, d), dtype=bool)
    np.fill_diagonal(rest, False)
    adj, visits = aggregate_stream([first, rest, rest],
                                   ThresholdRule.intersection())
    assert not adj.any()
    off = ~np.eye(d, dtype=bool)
    assert (visits[off] == 1).all()


def test_stream_union_accepts_on_first_presence():
    d = 3
    full = np.ones((d, d), dtype=bool)
    np.fill_diagonal(full, False)
    empty = np.zeros((d, d), dtype=bool)
    adj, visits = aggregate_stream([full, empty, empty], ThresholdRule.union())
    off = ~np.eye(d, dtype=bool)
    assert adj[off].all()
    assert (visits[off] == 1).all()


# ---------------------------------------------------------------- skeleton

def test_pi_skeleton_examples():
    F = np.zeros((2, 2))
    F[0, 1] = 0.6
    assert pi_skeleton(F, 0.5)[0, 1] and pi_skeleton(F, 0.5)[1, 0]
    assert not pi_skeleton(F, 0.7).any()
    all_pairs = pi_skeleton(F, 0.0)
    assert all_pairs[0, 1] and all_pairs[1, 0]  # pi=0 keeps every pair


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_pi_skeleton_antitone_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    F = rng.random((5, 5))
    np.fill_diagonal(F, 0.0)
    lo = pi_skeleton(F, float(rng.uniform(0, 0.5)))
    hi = pi_skeleton(F, float(rng.uniform(0.5, 1.0)))
    assert not (hi & ~lo).any()
    assert np.array_equal(lo, lo.T)


# ---------------------------------------------------------------- orientation

def _freq(d, entries):
    F = np.zeros((d, d))
    for i, j, v in entries:
        F[i, j] = v
    return F


def test_orientation_margin():
    F = _freq(2, [(0, 1, 0.9), (1, 0, 0.1)])
    pdag = orient_net_preference(F, OrientationPolicy(), pi_skeleton(F, 0.5))
    assert pdag.directed[0, 1] and not pdag.directed[1, 0]
    assert not pdag.undirected.any()


def test_orientation_tie_stays_undirected():
    F = _freq(2, [(0, 1, 0.5), (1, 0, 0.5)])
    pdag = orient_net_preference(F, OrientationPolicy(), pi_skeleton(F, 0.4))
    assert not pdag.directed.any()
    assert pdag.undirected[0, 1]


def test_orientation_guard_blocks_winner():
    F = _freq(2, [(0, 1, 0.9), (1, 0, 0.1)])
    policy = OrientationPolicy(guards=frozenset({(0, 1)}))
    pdag = orient_net_preference(F, policy, pi_skeleton(F, 0.5))
    assert not pdag.directed.any()
    assert pdag.undirected[0, 1]


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_orientation_never_double_or_guarded(seed):
    rng = np.random.default_rng(seed)
    d = 5
    F = rng.random((d, d))
    np.fill_diagonal(F, 0.0)
    guards = frozenset((int(a), int(b)) for a, b in
                       rng.integers(0, d, size=(4, 2)) if a != b)
    policy = OrientationPolicy(delta_margin=float(rng.uniform(0, 0.3)),
                               guards=guards)
    pdag = orient_net_preference(F, policy, pi_skeleton(F, 0.3))
    assert not (pdag.directed & pdag.directed.T).any()
    for g in guards:
        assert not pdag.directed[g]


# ---------------------------------------------------------------- select_pi

def _chain_regimes(rng, n, ids, weights=(1.0, 1.0, 1.0, 1.0)):
    regs = []
    for rid in ids:
        X = np.zeros((n, 5))
        X[:, 0] = rng.normal(size=n)
        for v in range(1, 5):
            X[:, v] = weights[v - 1] * X[:, v - 1] + rng.normal(size=n)
        regs.append(RegimeDataset(rid, X, RegimeSpec(rid)))
    labels = tuple("X%d" % k for k in range(5))
    return MultiRegimeData(regimes=tuple(regs), labels=labels)


def test_select_pi_single_candidate():
    rng = np.random.default_rng(0)
    train = _chain_regimes(rng, 50, ["a"])
    val = _chain_regimes(rng, 50, ["b"])
    F = np.zeros((5, 5))
    pi, table = select_pi(F, [0.4], train, val)
    assert pi == 0.4
    assert len(table) == 1


def test_select_pi_degenerate_truth():
    rng = np.random.default_rng(1)
    train = _chain_regimes(rng, 200, ["a", "b"])
    val = _chain_regimes(rng, 200, ["c"])
    F = np.zeros((5, 5))
    for v in range(4):
        F[v, v + 1] = 1.0
    grid = [0.2, 0.5, 0.8, 1.0]
    pi, table = select_pi(F, grid, train, val)
    lls = [row["val_ll"] for row in table]
    assert max(lls) - min(lls) < 1e-9
    assert pi == 1.0  # ties resolve toward the sparser end


def test_select_pi_lands_in_frequency_gap():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(300 + seed)
        # two components: 0->1->2 and 3->4, cross pairs independent
        def gen(n, rid):
            X = np.zeros((n, 5))
            X[:, 0] = rng.normal(size=n)
            X[:, 1] = X[:, 0] + rng.normal(size=n)
            X[:, 2] = X[:, 1] + rng.normal(size=n)
            X[:, 3] = rng.normal(size=n)
            X[:, 4] = X[:, 3] + rng.normal(size=n)
            return RegimeDataset(rid, X, RegimeSpec(rid))
        labels = tuple("X%d" % k for k in range(5))
        train = MultiRegimeData(regimes=(gen(100, "a"), gen(100, "b")),
                                labels=labels)
        val = MultiRegimeData(regimes=(gen(500, "c"),), labels=labels)
        F = np.zeros((5, 5))
        for i, j in [(0, 1), (1, 2), (3, 4)]:
            F[i, j] = 0.9  # true edges
        for i, j in [(0, 3), (2, 4), (0, 4)]:
            F[i, j] = 0.2  # spurious cross-component edges
        pi, _ = select_pi(F, [round(0.1 * k, 1) for k in range(1, 11)],
                          train, val)
        hits += 0.2 < pi <= 0.9
    assert hits >= 16


def test_select_pi_records_undirected_drops():
    rng = np.random.default_rng(2)
    train = _chain_regimes(rng, 80, ["a"])
    val = _chain_regimes(rng, 80, ["b"])
    F = np.zeros((5, 5))
    F[0, 1] = F[1, 0] = 0.9  # tied, stays undirected
    pi, table = select_pi(F, [0.5], train, val)
    assert table[0]["undirected_dropped"] == 1


# ---------------------------------------------------------------- j-do

def _confounded_binary(rng, n):
    z = (rng.random(n) < 0.5).astype(float)
    x = (rng.random(n) < 0.2 + 0.6 * z).astype(float)
    y = (rng.random(n) < 0.1 + 0.3 * x + 0.4 * z).astype(float)
    return np.column_stack([x, y, z])


def test_jdo_sums_to_one():
    rng = np.random.default_rng(4)
    data = {"e0": rng.normal(size=(400, 3)), "e1": rng.normal(size=(350, 3))}
    vals, probs = jdo_backdoor(data, x_var=0, x_val=1, y_var=1, z_vars=(2,),
                               cover=("e0", "e1"))
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert (probs >= 0).all()


def test_jdo_single_regime_identity():
    rng = np.random.default_rng(5)
    tbl = _confounded_binary(rng, 5000)
    one = jdo_backdoor({"a": tbl}, 0, 1.0, 1, (2,), cover=("a",))
    two = jdo_backdoor({"a": tbl, "b": tbl}, 0, 1.0, 1, (2,), cover=("a", "b"))
    np.testing.assert_allclose(one[1], two[1], atol=1e-12)


def test_jdo_independent_z_collapses():
    rng = np.random.default_rng(6)
    n = 20_000
    z = (rng.random(n) < 0.5).astype(float)
    x = (rng.random(n) < 0.3).astype(float)
    y = (rng.random(n) < 0.2 + 0.5 * x).astype(float)
    data = np.column_stack([x, y, z])
    _, probs = jdo_backdoor({"e": data}, 0, 1.0, 1, (2,), cover=("e",))
    naive = y[x == 1].mean()
    assert probs[1] == pytest.approx(naive, abs=0.02)


def test_jdo_recovers_do_contrast():
    rng = np.random.default_rng(7)
    data = _confounded_binary(rng, 100_000)
    _, p1 = jdo_backdoor({"e": data}, 0, 1.0, 1, (2,), cover=("e",))
    _, p0 = jdo_backdoor({"e": data}, 0, 0.0, 1, (2,), cover=("e",))
    # do-surgery oracle: X forced, Z and Y mechanisms intact
    def surgery(xv):
        z = (rng.random(200_000) < 0.5).astype(float)
        y = (rng.random(200_000) < 0.1 + 0.3 * xv + 0.4 * z).astype(float)
        return y.mean()
    assert p1[1] == pytest.approx(surgery(1.0), abs=0.05)
    assert p0[1] == pytest.approx(surgery(0.0), abs=0.05)
    # and the naive conditional is visibly confounded upward at x=1
    naive = data[data[:, 0] == 1, 1].mean()
    assert naive - p1[1] > 0.05


def test_jdo_continuous_binning_and_trimmed():
    rng = np.random.default_rng(8)
    data = {"e%d" % k: rng.normal(size=(600, 3)) for k in range(5)}
    vals, probs = jdo_backdoor(data, 0, 2, 1, (2,), cover=sorted(data),
                               kind="trimmed")
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert len(vals) == 4  # default quantile bins


def test_jdo_rejects_bad_config():
    rng = np.random.default_rng(9)
    data = {"e": _confounded_binary(rng, 100)}
    with pytest.raises(ValueError):
        jdo_backdoor(data, 0, 1.0, 1, (2,), cover=())
    with pytest.raises(ValueError):
        jdo_backdoor(data, 0, 1.0, 1, (2,), cover=("e",), kind="fisher")
    with pytest.raises(ValueError):
        jdo_backdoor(data, 0, 7.0, 1, (2,), cover=("e",))  # unseen x level


# ---------------------------------------------------------------- mixture

def test_mixture_conditional_sanity_value():
    kernel = np.zeros((2, 2, 2))
    kernel[1, 0] = [0.35, 0.65]
    kernel[1, 1] = [0.25, 0.75]
    kernel[0, 0] = [0.5, 0.5]
    kernel[0, 1] = [0.5, 0.5]
    mix = np.array([[0.5, 0.5], [0.2, 0.8]])
    out = mixture_conditional(kernel, mix, x_val=1)
    assert out[1] == pytest.approx(0.73, abs=1e-12)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_mixture_degenerate_and_uniform():
    kernel = np.zeros((1, 2, 2))
    kernel[0, 0] = [0.9, 0.1]
    kernel[0, 1] = [0.4, 0.6]
    np.testing.assert_allclose(
        mixture_conditional(kernel, np.array([[0.0, 1.0]]), 0), [0.4, 0.6])
    same = np.zeros((1, 2, 2))
    same[0, 0] = same[0, 1] = [0.3, 0.7]
    np.testing.assert_allclose(
        mixture_conditional(same, np.array([[0.5, 0.5]]), 0), [0.3, 0.7])


def test_mixture_rejects_unnormalized():
    kernel = np.full((1, 1, 2), 0.9)
    with pytest.raises(ValueError):
        mixture_conditional(kernel, np.array([[1.0]]), 0)


# ---------------------------------------------------------------- reporting

def test_margin_report_zero_support():
    tab = support([np.zeros((3, 3), dtype=bool)] * 2)
    rep = stability_margin_report(tab)
    assert rep.support_curve[0] == (0, 6)  # off-diagonal ordered pairs
    assert rep.support_curve[1:] == [(1, 0), (2, 0)]
    assert not rep.margins.any()


def test_margin_report_full_support():
    a = np.ones((3, 3), dtype=bool)
    np.fill_diagonal(a, False)
    rep = stability_margin_report(support([a, a]))
    assert all(count == 6 for _, count in rep.support_curve)


@given(st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_margin_report_curve_nonincreasing(seed):
    rng = np.random.default_rng(seed)
    tab = support(_random_stack(rng, int(rng.integers(1, 6)), 5))
    rep = stability_margin_report(tab)
    counts = [c for _, c in rep.support_curve]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    np.testing.assert_allclose(rep.margins, tab.F - tab.F.T)
