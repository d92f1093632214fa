"""Correlation statistics and significance tests against scipy oracles."""

import math
from itertools import combinations

import numpy as np
import pytest
from scipy import special, stats

from maskscore import (
    AllTied,
    DegenerateInput,
    LengthMismatch,
    average_ranks,
    bootstrap_ci,
    kendall_tau,
    mann_whitney_u,
    mix_seed,
    pairwise_accuracy,
    pearson_r,
    spearman_rho,
    system_level_aggregate,
    williams_test,
)


def random_pairs(rng, n, ties=False):
    if ties:
        xs = rng.integers(0, max(2, n // 2), size=n).astype(float)
        ys = rng.integers(0, max(2, n // 2), size=n).astype(float)
    else:
        xs = rng.normal(size=n)
        ys = rng.normal(size=n)
    return xs, ys


def test_pearson_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(200):
        xs, ys = random_pairs(rng, int(rng.integers(3, 40)))
        assert pearson_r(xs, ys) == pytest.approx(
            stats.pearsonr(xs, ys).statistic, abs=1e-12
        )


def test_spearman_matches_scipy_with_ties():
    rng = np.random.default_rng(2)
    for _ in range(200):
        xs, ys = random_pairs(rng, int(rng.integers(4, 30)), ties=True)
        try:
            got = spearman_rho(xs, ys)
        except AllTied:
            assert len(set(xs)) == 1 or len(set(ys)) == 1
            continue
        assert got == pytest.approx(stats.spearmanr(xs, ys).statistic, abs=1e-12)


def test_spearman_is_pearson_of_ranks():
    rng = np.random.default_rng(3)
    for _ in range(200):
        xs, ys = random_pairs(rng, int(rng.integers(4, 25)), ties=True)
        try:
            got = spearman_rho(xs, ys)
        except AllTied:
            continue
        want = pearson_r(average_ranks(xs), average_ranks(ys))
        assert abs(got - want) <= 1e-12


def test_average_ranks_matches_scipy():
    rng = np.random.default_rng(4)
    for _ in range(100):
        xs, _ = random_pairs(rng, int(rng.integers(2, 30)), ties=True)
        assert np.array_equal(average_ranks(xs), stats.rankdata(xs))


def test_kendall_matches_scipy_with_ties():
    rng = np.random.default_rng(5)
    for _ in range(200):
        xs, ys = random_pairs(rng, int(rng.integers(4, 25)), ties=True)
        try:
            got = kendall_tau(xs, ys)
        except AllTied:
            assert len(set(xs)) == 1 or len(set(ys)) == 1
            continue
        assert got == pytest.approx(stats.kendalltau(xs, ys).statistic, abs=1e-12)


def brute_force_tau_b(xs, ys):
    concordant = discordant = ties_x = ties_y = 0
    n = len(xs)
    for i, j in combinations(range(n), 2):
        dx = xs[i] - xs[j]
        dy = ys[i] - ys[j]
        if dx == 0:
            ties_x += 1
        if dy == 0:
            ties_y += 1
        if dx * dy > 0:
            concordant += 1
        elif dx * dy < 0:
            discordant += 1
    pairs = n * (n - 1) // 2
    denom = math.sqrt((pairs - ties_x) * (pairs - ties_y))
    if denom == 0:
        raise AllTied("degenerate")
    return (concordant - discordant) / denom


def test_kendall_matches_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(300):
        n = int(rng.integers(2, 9))
        xs = rng.integers(0, 4, size=n).astype(float)
        ys = rng.integers(0, 4, size=n).astype(float)
        try:
            want = brute_force_tau_b(list(xs), list(ys))
        except AllTied:
            with pytest.raises(AllTied):
                kendall_tau(xs, ys)
            continue
        assert kendall_tau(xs, ys) == want


def test_constant_side_raises_all_tied():
    with pytest.raises(AllTied):
        pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(AllTied):
        spearman_rho([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    with pytest.raises(AllTied):
        kendall_tau([2.0, 2.0], [1.0, 3.0])
    # identical transcendentals must also count as constant, not as a
    # side with an ulp of accidental variance
    xs = [-math.log(54.0)] * 40
    ys = list(np.random.default_rng(7).normal(size=40))
    with pytest.raises(AllTied):
        pearson_r(xs, ys)


def test_paired_input_validation():
    with pytest.raises(LengthMismatch):
        pearson_r([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(LengthMismatch):
        pearson_r([1.0], [2.0])
    with pytest.raises(ValueError):
        pearson_r([1.0, float("inf")], [1.0, 2.0])


def test_perfect_correlations_clamped():
    xs = [1.0, 2.0, 3.0, 4.0]
    assert pearson_r(xs, xs) == 1.0
    assert pearson_r(xs, [-v for v in xs]) == -1.0
    assert spearman_rho(xs, [10.0, 20.0, 30.0, 40.0]) == 1.0
    assert kendall_tau(xs, xs) == 1.0


def test_williams_frozen_value():
    t, p = williams_test(0.6, 0.4, 0.5, 50)
    assert t == pytest.approx(1.7050785771525379, rel=1e-10)
    assert p == pytest.approx(0.0947820398, rel=1e-6)


def test_williams_equal_correlations():
    t, p = williams_test(0.45, 0.45, 0.3, 30)
    assert t == 0.0
    assert p == 1.0


def test_williams_alternatives_partition():
    t, p_two = williams_test(0.6, 0.4, 0.5, 50)
    _, p_gt = williams_test(0.6, 0.4, 0.5, 50, alternative="greater")
    _, p_lt = williams_test(0.6, 0.4, 0.5, 50, alternative="less")
    assert p_two == pytest.approx(2 * min(p_gt, p_lt), rel=1e-12)
    assert p_gt + p_lt == pytest.approx(1.0, rel=1e-12)


def test_williams_degenerate_inputs():
    with pytest.raises(DegenerateInput):
        williams_test(0.5, 0.4, 0.3, 3)
    with pytest.raises(DegenerateInput):
        williams_test(1.0, 0.4, 0.3, 30)
    with pytest.raises(DegenerateInput):
        williams_test(0.9, -0.9, 0.9, 30)
    with pytest.raises(ValueError):
        williams_test(0.5, 0.4, 0.3, 30, alternative="both")


def test_t_distribution_tail_matches_scipy():
    for t in (0.0, 0.5, 1.7, 3.2, 9.0):
        for df in (1, 2, 5, 17, 120):
            assert 1.0 - special.stdtr(df, t) == pytest.approx(
                __import__("maskscore.metaeval", fromlist=["student_t_sf"]).student_t_sf(t, df),
                rel=1e-10,
            )


def test_incomplete_beta_matches_scipy():
    metaeval = __import__("maskscore.metaeval", fromlist=["incomplete_beta"])
    for a in (0.5, 1.0, 3.5, 10.0):
        for b in (0.5, 2.0, 7.0):
            for x in (0.0, 0.1, 0.5, 0.9, 1.0):
                assert metaeval.incomplete_beta(a, b, x) == pytest.approx(
                    special.betainc(a, b, x), rel=1e-10, abs=1e-15
                )


def test_mann_whitney_hand_example():
    u, p = mann_whitney_u([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert u == 0.0
    assert p == pytest.approx(0.1, rel=1e-12)


def test_mann_whitney_exact_matches_scipy_without_ties():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n_a = int(rng.integers(2, 7))
        n_b = int(rng.integers(2, 13 - n_a))
        vals = rng.permutation(30)[: n_a + n_b].astype(float)
        u, p = mann_whitney_u(vals[:n_a], vals[n_a:])
        ref = stats.mannwhitneyu(
            vals[:n_a], vals[n_a:], alternative="two-sided", method="exact"
        )
        assert u == ref.statistic
        assert p == pytest.approx(ref.pvalue, abs=1e-12)


def test_mann_whitney_exact_with_ties_vs_enumeration():
    rng = np.random.default_rng(9)
    for _ in range(40):
        n_a = int(rng.integers(2, 6))
        n_b = int(rng.integers(2, 11 - n_a))
        pooled = rng.integers(0, 3, size=n_a + n_b).astype(float)
        a, b = pooled[:n_a], pooled[n_a:]
        u_obs, p = mann_whitney_u(a, b)

        def u_of(xs, ys):
            return sum(
                1.0 if x > y else 0.5 if x == y else 0.0 for x in xs for y in ys
            )

        assert u_obs == u_of(a, b)
        mean_u = n_a * n_b / 2.0
        gap = abs(u_obs - mean_u)
        hits = total = 0
        for picked in combinations(range(len(pooled)), n_a):
            rest = [i for i in range(len(pooled)) if i not in picked]
            u = u_of(pooled[list(picked)], pooled[rest])
            if abs(u - mean_u) >= gap - 1e-12:
                hits += 1
            total += 1
        assert p == pytest.approx(hits / total, abs=1e-12)


def test_mann_whitney_normal_matches_scipy():
    rng = np.random.default_rng(10)
    for _ in range(100):
        n_a, n_b = rng.integers(8, 25, size=2)
        a = rng.integers(0, 6, size=n_a).astype(float)
        b = rng.integers(0, 6, size=n_b).astype(float)
        u, p = mann_whitney_u(a, b)
        ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic")
        assert u == ref.statistic
        assert p == pytest.approx(ref.pvalue, abs=1e-12)


def test_u_statistic_sum_identity():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n_a = int(rng.integers(1, 12))
        n_b = int(rng.integers(1, 12))
        a = rng.integers(0, 5, size=n_a).astype(float)
        b = rng.integers(0, 5, size=n_b).astype(float)
        u_ab, _ = mann_whitney_u(a, b)
        u_ba, _ = mann_whitney_u(b, a)
        assert u_ab + u_ba == n_a * n_b


def test_mann_whitney_rejects_empty():
    with pytest.raises(LengthMismatch):
        mann_whitney_u([], [1.0])


def test_bootstrap_ci_contains_point_estimate():
    rng = np.random.default_rng(12)
    xs = rng.normal(size=40)
    ys = xs * 0.8 + rng.normal(scale=0.4, size=40)
    pairs = list(zip(xs, ys))

    def stat(a, b):
        return pearson_r(a, b)

    lo, hi = bootstrap_ci(pairs, stat, resamples=400, seed=5)
    point = stat(xs, ys)
    assert lo <= point <= hi
    assert lo < hi


def test_bootstrap_ci_deterministic():
    rng = np.random.default_rng(13)
    pairs = list(zip(rng.normal(size=25), rng.normal(size=25)))

    def stat(a, b):
        return float(np.mean(a - b))

    first = bootstrap_ci(pairs, stat, resamples=200, seed=9)
    second = bootstrap_ci(pairs, stat, resamples=200, seed=9)
    assert first == second
    other = bootstrap_ci(pairs, stat, resamples=200, seed=10)
    assert other != first


def test_bootstrap_ci_redraw_seed_path():
    # each attempt derives its generator from mix_seed(seed, attempt)
    rng = np.random.default_rng(14)
    pairs = list(zip(rng.normal(size=10), rng.normal(size=10)))
    metric = np.asarray([p[0] for p in pairs])
    human = np.asarray([p[1] for p in pairs])

    def stat(a, b):
        return float(np.mean(a) - np.mean(b))

    level = 0.9
    lo, hi = bootstrap_ci(pairs, stat, resamples=50, level=level, seed=3)
    values = []
    for attempt in range(50):
        gen = np.random.default_rng(mix_seed(3, attempt))
        idx = gen.integers(0, 10, size=10)
        values.append(stat(metric[idx], human[idx]))
    want_lo, want_hi = np.quantile(
        np.asarray(values), [(1 - level) / 2, (1 + level) / 2]
    )
    assert (lo, hi) == (float(want_lo), float(want_hi))


def test_bootstrap_degenerate_after_cap():
    pairs = [(1.0, 2.0)] * 8

    def stat(a, b):
        return pearson_r(a, b)

    with pytest.raises(DegenerateInput):
        bootstrap_ci(pairs, stat, resamples=5, seed=0)


def test_bootstrap_validation():
    with pytest.raises(LengthMismatch):
        bootstrap_ci([(1.0, 2.0)], lambda a, b: 0.0)
    with pytest.raises(ValueError):
        bootstrap_ci([(1.0, 2.0), (2.0, 3.0)], lambda a, b: 0.0, level=1.0)


def test_pairwise_accuracy_cases():
    scores = [3.0, 1.0, 2.0, 2.0]
    assert pairwise_accuracy(scores, [(0, 1), (2, 1)]) == 1.0
    assert pairwise_accuracy(scores, [(1, 0)]) == 0.0
    assert pairwise_accuracy(scores, [(2, 3)]) == 0.5
    with pytest.raises(LengthMismatch):
        pairwise_accuracy(scores, [])


def test_system_level_aggregate_orders_and_averages():
    records = [
        ("sysB", -1.0, 3.0),
        ("sysA", -2.0, 4.0),
        ("sysB", -3.0, 5.0),
        (10, -9.0, 1.0),
    ]
    rows = system_level_aggregate(records)
    assert [r[0] for r in rows] == ["10", "sysA", "sysB"]
    assert rows[2] == ("sysB", -2.0, 4.0)
    assert rows[1] == ("sysA", -2.0, 4.0)
