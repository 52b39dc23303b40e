import itertools
import math

import numpy as np
import pytest

from lqgkpz.errors import DomainError
from lqgkpz.cascade import (cascade_doubling_stat, doubling_trend, eta_critical, interval_mass,
                            sample_cascade, tail_exponent, total_masses)

from conftest import mean_se, within


def test_depth_zero():
    t = sample_cascade(1.0, 0, 3)
    assert t.total == 1.0 and interval_mass(t, 0, 0) == 1.0


def test_gamma0_leaves():
    t = sample_cascade(0.0, 7, 3)
    assert np.all(t.leaf_mass == 2.0 ** -7)
    for n in range(8):
        assert interval_mass(t, n, 2 ** n - 1) == 2.0 ** -n


def test_leaf_mass_matches_weights():
    t = sample_cascade(0.8, 5, 9)
    for k in (0, 13, 31):
        w = 2.0 ** -5
        for n in range(1, 6):
            w *= t.node_weights[n - 1][k >> (5 - n)]
        assert math.isclose(t.leaf_mass[k], w, rel_tol=1e-13)
    assert np.all(t.leaf_mass > 0)


@pytest.mark.parametrize("gamma", [0.5, 1.0])
def test_mean_total_mass(gamma):
    tot = [sample_cascade(gamma, 6, s).total for s in range(10_000)]
    m, se = mean_se(tot)
    assert within(m, 1.0, se)


@pytest.mark.parametrize("gamma", [0.5, 1.0])
def test_fast_total_masses_mean(gamma):
    m, se = mean_se(total_masses(gamma, 8, 10_000, 1))
    assert within(m, 1.0, se)


def test_sibling_additivity():
    t = sample_cascade(1.0, 10, 4)
    for n in range(10):
        lm = t.level_masses
        assert np.array_equal(lm[n], lm[n + 1][0::2] + lm[n + 1][1::2])
    assert interval_mass(t, 0, 0) == t.total


def test_deterministic():
    a = sample_cascade(1.0, 8, 21)
    b = sample_cascade(1.0, 8, 21)
    assert np.array_equal(a.leaf_mass, b.leaf_mass)
    assert np.array_equal(total_masses(1.0, 6, 50, 2), total_masses(1.0, 6, 50, 2, threads=3))


def test_sample_rejects():
    with pytest.raises(DomainError):
        sample_cascade(1.2, 4, 0)           # 1.44 > 2 ln 2
    with pytest.raises(DomainError):
        sample_cascade(1.0, 25, 0)
    t = sample_cascade(1.0, 3, 0)
    with pytest.raises(DomainError):
        interval_mass(t, 2, 4)
    with pytest.raises(DomainError):
        interval_mass(t, 4, 0)


# --- tail exponent ----------------------------------------------------------

def test_hill_pareto():
    x = np.random.default_rng(5).pareto(1.5, 100_000) + 1.0
    a, se = tail_exponent(x)
    assert abs(a - 1.5) < 0.1 and se > 0


def test_hill_scale_invariant():
    x = np.random.default_rng(6).pareto(2.0, 20_000) + 1.0
    assert abs(tail_exponent(x)[0] - tail_exponent(7.3 * x)[0]) < 1e-12


def test_hill_rejects():
    with pytest.raises(DomainError):
        tail_exponent(np.arange(1.0, 5000.0))
    with pytest.raises(DomainError):
        tail_exponent(np.ones(20_000))
    with pytest.raises(DomainError):
        tail_exponent(-np.arange(1.0, 20_001.0))


def test_moment_dichotomy():
    # alpha = 2 ln 2 < 2: the second moment keeps growing with the sample size
    # while the first stabilizes
    m = total_masses(1.0, 14, 100_000, 2)
    blocks = m.reshape(10, -1)
    ratio = [np.mean(m ** q) / np.median(np.mean(blocks ** q, axis=1)) for q in (1, 2)]
    assert abs(ratio[0] - 1) < 0.05
    assert ratio[1] > 1.5


# --- doubling statistic -----------------------------------------------------

def test_doubling_stat_gamma0():
    t = sample_cascade(0.0, 10, 0)
    for n, eta in ((0, 0.3), (4, 0.2), (8, 0.6)):
        exact = 2.0 ** -n / 2.0 ** (-(n + 1) * (1 - eta))
        assert math.isclose(cascade_doubling_stat(t, eta, n), exact, rel_tol=1e-12)


def test_doubling_stat_eta0():
    for seed in range(20):
        t = sample_cascade(1.0, 8, seed)
        for n in range(8):
            assert cascade_doubling_stat(t, 0.0, n) >= 2.0
            assert cascade_doubling_stat(t, 0.0, n, sibling=True) >= 1.0


def test_doubling_stat_brute_force():
    t = sample_cascade(1.0, 5, 20240601)
    leaves = t.leaf_mass

    def mass(n, k):
        w = 2 ** (5 - n)
        return sum(leaves[k * w:(k + 1) * w])

    for eta, sib in itertools.product((0.0, 0.2, 0.6), (False, True)):
        best = max(mass(4, j // 2) / mass(5, j ^ 1 if sib else j) ** (1 - eta) for j in range(32))
        assert math.isclose(cascade_doubling_stat(t, eta, 4, sib), best, rel_tol=1e-12)


def test_doubling_stat_range():
    t = sample_cascade(1.0, 5, 0)
    with pytest.raises(DomainError):
        cascade_doubling_stat(t, 0.2, 5)


def test_eta_critical(oracle):
    assert math.isclose(eta_critical(1.0, "gmc"), 0.2)
    assert abs(eta_critical(1.0, "cascade") - oracle["eta_critical_cascade_gamma1"]) < 1e-15
    assert eta_critical(0.0, "gmc") == 0 and eta_critical(0.0, "cascade") == 0
    assert eta_critical(1e-4, "cascade") < 1e-7
    with pytest.raises(DomainError):
        eta_critical(1.0, "tree")


def test_doubling_trend_small():
    rows, st = doubling_trend(1.0, [0.2, 0.6], [4, 6, 8], 60, 12, 3)
    assert st.shape == (60, 2, 3) and len(rows) == 6
    p = {(r.eta, r.n): r.empirical_probability for r in rows}
    assert p[(0.2, 8)] >= p[(0.2, 4)]
    assert p[(0.6, 8)] <= p[(0.6, 4)]
    assert all(r.n_trees == 60 and r.seed == 3 for r in rows)
    with pytest.raises(DomainError):
        doubling_trend(1.0, [0.2], [4, 8], 5, 8, 0)
