import math

import numpy as np
import pytest

from lqgkpz.errors import DomainError, InvariantViolation, OutOfDomain
from lqgkpz.field import CovarianceModel, FieldSample, GridSpec, sample_field, sample_replica
from lqgkpz.lbm import (Path, TimeChange, bridge_batch, exit_time, lbm_path, liouville_clock,
                        sample_bm, sample_bridge, write_path_csv)

from conftest import mean_se, within

WN = CovarianceModel("white_noise", 1.0)
GRID = GridSpec.covering(-2.0, 2.0, 1 / 32)


def const_field(c, eps=0.1, grid=GRID):
    return FieldSample(grid, eps, np.full((grid.ny, grid.nx), c), 0, WN)


# --- Brownian motion --------------------------------------------------------

def test_bm_start_and_determinism():
    p = sample_bm((0.3, -0.2), 1.0, 50, 5)
    assert np.all(p.positions[0] == (0.3, -0.2))
    q = sample_bm((0.3, -0.2), 1.0, 50, 5)
    assert p.positions.tobytes() == q.positions.tobytes()
    assert len(p) == 51 and p.times[-1] == 1.0


def test_bm_one_step_variance():
    T = 0.7
    inc = np.array([sample_bm((0, 0), T, 1, i).positions[1] for i in range(100_000)])
    for c in range(2):
        m, se = mean_se(inc[:, c] ** 2)
        assert within(m, T, se)


def test_bm_quadratic_variation():
    T = 2.0
    p = sample_bm((0, 0), T, 10_000, 1)
    qv = np.sum(np.diff(p.positions, axis=0) ** 2)
    assert abs(qv / (2 * T) - 1) < 0.05


def test_bm_validation():
    with pytest.raises(DomainError):
        sample_bm((0, 0), 1.0, 0, 1)
    with pytest.raises(DomainError):
        sample_bm((0, 0), 0.0, 5, 1)


# --- bridges ----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(20))
def test_bridge_endpoints_exact(seed):
    x, y = (0.1, -0.3), (1.7, 0.25)
    b = sample_bridge(x, y, 0.9, 37, seed)
    assert np.all(b.positions[0] == x) and np.all(b.positions[-1] == y)
    assert b.kind == "bridge"


def test_bridge_batch_endpoints():
    rng = np.random.default_rng(0)
    x = rng.random((10, 2))
    y = rng.random((10, 2))
    pos = bridge_batch(x, y, rng.random(10) + 0.1, 16, rng)
    assert np.array_equal(pos[:, 0], x) and np.array_equal(pos[:, -1], y)


def test_bridge_midpoint_variance():
    t = 0.8
    mid = np.array([sample_bridge((0, 0), (0, 0), t, 2, i).positions[1] for i in range(100_000)])
    for c in range(2):
        m, se = mean_se(mid[:, c] ** 2)
        assert within(m, t / 4, se)


def test_bridge_marginal_mean_variance():
    rng = np.random.default_rng(2)
    x, y, t = np.array([0.0, 0.0]), np.array([1.0, -0.5]), 2.0
    pos = bridge_batch(np.tile(x, (50_000, 1)), np.tile(y, (50_000, 1)), np.full(50_000, t), 4, rng)
    for k, s in enumerate([0.5, 1.0, 1.5], start=1):
        v = pos[:, k, 0]
        m, se = mean_se(v)
        assert within(m, x[0] + s / t * (y[0] - x[0]), se)
        m, se = mean_se((v - v.mean()) ** 2)
        assert within(m, s * (t - s) / t, se)


def test_bridge_scaling_law():
    # lambda^-1 b_{lambda^2 s} of an (x, y, t) bridge ~ (x/lambda, y/lambda, t/lambda^2) bridge
    lam, n, K = 2.0, 8, 40_000
    x, y, t = np.array([0.4, 0.2]), np.array([-0.6, 1.0]), 1.2
    r1 = np.random.default_rng(10)
    r2 = np.random.default_rng(20)
    a = bridge_batch(np.tile(x, (K, 1)), np.tile(y, (K, 1)), np.full(K, t), n, r1) / lam
    b = bridge_batch(np.tile(x / lam, (K, 1)), np.tile(y / lam, (K, 1)), np.full(K, t / lam ** 2),
                     n, r2)
    for k in (2, 4, 6):
        for c in range(2):
            for f in (lambda v: v, lambda v: v * v):
                ma, sa = mean_se(f(a[:, k, c]))
                mb, sb = mean_se(f(b[:, k, c]))
                assert abs(ma - mb) <= 4 * math.hypot(sa, sb)


def test_bridge_validation():
    with pytest.raises(DomainError):
        sample_bridge((0, 0), (1, 1), 0.0, 4, 1)
    with pytest.raises(DomainError):
        sample_bridge((0, 0), (1, 1), 1.0, 0, 1)


def test_path_times_strict():
    with pytest.raises(InvariantViolation):
        Path(np.array([0.0, 1.0, 1.0]), np.zeros((3, 2)))


# --- clock ------------------------------------------------------------------

def test_clock_gamma0_identity():
    p = sample_bm((0, 0), 0.5, 100, 3)
    f = sample_field(GRID, WN, GRID.h, 1, clip=True)
    c = liouville_clock(p, f, 0.0)
    assert np.array_equal(c.F_values, p.times)


def test_clock_constant_field():
    p = sample_bm((0, 0), 0.5, 100, 3)
    gamma, c0 = 0.9, 0.4
    f = const_field(c0)
    for norm in ("node", "pointwise"):
        c = liouville_clock(p, f, gamma, normalization=norm)
        if norm == "node":
            assert np.allclose(c.F_values, p.times * math.exp(gamma * c0 - 0.5 * gamma ** 2 *
                                                              math.log(10)), rtol=1e-12)
        assert c.F_values[0] == 0 and np.all(np.diff(c.F_values) > 0)


def test_clock_monotone_random_field():
    f = sample_field(GRID, WN, GRID.h, 4, clip=True)
    for seed in range(5):
        p = sample_bm((0, 0), 0.3, 200, seed)
        c = liouville_clock(p, f, 1.5)
        assert c.F_values[0] == 0 and np.all(np.diff(c.F_values) > 0)


def test_clock_refinement_smooth_field():
    X, Y = np.meshgrid(GRID.xs, GRID.ys)
    f = FieldSample(GRID, 0.1, np.sin(3 * X) * np.cos(2 * Y), 0, WN)
    fine = sample_bm((0, 0), 0.2, 2000, 7)
    coarse = Path(fine.times[::2], fine.positions[::2])
    F1 = liouville_clock(fine, f, 1.0, "node").total
    F2 = liouville_clock(coarse, f, 1.0, "node").total
    assert abs(F1 / F2 - 1) < 0.02


def test_clock_annealed_mean():
    # E[F(t)] = t with pointwise normalization, over fresh fields
    g = GridSpec(64, 64, 4 / 64, (-2.0, -2.0))
    p = sample_bm((0.01, 0.02), 0.25, 50, 1)
    F = np.array([liouville_clock(p, sample_replica(g, WN, g.h, 3, k), 1.0).total
                  for k in range(2000)])
    m, se = mean_se(F)
    assert within(m, 0.25, se)


def test_clock_out_of_domain():
    f = const_field(0.0)
    p = Path(np.array([0.0, 1.0, 2.0]), np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]]))
    with pytest.raises(OutOfDomain) as e:
        liouville_clock(p, f, 1.0)
    assert e.value.index == 2


# --- LBM paths and exit times -----------------------------------------------

def test_lbm_gamma0_identity():
    p = sample_bm((0, 0), 1.0, 64, 2)
    c = liouville_clock(p, const_field(0.0), 0.0)
    q = lbm_path(p, c)
    assert np.allclose(q.times, p.times) and np.allclose(q.positions, p.positions, atol=1e-12)


def test_lbm_constant_field_rescale():
    p = sample_bm((0, 0), 1.0, 64, 2)
    f = const_field(0.5)
    c = liouville_clock(p, f, 1.0, "node")
    k = math.exp(0.5 - 0.5 * math.log(10))
    q = lbm_path(p, c)
    assert np.allclose(q.times, p.times * k, rtol=1e-12)
    assert np.allclose(q.positions, p.positions, atol=1e-9)
    assert np.array_equal(q.positions[-1], p.positions[-1])


def test_lbm_endpoint_random_field():
    f = sample_field(GRID, WN, GRID.h, 1, clip=True)
    p = sample_bm((0, 0), 0.5, 300, 9)
    q = lbm_path(p, liouville_clock(p, f, 1.0), n_out=77)
    assert np.array_equal(q.positions[-1], p.positions[-1]) and len(q) == 77


def test_lbm_rejects_bad_clock():
    p = sample_bm((0, 0), 1.0, 4, 2)
    bad = TimeChange(p.times, np.array([0.0, 0.1, 0.1, 0.2, 0.3]), 1.0, 0.1)
    with pytest.raises(InvariantViolation):
        lbm_path(p, bad)


def test_exit_time_fixtures():
    t = np.linspace(0, 2, 201)
    line = Path(t, np.column_stack([t, np.zeros_like(t)]))
    assert abs(exit_time(line, (0, 0), 1.0) - 1.0) <= 0.01
    assert exit_time(line, (5, 5), 0.5) == 0.0
    assert exit_time(line, (0, 0), 10.0) is None


def test_exit_time_mean():
    T = []
    for i in range(10_000):
        p = sample_bm((0, 0), 3.0, 3000, i)
        e = exit_time(p, (0, 0), 1.0)
        T.append(3.0 if e is None else e)
    m = np.mean(T)
    assert abs(m / 0.5 - 1) < 0.05


def test_path_csv(tmp_path):
    p = sample_bm((0, 0), 1.0, 4, 2)
    c = liouville_clock(p, const_field(0.0), 0.0)
    fn = tmp_path / "p.csv"
    write_path_csv(fn, p, c)
    lines = fn.read_text().splitlines()
    assert lines[0] == "t,x,y,F" and len(lines) == 6
