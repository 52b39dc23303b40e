"""Dyadic lognormal multiplicative cascades on [0, 1].

Node weights are exp(gamma X_v - gamma^2/2) with X_v i.i.d. standard normal;
the leaf mass of I_N^k is 2^-N times the product of weights on its root
path. Level masses are sums of leaf masses.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .rng import derive_seed, parallel_map

MAX_DEPTH = 24
LN2 = math.log(2.0)


def _check_gamma(gamma):
    if not (gamma >= 0 and gamma * gamma < 2 * LN2):
        raise DomainError(f"cascade needs gamma^2 < 2 ln 2, got gamma={gamma}", "gamma")


@dataclass(frozen=True, eq=False)
class CascadeTree:
    gamma: float
    depth: int
    node_weights: tuple       # level n (1..N) -> array of 2^n weights
    leaf_mass: np.ndarray
    seed: int

    @functools.cached_property
    def level_masses(self):
        """Masses of all intervals per level, index n -> array of 2^n."""
        out = [None] * (self.depth + 1)
        out[self.depth] = self.leaf_mass
        for n in range(self.depth - 1, -1, -1):
            out[n] = out[n + 1].reshape(-1, 2).sum(axis=1)
        return out

    @property
    def total(self):
        return float(self.level_masses[0][0])


def sample_cascade(gamma, depth, seed):
    """Exact depth-N cascade tree."""
    _check_gamma(gamma)
    if not (0 <= depth <= MAX_DEPTH):
        raise DomainError(f"depth must lie in [0, {MAX_DEPTH}]", "depth")
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    weights = []
    cum = np.ones(1)
    for n in range(1, depth + 1):
        if gamma == 0:
            w = np.ones(2 ** n)
        else:
            w = np.exp(gamma * rng.standard_normal(2 ** n) - 0.5 * gamma * gamma)
        weights.append(w)
        cum = np.repeat(cum, 2) * w
    leaf = cum * 2.0 ** -depth
    return CascadeTree(float(gamma), int(depth), tuple(weights), leaf, int(seed))


def interval_mass(tree, n, k):
    """Mass of I_n^k = [k 2^-n, (k+1) 2^-n)."""
    if not (0 <= n <= tree.depth):
        raise DomainError(f"level must lie in [0, {tree.depth}]", "n")
    if not (0 <= k < 2 ** n):
        raise DomainError(f"index must lie in [0, 2^{n})", "k")
    return float(tree.level_masses[n][k])


def _normals32(rng, n):
    """Box-Muller standard normals in float32 (faster than the ziggurat
    here; tails are cut at |z| ~ 5.8 by the 24-bit uniforms)."""
    m = (n + 1) // 2
    u = rng.random(m, dtype=np.float32)
    v = rng.random(m, dtype=np.float32)
    r = np.sqrt(np.float32(-2.0) * np.log1p(-u))
    th = np.float32(2 * np.pi) * v
    return np.concatenate([r * np.cos(th), r * np.sin(th)])[:n]


def total_masses(gamma, depth, n_trees, seed, threads=1):
    """Total masses of ``n_trees`` independent depth-N cascades.

    Bottom-up recursion in float32 without storing the tree; tree i uses
    stream (seed, i). The draws differ from ``sample_cascade`` (same law).
    """
    _check_gamma(gamma)
    if not (0 <= depth <= MAX_DEPTH):
        raise DomainError(f"depth must lie in [0, {MAX_DEPTH}]", "depth")
    g = np.float32(gamma)
    c = np.float32(0.5 * gamma * gamma)

    def one(i):
        rng = np.random.default_rng(derive_seed(seed, i))
        m = np.ones(2 ** depth, dtype=np.float32)
        for n in range(depth, 0, -1):
            z = _normals32(rng, 2 ** n)
            m *= np.exp(g * z - c)
            m = 0.5 * (m[0::2] + m[1::2])
        return float(m[0])

    return np.array(parallel_map(one, range(n_trees), threads))


def tail_exponent(masses, top_fraction=0.01):
    """Hill estimator over the top ``top_fraction`` order statistics.

    Returns (alpha_hat, stderr) with stderr = alpha_hat / sqrt(k).
    """
    x = np.asarray(masses, dtype=float)
    if len(x) < 100 / top_fraction:
        raise DomainError(f"need at least {int(100 / top_fraction)} samples", "masses")
    if not np.all(x > 0):
        raise DomainError("Hill estimator needs positive data", "masses")
    if np.ptp(x) == 0:
        raise DomainError("constant input", "masses")
    k = int(math.floor(top_fraction * len(x)))
    xs = np.sort(x)[::-1]
    logs = np.log(xs[: k + 1])
    h = float(np.mean(logs[:k]) - logs[k])
    if h <= 0:
        raise DomainError("degenerate upper tail", "masses")
    a = 1.0 / h
    return a, a / math.sqrt(k)


def cascade_doubling_stat(tree, eta, n, sibling=False):
    """max over level-(n+1) intervals J of mass(parent(J)) / mass(J)^(1-eta).

    ``sibling=True`` uses the sibling of J in the denominator instead.
    """
    if not (0 <= n and n + 1 <= tree.depth):
        raise DomainError("need n + 1 <= depth", "n")
    parent = np.repeat(tree.level_masses[n], 2)
    child = tree.level_masses[n + 1]
    if sibling:
        child = child.reshape(-1, 2)[:, ::-1].ravel()
    return float(np.max(parent / child ** (1.0 - eta)))


def eta_critical(gamma, model="gmc"):
    """gamma^2/(4 + gamma^2) (gmc) or gamma^2/(gamma^2 + 2 ln 2) (cascade)."""
    g2 = gamma * gamma
    if model == "gmc":
        return g2 / (4 + g2)
    if model == "cascade":
        return g2 / (g2 + 2 * LN2)
    raise DomainError(f"model must be gmc or cascade, got {model!r}", "model")


@dataclass(frozen=True)
class TrendRow:
    n: int
    eta: float
    R: float
    empirical_probability: float
    n_trees: int
    seed: int


def doubling_trend(gamma, etas, levels, n_trees, depth, seed, sibling=False, threads=1):
    """P(stat at level n >= R) per (eta, n) over ``n_trees`` trees, with R the
    median of the statistic at the first level."""
    levels = list(levels)
    if depth < max(levels) + 1:
        raise DomainError("depth must exceed the deepest level", "depth")

    def one(i):
        tree = sample_cascade(gamma, depth, derive_seed(seed, i))
        return [[cascade_doubling_stat(tree, e, n, sibling) for n in levels] for e in etas]

    st = np.array(parallel_map(one, range(n_trees), threads))   # (trees, eta, level)
    rows = []
    for a, e in enumerate(etas):
        R = float(np.median(st[:, a, 0]))
        for b, n in enumerate(levels):
            rows.append(TrendRow(n, float(e), R, float(np.mean(st[:, a, b] >= R)), n_trees, seed))
    return rows, st
