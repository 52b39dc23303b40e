"""Test sets, energies, capacity and covering dimensions, and the KPZ map.

Dimensions are normalized to [0, 1] (half the Hausdorff dimension in the
Euclidean case).

Capacity dimension
------------------
Pairs (x, y) ~ nu x nu are stratified by the level j of the smallest cell of
the set's self-similar tree containing both points ("shell" j). For the
uniform measures used here the shell probabilities P_j are known exactly,
so the energy splits as sum_j c_j with c_j = P_j E[K(x, y) | shell j]. The
energy is finite iff c_j decays geometrically, so the statistic is the
fitted growth rate g(s) of log c_j over the deep shells; the capacity
dimension is the root of g.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import integrate, stats

from .errors import BracketNotFound, BracketNotFoundWarning, DomainError
from .field import CovarianceModel
from .gmc import ChaosMeasure, ball_masses
from .mellin import mellin_kernel_samples
from .rng import stream, parallel_map


# ---------------------------------------------------------------------------
# sets

@dataclass(frozen=True)
class Segment:
    p0: tuple
    p1: tuple

    @property
    def diameter(self):
        return math.dist(self.p0, self.p1)


@dataclass(frozen=True)
class Square:
    corner: tuple = (0.0, 0.0)
    side: float = 1.0

    @property
    def diameter(self):
        return self.side * math.sqrt(2)


@dataclass(frozen=True)
class CantorDust:
    ratio: float = 1.0 / 3
    level: int = 8
    corner: tuple = (0.0, 0.0)
    side: float = 1.0

    def __post_init__(self):
        if not (0 < self.ratio < 0.5):
            raise DomainError("Cantor ratio must lie in (0, 1/2)", "set.ratio")
        if self.level < 0:
            raise DomainError("Cantor level must be >= 0", "set.level")

    @property
    def diameter(self):
        return self.side * math.sqrt(2)

    def squares(self):
        """Lower-left corners of the 4^N level-N squares and their side."""
        r, N = self.ratio, self.level
        left = np.zeros(1)
        for k in range(N):
            left = np.concatenate([left, left + (1 - r) * r ** k])
        X, Y = np.meshgrid(left, left)
        c = np.column_stack([X.ravel(), Y.ravel()]) * self.side + np.asarray(self.corner)
        return c, self.side * r ** N


@dataclass(frozen=True)
class PointCloud:
    points: tuple

    @property
    def diameter(self):
        p = np.asarray(self.points, float)
        return float(np.max(np.linalg.norm(p[:, None] - p[None], axis=-1))) if len(p) > 1 else 0.0


@dataclass(frozen=True)
class Ball:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    @property
    def diameter(self):
        return 2 * self.radius


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else stream(seed)


def _cantor_coords(r, digits, start):
    """sum_k digits[..., k] (1 - r) r^(start + k)."""
    k = np.arange(digits.shape[-1]) + start
    return (digits * ((1 - r) * r ** k)).sum(-1)


def set_sampler(set_, n, seed):
    """n i.i.d. points from the natural probability measure of the set."""
    if n < 1:
        raise DomainError("n must be >= 1", "n")
    rng = _rng(seed)
    if isinstance(set_, Segment):
        u = rng.random(n)
        p0, p1 = np.asarray(set_.p0, float), np.asarray(set_.p1, float)
        return p0 + u[:, None] * (p1 - p0)
    if isinstance(set_, Square):
        return np.asarray(set_.corner, float) + set_.side * rng.random((n, 2))
    if isinstance(set_, CantorDust):
        r, N = set_.ratio, set_.level
        dig = rng.integers(0, 2, (n, 2, N))
        loc = _cantor_coords(r, dig, 0) + r ** N * rng.random((n, 2))
        return np.asarray(set_.corner, float) + set_.side * loc
    if isinstance(set_, PointCloud):
        pts = np.asarray(set_.points, float)
        return pts[rng.integers(0, len(pts), n)]
    if isinstance(set_, Ball):
        rad = set_.radius * np.sqrt(rng.random(n))
        th = 2 * np.pi * rng.random(n)
        return np.asarray(set_.center, float) + rad[:, None] * np.column_stack([np.cos(th), np.sin(th)])
    raise DomainError(f"unsupported set {set_!r}", "set")


def euclid_capacity_dim(set_):
    """Half the Hausdorff dimension of the set."""
    if isinstance(set_, Segment):
        return 0.5
    if isinstance(set_, (Square, Ball)):
        return 1.0
    if isinstance(set_, CantorDust):
        return math.log(4) / math.log(1 / set_.ratio) / 2
    if isinstance(set_, PointCloud):
        return 0.0
    raise DomainError(f"unsupported set {set_!r}", "set")


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class EuclidKernel:
    s: float

    def __post_init__(self):
        if not (0 < self.s < 1):
            raise DomainError("euclid kernel needs s in (0, 1)", "kernel.s")

    def __call__(self, x, y, rng):
        return np.linalg.norm(y - x, axis=1) ** (-2 * self.s)


@dataclass(frozen=True)
class MellinKernel:
    """Mellin-Barnes kernel; gamma > 0 draws one annealed sample per pair."""
    s: float
    alpha: float = 1.0
    gamma: float = 0.0
    tilt: bool = True
    n_steps: int = 32
    model: CovarianceModel = CovarianceModel("white_noise", 1.0)
    beta: float | None = None    # proposal rate; None -> alpha/2

    def __post_init__(self):
        if not (0 < self.s < 1):
            raise DomainError("mellin kernel needs s in (0, 1)", "kernel.s")
        if not self.alpha > 0:
            raise DomainError("mellin kernel needs alpha > 0", "kernel.alpha")
        if not (0 <= self.gamma < 2):
            raise DomainError("gamma must lie in [0, 2)", "kernel.gamma")

    def __call__(self, x, y, rng):
        return mellin_kernel_samples(x, y, self.s, self.alpha, self.gamma, rng,
                                     n_steps=self.n_steps, tilt=self.tilt, model=self.model,
                                     beta=self.beta)


@dataclass(frozen=True, eq=False)
class FrostmanKernel:
    """1 / mu(B((x+y)/2, (a-1)|x-y|/2))^q; ``mu`` is a ChaosMeasure or "lebesgue"."""
    q: float
    a: float
    mu: object = "lebesgue"

    def __post_init__(self):
        if not self.a > 1:
            raise DomainError("frostman kernel needs a > 1", "kernel.a")
        if not (0 <= self.q <= 1):
            raise DomainError("frostman kernel needs q in [0, 1]", "kernel.q")

    def __call__(self, x, y, rng):
        d = np.linalg.norm(y - x, axis=1)
        rad = 0.5 * (self.a - 1) * d
        if isinstance(self.mu, ChaosMeasure):
            m = ball_masses(self.mu, 0.5 * (x + y), rad)
        else:
            m = np.pi * rad ** 2
        with np.errstate(divide="ignore"):
            return m ** (-self.q)


def euclid_family():
    return lambda s: EuclidKernel(s)


def mellin_family(alpha=1.0, gamma=0.0, tilt=True, n_steps=32):
    return lambda s: MellinKernel(s, alpha, gamma, tilt, n_steps)


# ---------------------------------------------------------------------------
# energies

@dataclass
class EnergyEstimate:
    value: float
    stderr: float
    n: int
    params: dict = dc_field(default_factory=dict)


def _pairs(set_, n, rng):
    x = set_sampler(set_, n, rng)
    y = set_sampler(set_, n, rng)
    same = np.all(x == y, axis=1)
    if np.any(same):
        if isinstance(set_, PointCloud):
            raise DomainError("atomic measure: coincident pairs have infinite kernel", "set")
        for _ in range(100):
            if not np.any(same):
                break
            y[same] = set_sampler(set_, int(same.sum()), rng)
            same = np.all(x == y, axis=1)
    return x, y


def energy(set_, kernel, n_pairs, seed, batch=4096):
    """Monte Carlo energy: mean of the kernel over i.i.d. pairs from nu x nu."""
    rng = _rng(seed)
    vals = []
    left = int(n_pairs)
    while left > 0:
        k = min(batch, left)
        x, y = _pairs(set_, k, rng)
        vals.append(kernel(x, y, rng))
        left -= k
    v = np.concatenate(vals)
    return EnergyEstimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))), len(v))


def shell_pairs(set_, j, n, rng):
    """n pairs from shell j and its probability P_j (see module docstring)."""
    if isinstance(set_, Segment):
        k = rng.integers(0, 2 ** j, n)
        u1 = (k + 0.5 * rng.random(n)) / 2 ** j
        u2 = (k + 0.5 + 0.5 * rng.random(n)) / 2 ** j
        sw = rng.random(n) < 0.5
        a, b = np.where(sw, u1, u2), np.where(sw, u2, u1)
        p0, p1 = np.asarray(set_.p0, float), np.asarray(set_.p1, float)
        return p0 + a[:, None] * (p1 - p0), p0 + b[:, None] * (p1 - p0), 0.5 * 0.5 ** j
    if isinstance(set_, Square):
        cell = rng.integers(0, 2 ** j, (n, 2)).astype(float)
        x, y = _distinct_quadrant_points(cell, 2.0 ** -j, rng)
        c = np.asarray(set_.corner, float)
        return c + set_.side * x, c + set_.side * y, 0.75 * 0.25 ** j
    if isinstance(set_, CantorDust):
        r, N = set_.ratio, set_.level
        c = np.asarray(set_.corner, float)
        if j < N:
            dig = rng.integers(0, 2, (n, 2, j))
            o = _cantor_coords(r, dig, 0) if j else np.zeros((n, 2))
            q1, q2 = _distinct_quadrants(n, rng)
            pts = []
            for q in (q1, q2):
                rest = rng.integers(0, 2, (n, 2, N - j - 1))
                loc = o + q * (1 - r) * r ** j + (_cantor_coords(r, rest, j + 1) if N - j - 1 else 0)
                pts.append(loc + r ** N * rng.random((n, 2)))
            return c + set_.side * pts[0], c + set_.side * pts[1], 0.75 * 0.25 ** j
        dig = rng.integers(0, 2, (n, 2, N))
        o = _cantor_coords(r, dig, 0) if N else np.zeros((n, 2))
        sub = j - N
        cell = rng.integers(0, 2 ** sub, (n, 2)).astype(float)
        x, y = _distinct_quadrant_points(cell, 2.0 ** -sub, rng)
        return (c + set_.side * (o + r ** N * x), c + set_.side * (o + r ** N * y),
                0.75 * 0.25 ** j)
    raise DomainError(f"shell sampling needs a self-similar set, got {type(set_).__name__}", "set")


def _distinct_quadrants(n, rng):
    a = rng.integers(0, 4, n)
    b = (a + rng.integers(1, 4, n)) % 4
    q = lambda v: np.column_stack([v % 2, v // 2]).astype(float)
    return q(a), q(b)


def _distinct_quadrant_points(cell, size, rng):
    q1, q2 = _distinct_quadrants(len(cell), rng)
    x = (cell + 0.5 * (q1 + rng.random(q1.shape))) * size
    y = (cell + 0.5 * (q2 + rng.random(q2.shape))) * size
    return x, y


def _shell_scale(set_):
    """Linear scale factor per tree level."""
    if isinstance(set_, CantorDust):
        return set_.ratio
    return 0.5


def default_shell_window(set_):
    """(j_lo, j_hi) of the shells used for the growth-rate fit."""
    if isinstance(set_, CantorDust):
        return min(3, max(set_.level - 3, 0)), set_.level
    return 4, 16


@dataclass
class ShellProfile:
    levels: np.ndarray
    probs: np.ndarray
    means: np.ndarray
    sems: np.ndarray

    @property
    def contributions(self):
        return self.probs * self.means

    def truncated_energy(self, J):
        return float(np.sum(self.contributions[: J + 1]))


def shell_profile(set_, kernel, levels, n_per_shell, seed, threads=1):
    """Conditional kernel means per shell, each shell on its own stream."""
    def one(j):
        rng = stream(seed, j)
        x, y, P = shell_pairs(set_, j, n_per_shell, rng)
        k = kernel(x, y, rng)
        return P, k.mean(), (k.std(ddof=1) / math.sqrt(len(k)) if len(k) > 1 else 0.0)
    res = parallel_map(one, list(levels), threads)
    P, m, e = (np.array(v, dtype=float) for v in zip(*res))
    return ShellProfile(np.asarray(levels), P, m, e)


def growth_rate(profile, j_lo=None):
    """Weighted least-squares slope of log c_j against j, with its stderr."""
    j = profile.levels.astype(float)
    c = profile.contributions
    sel = (j >= (j_lo if j_lo is not None else j[0])) & np.isfinite(c) & (c > 0)
    if np.any(~np.isfinite(c[j >= (j_lo or j[0])])):
        return float("inf"), 0.0
    rel = np.where(profile.means > 0, profile.sems / np.maximum(profile.means, 1e-300), 1.0)
    w = 1.0 / np.sqrt(rel[sel] ** 2 + 1e-4)
    X = j[sel]
    Y = np.log(c[sel])
    W = w ** 2
    xb = np.sum(W * X) / W.sum()
    yb = np.sum(W * Y) / W.sum()
    sxx = np.sum(W * (X - xb) ** 2)
    slope = np.sum(W * (X - xb) * (Y - yb)) / sxx
    resid = Y - yb - slope * (X - xb)
    dof = max(len(X) - 2, 1)
    se = math.sqrt(max(np.sum(W * resid ** 2) / dof, 0.0) / sxx)
    return float(slope), float(se)


def _branching(set_):
    return 2 if isinstance(set_, Segment) else 4


def divergence_ratio(set_, kernel, n, seed, tau=1.5, n_per_shell=None):
    """Truncated-energy ratio E_J(4n) / E_J(n), J(n) = floor(log_b n).

    The shell profile is computed once up to J(4n); ratios above ``tau`` flag
    divergence. Returns (ratio, divergent).
    """
    b = _branching(set_)
    J1 = int(math.floor(math.log(n) / math.log(b) + 1e-12))
    J4 = int(math.floor(math.log(4 * n) / math.log(b) + 1e-12))
    prof = shell_profile(set_, kernel, range(J4 + 1), n_per_shell or max(n // (J4 + 1), 64), seed)
    ratio = prof.truncated_energy(J4) / prof.truncated_energy(J1)
    return float(ratio), bool(ratio > tau)


# ---------------------------------------------------------------------------
# dimension estimates

@dataclass
class DimensionEstimate:
    value: float
    method: str
    diagnostics: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {"estimate": self.value, "bracket": self.diagnostics.get("bracket"),
                "method": self.method, "params": self.diagnostics.get("params", {})}


def _root_of_increasing(sv, g, what):
    """Root of an increasing statistic g(s) by linear interpolation.

    Returns (root, bracket, found). Without a sign change the root is
    extrapolated from the two nearest grid values and clipped to [0, 1].
    """
    sv = np.asarray(sv, float)
    g = np.asarray(g, float)
    neg = g < 0
    for i in range(len(sv) - 1):
        if neg[i] and not neg[i + 1]:
            if not np.isfinite(g[i + 1]):
                return float(sv[i + 1]), (float(sv[i]), float(sv[i + 1])), True
            root = sv[i] + (sv[i + 1] - sv[i]) * (-g[i]) / (g[i + 1] - g[i])
            return float(root), (float(sv[i]), float(sv[i + 1])), True
    warnings.warn(f"{what}: no sign change over the s-grid", BracketNotFoundWarning,
                  stacklevel=3)
    if np.all(~neg):
        if not np.all(np.isfinite(g[:2])):
            return 0.0, (0.0, float(sv[0])), False
        i = 0
    else:
        i = len(sv) - 2
    if not np.all(np.isfinite(g[i:i + 2])) or g[i + 1] == g[i]:
        return (0.0 if i == 0 else 1.0), None, False
    root = sv[i] + (sv[i + 1] - sv[i]) * (-g[i]) / (g[i + 1] - g[i])
    return float(min(max(root, 0.0), 1.0)), None, False


def capacity_dimension_estimate(set_, kernel_family, s_grid, params=None):
    """Capacity dimension from shell growth rates g(s) (divergent iff g >= 0).

    params: n_per_shell (default 400), window (j_lo, j_hi), seed (0),
    threads (1), ratio_check (False: also report the n-vs-4n ratio with
    n = params["ratio_n"]).
    """
    p = dict(n_per_shell=400, window=None, seed=0, threads=1, ratio_check=False,
             ratio_n=10_000, tau=1.5)
    p.update(params or {})
    sv = [float(s) for s in s_grid]
    if len(sv) < 5 or any(not (0 < s < 1) for s in sv):
        raise DomainError("s_grid needs >= 5 points inside (0, 1)", "s_grid")
    sv = sorted(sv)
    if isinstance(set_, PointCloud):
        # atomic measure: the diagonal carries positive mass, every energy diverges
        g = np.full(len(sv), np.inf)
        rows = [dict(s=s, statistic=float("inf"), stderr=0.0, verdict="divergent") for s in sv]
        warnings.warn("atomic measure: all energies diverge", BracketNotFoundWarning,
                      stacklevel=2)
        return DimensionEstimate(0.0, "capacity-energy",
                                 dict(rows=rows, bracket=None, params=_jsonable(p)))
    j_lo, j_hi = p["window"] or default_shell_window(set_)
    levels = range(0, j_hi + 1)
    rows = []
    g = []
    for s in sv:
        kern = kernel_family(s)
        prof = shell_profile(set_, kern, levels, p["n_per_shell"], p["seed"], p["threads"])
        rate, se = growth_rate(prof, j_lo)
        row = dict(s=s, statistic=rate, stderr=se, verdict="divergent" if rate >= 0 else "convergent")
        if p["ratio_check"]:
            ratio, _ = divergence_ratio(set_, kern, p["ratio_n"], p["seed"], p["tau"])
            row["ratio"] = ratio
        rows.append(row)
        g.append(rate)
    root, bracket, found = _root_of_increasing(sv, g, "capacity")
    return DimensionEstimate(min(max(root, 0.0), 1.0), "capacity-energy",
                             dict(rows=rows, bracket=bracket, found=found,
                                  window=(j_lo, j_hi), params=_jsonable(p)))


def _jsonable(p):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in p.items()}


# ---------------------------------------------------------------------------
# coverings

def covering_cells(set_, delta):
    """Integer indices (i, j) of the dyadic squares [i d, (i+1) d) x [j d, (j+1) d)
    meeting the set."""
    if isinstance(set_, Segment):
        p0, p1 = np.asarray(set_.p0, float), np.asarray(set_.p1, float)
        lo = np.floor(np.minimum(p0, p1) / delta).astype(int)
        hi = np.floor(np.maximum(p0, p1) / delta).astype(int)
        I, J = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
        I, J = I.ravel(), J.ravel()
        keep = _segment_meets_boxes(p0, p1, I * delta, (I + 1) * delta, J * delta, (J + 1) * delta)
        return np.column_stack([I[keep], J[keep]])
    if isinstance(set_, Square):
        c = np.asarray(set_.corner, float)
        i0 = np.floor(c / delta + 1e-12).astype(int)
        i1 = np.ceil((c + set_.side) / delta - 1e-12).astype(int) - 1
        I, J = np.meshgrid(np.arange(i0[0], i1[0] + 1), np.arange(i0[1], i1[1] + 1))
        return np.column_stack([I.ravel(), J.ravel()])
    if isinstance(set_, CantorDust):
        corners, side = set_.squares()
        i0 = np.floor(corners / delta + 1e-12).astype(int)
        i1 = np.ceil((corners + side) / delta - 1e-12).astype(int) - 1
        span = int(np.max(i1 - i0)) + 1
        cells = []
        for a in range(span):
            for b in range(span):
                c = i0 + np.array([a, b])
                ok = np.all(c <= i1, axis=1)
                cells.append(c[ok])
        return np.unique(np.concatenate(cells), axis=0)
    if isinstance(set_, Ball):
        c = np.asarray(set_.center, float)
        lo = np.floor((c - set_.radius) / delta).astype(int)
        hi = np.floor((c + set_.radius) / delta).astype(int)
        I, J = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
        I, J = I.ravel(), J.ravel()
        dx = np.maximum(np.maximum(I * delta - c[0], c[0] - (I + 1) * delta), 0)
        dy = np.maximum(np.maximum(J * delta - c[1], c[1] - (J + 1) * delta), 0)
        keep = np.hypot(dx, dy) < set_.radius
        return np.column_stack([I[keep], J[keep]])
    if isinstance(set_, PointCloud):
        return np.unique(np.floor(np.asarray(set_.points, float) / delta).astype(int), axis=0)
    raise DomainError(f"unsupported set {set_!r}", "set")


def _segment_meets_boxes(p0, p1, x0, x1, y0, y1):
    """Liang-Barsky clipping of one segment against many closed boxes."""
    d = p1 - p0
    t0 = np.zeros(len(x0))
    t1 = np.ones(len(x0))
    ok = np.ones(len(x0), bool)
    for dp, lo, hi, p in ((d[0], x0, x1, p0[0]), (d[1], y0, y1, p0[1])):
        if dp == 0:
            ok &= (p >= lo) & (p <= hi)
            continue
        ta = (lo - p) / dp
        tb = (hi - p) / dp
        t0 = np.maximum(t0, np.minimum(ta, tb))
        t1 = np.minimum(t1, np.maximum(ta, tb))
    return ok & (t0 <= t1)


def covering_masses(set_, mu, delta, a=1.0):
    """Masses mu(B(x_k, a delta/sqrt 2)) of the canonical dyadic covering."""
    if a < 1:
        raise DomainError("a must be >= 1", "a")
    cells = covering_cells(set_, delta)
    rad = a * delta / math.sqrt(2)
    if isinstance(mu, ChaosMeasure):
        if delta < 4 * mu.grid.h * (1 - 1e-12):
            raise DomainError(f"delta={delta} below 4h resolution guard", "delta")
        return ball_masses(mu, (cells + 0.5) * delta, rad)
    if mu not in (None, "lebesgue"):
        raise DomainError(f"unsupported measure {mu!r}", "mu")
    return np.full(len(cells), np.pi * rad * rad)


def covering_sum(set_, mu, s, delta, a=1.0):
    """sum_k mu(B(x_k, a r_k))^s over the canonical dyadic covering."""
    m = covering_masses(set_, mu, delta, a)
    return float(np.sum(m ** s))


def default_scales(set_):
    """Dyadic covering scales; Cantor dusts need deep scales because dyadic
    boxes overcount a triadic set at coarse resolution."""
    if isinstance(set_, CantorDust):
        return [2.0 ** -k for k in range(6, 15)]
    return [2.0 ** -k for k in range(4, 11)]


def measure_dimension(set_, mu, a, scales=None, s_grid=None):
    """s at which the slope of log covering_sum against log delta crosses 0."""
    scales = sorted(float(d) for d in (default_scales(set_) if scales is None else scales))
    if len(scales) < 4:
        raise DomainError("need at least 4 scales", "scales")
    sv = np.linspace(0.0, 1.0, 41) if s_grid is None else np.asarray(sorted(s_grid), float)
    masses = [covering_masses(set_, mu, d, a) for d in scales]
    ld = np.log(scales)
    slopes = []
    rows = []
    for s in sv:
        with np.errstate(divide="ignore"):
            ls = np.log([np.sum(m ** s) for m in masses])
        if not np.all(np.isfinite(ls)):
            slopes.append(-np.inf)
            rows.append(dict(s=float(s), statistic=float("-inf"), verdict="infinite"))
            continue
        sl = float(stats.linregress(ld, ls).slope)
        slopes.append(sl)
        rows.append(dict(s=float(s), statistic=sl, verdict="divergent" if sl < 0 else "vanishing"))
    slopes = np.array(slopes)
    neg = slopes < 0
    idx = [i for i in range(len(sv) - 1) if neg[i] and not neg[i + 1]]
    if not idx:
        if len(sv) and slopes[-1] == 0:
            root, bracket = float(sv[-1]), (float(sv[-1]), float(sv[-1]))
        elif abs(slopes[-1]) < 1e-9:
            root, bracket = float(sv[-1]), (float(sv[-1]), float(sv[-1]))
        else:
            raise BracketNotFound("covering-sum slope has no sign change over the s-grid",
                                  "s_grid")
    else:
        i = idx[0]
        root = sv[i] + (sv[i + 1] - sv[i]) * (-slopes[i]) / (slopes[i + 1] - slopes[i])
        bracket = (float(sv[i]), float(sv[i + 1]))
    return DimensionEstimate(float(min(max(root, 0.0), 1.0)), "covering-sum",
                             dict(rows=rows, bracket=bracket,
                                  params=dict(a=a, scales=scales)))


# ---------------------------------------------------------------------------
# KPZ and Euclidean heat scaling

def kpz_map(d, gamma, direction="forward"):
    """d0 = (1 + g^2/4) d - (g^2/4) d^2 (forward) or its root in [0, 1] (inverse)."""
    if not (0 <= d <= 1):
        raise DomainError(f"dimension must lie in [0, 1], got {d}", "d")
    c = gamma * gamma / 4
    if direction == "forward":
        return (1 + c) * d - c * d * d
    if direction == "inverse":
        if c == 0:
            return float(d)
        disc = (1 + c) ** 2 - 4 * c * d
        # smaller root, written without cancellation
        return 2 * d / ((1 + c) + math.sqrt(max(disc, 0.0)))
    raise DomainError(f"direction must be forward or inverse, got {direction!r}", "direction")


def _interval_self(L, t):
    """int_0^L int_0^L exp(-(u - v)^2 / (2t)) du dv."""
    val, _ = integrate.quad(lambda w: 2 * (L - w) * math.exp(-w * w / (2 * t)), 0, L,
                            epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def heat_self_energy(set_, t):
    """int int p_t(x, y) H(dx) H(dy) for a segment (arclength) or square (area)."""
    if isinstance(set_, Segment):
        return _interval_self(set_.diameter, t) / (2 * np.pi * t)
    if isinstance(set_, Square):
        return _interval_self(set_.side, t) ** 2 / (2 * np.pi * t)
    raise DomainError("heat scaling supports Segment and Square only", "set")


def default_heat_times(set_):
    L = set_.diameter if isinstance(set_, Segment) else set_.side
    return [L * L * 2.0 ** -k for k in range(10, 17)]


def euclidean_heat_scaling(set_, t_list=None):
    """Fitted exponent of t in int int p_t(x, y) H(dx) H(dy)."""
    t_list = sorted(default_heat_times(set_) if t_list is None else t_list)
    if len(t_list) < 2 or t_list[-1] / t_list[0] < 4 * (1 - 1e-12):
        raise DomainError("t_list must span at least 3 dyadic scales", "t_list")
    if t_list[-1] > set_.diameter ** 2 / 4 * (1 + 1e-12):
        raise DomainError("all t must be <= diameter^2 / 4", "t_list")
    vals = [heat_self_energy(set_, t) for t in t_list]
    return float(stats.linregress(np.log(t_list), np.log(vals)).slope)
