"""Brownian paths, bridges, the Liouville clock and time-changed paths."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvariantViolation, OutOfDomain
from .io import write_csv


@dataclass(frozen=True, eq=False)
class Path:
    times: np.ndarray
    positions: np.ndarray
    kind: str = "bm"            # "bm", "bridge" or "lbm"
    bridge: tuple | None = None  # (x, y, t) for bridges

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.positions, dtype=float)
        if p.shape != (len(t), 2):
            raise DomainError("positions must have shape (len(times), 2)", "path.positions")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise InvariantViolation("path times must be strictly increasing", "path.times")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True, eq=False)
class TimeChange:
    times: np.ndarray
    F_values: np.ndarray
    gamma: float
    eps: float

    @property
    def total(self):
        return float(self.F_values[-1])


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def _increments(rng, dt, n_steps):
    return rng.standard_normal((n_steps, 2)) * math.sqrt(dt)


def sample_bm(x, T, n_steps, seed):
    """Planar Brownian motion from ``x`` on a uniform grid of [0, T]."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1", "n_steps")
    if not T > 0:
        raise DomainError("T must be positive", "T")
    x = np.asarray(x, dtype=float)
    pos = np.empty((n_steps + 1, 2))
    pos[0] = x
    np.cumsum(_increments(_rng(seed), T / n_steps, n_steps), axis=0, out=pos[1:])
    pos[1:] += x
    return Path(np.linspace(0.0, T, n_steps + 1), pos, "bm")


def sample_bridge(x, y, t, n_steps, seed):
    """Brownian bridge b_s = x + W_s - (s/t)(x + W_t - y) from x to y in time t."""
    if not t > 0:
        raise DomainError("bridge duration must be positive", "t")
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1", "n_steps")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.linspace(0.0, t, n_steps + 1)
    W = np.zeros((n_steps + 1, 2))
    np.cumsum(_increments(_rng(seed), t / n_steps, n_steps), axis=0, out=W[1:])
    pos = x + W - (s / t)[:, None] * (x + W[-1] - y)
    pos[0] = x
    pos[-1] = y
    return Path(s, pos, "bridge", (tuple(x), tuple(y), float(t)))


def bridge_batch(x, y, t, n_steps, rng):
    """Vectorized bridges: x, y of shape (K, 2), t of shape (K,).

    Returns positions of shape (K, n_steps + 1, 2) on the grids t*k/n_steps.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    K = len(t)
    frac = np.arange(n_steps + 1) / n_steps
    W = np.zeros((K, n_steps + 1, 2))
    np.cumsum(rng.standard_normal((K, n_steps, 2)) * np.sqrt(t / n_steps)[:, None, None],
              axis=1, out=W[:, 1:])
    pos = x[:, None, :] + W - frac[None, :, None] * (x[:, None, :] + W[:, -1:, :] - y[:, None, :])
    pos[:, 0] = x
    pos[:, -1] = y
    return pos


# ---------------------------------------------------------------------------
# clock

def _bilinear(field, pts):
    """Bilinear weights for points; raises OutOfDomain at the first bad index."""
    g = field.grid
    u = (pts[:, 0] - g.origin[0]) / g.h - 0.5
    v = (pts[:, 1] - g.origin[1]) / g.h - 0.5
    bad = ~((u >= 0) & (u <= g.nx - 1) & (v >= 0) & (v <= g.ny - 1))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise OutOfDomain(f"path leaves the field grid at index {k}", k, "path")
    i0 = np.minimum(np.floor(u).astype(np.int64), max(g.nx - 2, 0))
    j0 = np.minimum(np.floor(v).astype(np.int64), max(g.ny - 2, 0))
    fx = u - i0
    fy = v - j0
    return i0, j0, fx, fy


def interpolate_field(field, pts):
    """Bilinear interpolation of the field at points, plus the exact variance
    of the interpolated Gaussian value."""
    g = field.grid
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    i0, j0, fx, fy = _bilinear(field, pts)
    i1 = np.minimum(i0 + 1, g.nx - 1)
    j1 = np.minimum(j0 + 1, g.ny - 1)
    X = field.values
    val = ((1 - fx) * (1 - fy) * X[j0, i0] + fx * (1 - fy) * X[j0, i1]
           + (1 - fx) * fy * X[j1, i0] + fx * fy * X[j1, i1])
    c0, c1, c2 = field.model.cov(np.array([0.0, g.h, math.sqrt(2) * g.h]), field.eps)
    ax = (1 - fx) ** 2 + fx ** 2
    ay = (1 - fy) ** 2 + fy ** 2
    var = c0 * ax * ay + c1 * ((1 - ax) * ay + ax * (1 - ay)) + c2 * (1 - ax) * (1 - ay)
    return val, var


def liouville_clock(path, field, gamma, normalization="pointwise"):
    """F(t_k) = sum_{j<k} exp(gamma X(B_j) - gamma^2/2 Var_j) (t_{j+1} - t_j).

    ``normalization="pointwise"`` uses the exact variance of the bilinearly
    interpolated value so that E[F(t)] = t; ``"node"`` uses the model's
    cutoff variance at every point.
    """
    if not (0 <= gamma < 2):
        raise DomainError("gamma must lie in [0, 2)", "gamma")
    t = path.times
    F = np.zeros(len(t))
    if gamma == 0:
        _bilinear(field, path.positions)   # domain check only
        F[1:] = t[1:] - t[0]
        return TimeChange(t, F, 0.0, field.eps)
    if normalization not in ("node", "pointwise"):
        raise DomainError(f"unknown normalization {normalization!r}", "normalization")
    val, var = interpolate_field(field, path.positions)
    val, var = val[:-1], var[:-1]
    if normalization == "node":
        var = field.model.variance(field.eps)
    w = np.exp(gamma * val - 0.5 * gamma * gamma * var)
    np.cumsum(w * np.diff(t), out=F[1:])
    return TimeChange(t, F, float(gamma), field.eps)


def lbm_path(path, clock, n_out=None):
    """Liouville Brownian motion: the path re-indexed by the inverse clock,
    on a uniform grid of Liouville times in [0, F(T)]."""
    F = clock.F_values
    if F[0] != 0 or not np.all(np.diff(F) > 0):
        raise InvariantViolation("clock is not strictly increasing from 0", "clock")
    n_out = len(path) if n_out is None else int(n_out)
    tau = np.linspace(0.0, F[-1], n_out)
    s = np.interp(tau, F, path.times)
    s[-1] = path.times[-1]
    pos = np.column_stack([np.interp(s, path.times, path.positions[:, 0]),
                           np.interp(s, path.times, path.positions[:, 1])])
    pos[-1] = path.positions[-1]
    return Path(tau, pos, "lbm")


def exit_time(path, center, radius):
    """First time |B - center| > radius, interpolated linearly in space
    between the straddling grid times; None if the path never exits."""
    c = np.asarray(center, dtype=float)
    d = np.linalg.norm(path.positions - c, axis=1)
    out = np.nonzero(d > radius)[0]
    if len(out) == 0:
        return None
    k = int(out[0])
    if k == 0:
        return 0.0
    p0 = path.positions[k - 1] - c
    dp = path.positions[k] - path.positions[k - 1]
    # solve |p0 + s dp| = radius for s in [0, 1]
    a = dp @ dp
    b = 2 * p0 @ dp
    cc = p0 @ p0 - radius * radius
    disc = max(b * b - 4 * a * cc, 0.0)
    s = (-b + math.sqrt(disc)) / (2 * a)
    s = min(max(s, 0.0), 1.0)
    t0, t1 = path.times[k - 1], path.times[k]
    return float(t0 + s * (t1 - t0))


def write_path_csv(fname, path, clock=None):
    F = clock.F_values if clock is not None else np.full(len(path), np.nan)
    rows = zip(path.times, path.positions[:, 0], path.positions[:, 1], F)
    write_csv(fname, ["t", "x", "y", "F"], rows)
