"""Liouville (Gaussian multiplicative chaos) measures on grids.

A ``ChaosMeasure`` holds the cell masses exp(gamma X - gamma^2 Var/2) h^2 of
one field realization. Balls use cell-center inclusion: a cell belongs to
the closed ball B(x, r) iff its center does.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError
from .field import CovarianceModel, GridSpec, sample_field
from .rng import derive_seed, parallel_map

_TOL = 1e-9  # inclusion slack in cell units (closed balls)


@dataclass(frozen=True, eq=False)
class ChaosMeasure:
    grid: GridSpec
    gamma: float
    eps: float
    cell_mass: np.ndarray
    model: CovarianceModel = CovarianceModel()
    seed: int = 0

    def __post_init__(self):
        cm = np.asarray(self.cell_mass, dtype=float)
        if cm.shape != (self.grid.ny, self.grid.nx):
            raise DomainError("cell_mass shape must be (ny, nx)", "measure.cell_mass")
        if not (np.all(np.isfinite(cm)) and np.all(cm >= 0)):
            raise DomainError("cell masses must be finite and nonnegative",
                              "measure.cell_mass")
        cm = cm.copy() if cm is self.cell_mass else cm
        cm.flags.writeable = False
        object.__setattr__(self, "cell_mass", cm)

    @functools.cached_property
    def _row_prefix(self):
        P = np.zeros((self.grid.ny, self.grid.nx + 1))
        np.cumsum(self.cell_mass, axis=1, out=P[:, 1:])
        return P

    @property
    def total(self):
        return float(self.cell_mass.sum())


def _check_gamma(gamma):
    if not (0 <= gamma < 2):
        raise DomainError(f"gamma must lie in [0, 2), got {gamma}", "gamma")


def build_measure(field, gamma):
    """Cell masses exp(gamma X - gamma^2/2 Var) h^2 of a field sample."""
    _check_gamma(gamma)
    h2 = field.grid.h ** 2
    if gamma == 0:
        mass = np.full(field.values.shape, h2)
    else:
        var = field.model.variance(field.eps)
        mass = np.exp(gamma * field.values - 0.5 * gamma * gamma * var) * h2
    return ChaosMeasure(field.grid, float(gamma), field.eps, mass, field.model, field.seed)


def lebesgue_measure(grid):
    return ChaosMeasure(grid, 0.0, 1.0, np.full((grid.ny, grid.nx), grid.h ** 2))


def ball_masses(measure, centers, radius):
    """M(B(c, radius)) for each row of ``centers`` (cell-center inclusion).

    ``radius`` may be a scalar or one radius per center.
    """
    if not np.all(np.asarray(radius) > 0):
        raise DomainError("radius must be positive", "radius")
    g = measure.grid
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    ox, oy = g.origin
    h = g.h
    P = measure._row_prefix
    rc = np.broadcast_to(np.asarray(radius, dtype=float) / h, (len(c),))
    ux = (c[:, 0] - ox) / h - 0.5   # center in node-index units
    uy = (c[:, 1] - oy) / h - 0.5
    j_lo = np.ceil(uy - rc - _TOL).astype(np.int64)
    j_hi = np.floor(uy + rc + _TOL).astype(np.int64)
    out = np.zeros(len(c))
    for o in range(int(np.max(j_hi - j_lo)) + 1):
        j = j_lo + o
        dy = j - uy
        w2 = rc * rc - dy * dy
        ok = (j <= j_hi) & (j >= 0) & (j < g.ny) & (w2 >= -2 * _TOL * rc)
        if not np.any(ok):
            continue
        w = np.sqrt(np.maximum(w2, 0.0))
        i0 = np.maximum(np.ceil(ux - w - _TOL).astype(np.int64), 0)
        i1 = np.minimum(np.floor(ux + w + _TOL).astype(np.int64), g.nx - 1)
        ok &= i1 >= i0
        jj = np.where(ok, j, 0)
        out += np.where(ok, P[jj, np.clip(i1 + 1, 0, g.nx)] - P[jj, np.clip(i0, 0, g.nx)], 0.0)
    return out


def _ball_meets_grid(grid, center, radius):
    x0, x1, y0, y1 = grid.extent
    dx = max(x0 - center[0], 0.0, center[0] - x1)
    dy = max(y0 - center[1], 0.0, center[1] - y1)
    return math.hypot(dx, dy) <= radius


def ball_mass(measure, center, radius):
    """Mass of the closed ball B(center, radius)."""
    if not radius > 0:
        raise DomainError("radius must be positive", "radius")
    if not _ball_meets_grid(measure.grid, center, radius):
        raise DomainError("ball lies entirely outside the grid", "center")
    return float(ball_masses(measure, [center], radius)[0])


def disk_offsets(radius, h):
    """Boolean stencil of cell offsets whose centers lie in B(0, radius)."""
    R = int(math.floor(radius / h + _TOL))
    a = np.arange(-R, R + 1)
    return (a[:, None] ** 2 + a[None, :] ** 2) <= (radius / h) ** 2 + _TOL


def ball_mass_map(measure, radius):
    """M(B(z, radius)) for every node z whose ball stays inside the grid.

    FFT convolution with the disk stencil; output shape
    (ny - 2R, nx - 2R) with R = floor(radius / h).
    """
    from scipy.signal import fftconvolve
    K = disk_offsets(radius, measure.grid.h).astype(float)
    out = fftconvolve(measure.cell_mass, K, mode="valid")
    return np.maximum(out, 0.0)


def log_weighted_mass(measure, x, r):
    """mu(x, r) = sum over B(x, 2r) of (1 + ln_+(1/|x - z|)) cell_mass(z).

    The cell containing ``x`` is weighted by 1 + ln(2/h).
    """
    if not r > 0:
        raise DomainError("radius must be positive", "r")
    g = measure.grid
    x = np.asarray(x, dtype=float)
    if not _ball_meets_grid(g, x, 2 * r):
        raise DomainError("ball lies entirely outside the grid", "x")
    h = g.h
    ux = (x[0] - g.origin[0]) / h - 0.5
    uy = (x[1] - g.origin[1]) / h - 0.5
    R = 2 * r / h
    i0, i1 = max(int(math.ceil(ux - R - _TOL)), 0), min(int(math.floor(ux + R + _TOL)), g.nx - 1)
    j0, j1 = max(int(math.ceil(uy - R - _TOL)), 0), min(int(math.floor(uy + R + _TOL)), g.ny - 1)
    if i1 < i0 or j1 < j0:
        return 0.0
    I = np.arange(i0, i1 + 1)
    J = np.arange(j0, j1 + 1)
    dist = np.hypot((I[None, :] - ux), (J[:, None] - uy)) * h
    inside = dist <= 2 * r * (1 + _TOL)
    with np.errstate(divide="ignore"):
        wt = 1.0 + np.maximum(np.log(1.0 / dist), 0.0)
    # self-cell regularization
    si, sj = int(math.floor(ux + 0.5)), int(math.floor(uy + 0.5))
    if i0 <= si <= i1 and j0 <= sj <= j1:
        wt[sj - j0, si - i0] = 1.0 + math.log(2.0 / h)
        inside[sj - j0, si - i0] = True
    block = measure.cell_mass[j0:j1 + 1, i0:i1 + 1]
    return float(np.sum(np.where(inside, wt * block, 0.0)))


def xi(q, gamma):
    """Multifractal spectrum (2 + gamma^2/2) q - (gamma^2/2) q^2."""
    g2 = 0.5 * gamma * gamma
    return (2.0 + g2) * q - g2 * q * q


# ---------------------------------------------------------------------------
# spectrum

@dataclass(frozen=True)
class SpectrumRow:
    q: float
    slope: float
    stderr: float
    xi_theoretical: float
    log_moments: tuple = ()


def default_spectrum_grid(n=1024):
    return GridSpec(n, n, 1.0 / n, (0.0, 0.0))


def moment_spectrum(gamma, qs, radii, replicas, seed, grid=None, model=None, eps=None,
                    centers="lattice", clip=True, threads=1):
    """Fit log E[M(B(x, r))^q] against log r for each q.

    ``centers="lattice"`` (default) averages over every node whose ball lies
    inside the grid and over replicas; ``centers="origin"`` uses only the
    ball centered at the grid midpoint of each replica. Returns one
    ``SpectrumRow`` per q with the least-squares slope and its regression
    standard error.
    """
    _check_gamma(gamma)
    qs = [float(q) for q in qs]
    radii = sorted(float(r) for r in radii)
    if len(radii) < 3:
        raise DomainError("need at least 3 radii", "radii")
    if radii[-1] / radii[0] < 4 * (1 - 1e-12):
        raise DomainError("radii must span at least 3 dyadic scales", "radii")
    for q in qs:
        if gamma > 0 and q >= 4.0 / gamma ** 2:
            raise DomainError(f"moment q={q} does not exist for gamma={gamma}", "qs")
    if replicas < 1:
        raise DomainError("need at least one replica", "replicas")
    grid = grid or default_spectrum_grid()
    model = model or CovarianceModel("white_noise", 1.0)
    eps = grid.h if eps is None else eps
    if centers not in ("lattice", "origin"):
        raise DomainError(f"unknown centers mode {centers!r}", "centers")
    mid = np.array([grid.origin[0] + grid.nx * grid.h / 2, grid.origin[1] + grid.ny * grid.h / 2])

    def one(k):
        f = sample_field(grid, model, eps, derive_seed(seed, k), clip=clip)
        mu = build_measure(f, gamma)
        out = np.empty((len(radii), len(qs)))
        for a, r in enumerate(radii):
            if centers == "lattice":
                M = ball_mass_map(mu, r).ravel()
            else:
                M = ball_masses(mu, [mid], r)
            for b, q in enumerate(qs):
                out[a, b] = np.mean(M ** q)
        return out

    per = np.array(parallel_map(one, range(replicas), threads))  # (rep, radii, q)
    mom = per.mean(axis=0)
    lr = np.log(radii)
    rows = []
    for b, q in enumerate(qs):
        ly = np.log(mom[:, b])
        fit = stats.linregress(lr, ly)
        rows.append(SpectrumRow(q, float(fit.slope), float(fit.stderr), float(xi(q, gamma)),
                                tuple(float(v) for v in ly)))
    return rows


# ---------------------------------------------------------------------------
# doubling and regularity statistics

def dyadic_centers(level):
    k = np.arange(2 ** level + 1) / 2 ** level
    X, Y = np.meshgrid(k, k)
    return np.column_stack([X.ravel(), Y.ravel()])


def _check_unit_cover(grid):
    if not grid.covers(0.0, 1.0):
        raise DomainError("grid must cover [0,1]^2", "grid")


def doubling_statistic(measure, eta, level):
    """max over dyadic x in [0,1]^2 of M(B(x, 2r)) / M(B(x, r))^(1 - eta), r = 2^-level."""
    if not (0 < eta <= 1):
        raise DomainError("eta must lie in (0, 1]", "eta")
    r = 2.0 ** -level
    if r < 2 * measure.grid.h * (1 - 1e-12):
        raise DomainError(f"level {level} too deep for grid spacing {measure.grid.h}", "level")
    _check_unit_cover(measure.grid)
    c = dyadic_centers(level)
    small = ball_masses(measure, c, r)
    big = ball_masses(measure, c, 2 * r)
    with np.errstate(divide="ignore"):
        ratio = big / small ** (1.0 - eta)
    return float(np.max(ratio))


def holder_profile(measure, alpha, levels):
    """Per level n: max over dyadic x of M(B(x, 2^-n)) / 2^(-n alpha)."""
    _check_unit_cover(measure.grid)
    out = []
    for n in levels:
        r = 2.0 ** -n
        out.append(float(np.max(ball_masses(measure, dyadic_centers(n), r)) / r ** alpha))
    return np.array(out)


def mu_ratio_profile(measure, eps, levels):
    """Per level n: max over dyadic x of mu(x, r) / M(B(x, 2r))^(1 - eps)."""
    _check_unit_cover(measure.grid)
    out = []
    for n in levels:
        r = 2.0 ** -n
        c = dyadic_centers(n)
        big = ball_masses(measure, c, 2 * r)
        mu = np.array([log_weighted_mass(measure, x, r) for x in c])
        out.append(float(np.max(mu / big ** (1.0 - eps))))
    return np.array(out)


def trend_statistic(levels, values):
    """Spearman rank correlation of a statistic against level."""
    return float(stats.spearmanr(levels, values).statistic)
