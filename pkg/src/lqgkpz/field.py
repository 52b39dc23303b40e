"""Cutoff log-correlated Gaussian fields on regular 2D grids.

Covariance models
-----------------
``mff``          massive free field, G_m(r) = K_0(m r); regularized at the
                 cutoff as K_0(m sqrt(r^2 + eps^2)) (a Gaussian mixture, so
                 positive semi-definite).
``white_noise``  white-noise cutoff of the massive free field,
                 int_1^{1/eps} k(u r)/u du = K_0(m r) - K_0(m r/eps),
                 variance ln(1/eps).
``exact_scale``  ln_+(2/|x-y|) smoothed by a centred Gaussian of covariance
                 eps^2 I (positive definite since the 2D Fourier transform
                 2 pi (1 - J_0(2k)) / k^2 of ln_+(2/|x|) is nonnegative).

Grid convention: node (i, j) sits at the cell center
``origin + ((i + 0.5) h, (j + 0.5) h)``; arrays have shape ``(ny, nx)`` with
row j holding y-index j (row-major, x fastest).
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import integrate, linalg, special

from .errors import DomainError, EmbeddingError
from .rng import derive_seed

MAX_DENSE_POINTS = 4096
MAX_CIRCULANT_POINTS = 2048 * 2048
EIG_TOL = 1e-8

MODEL_KINDS = ("mff", "white_noise", "exact_scale")


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    h: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise DomainError("grid needs nx, ny >= 1", "grid.n")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise DomainError("grid spacing must be positive", "grid.h")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def covering(cls, lo, hi, h):
        """Square grid with spacing ``h`` whose cells tile ``[lo, hi]^2``."""
        n = int(round((hi - lo) / h))
        return cls(n, n, (hi - lo) / n, (lo, lo))

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def xs(self):
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    @property
    def ys(self):
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    @property
    def extent(self):
        """(xmin, xmax, ymin, ymax) of the covered rectangle."""
        x0, y0 = self.origin
        return (x0, x0 + self.nx * self.h, y0, y0 + self.ny * self.h)

    def nodes(self):
        """Node coordinates, shape (ny*nx, 2), row-major."""
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def covers(self, lo, hi):
        x0, x1, y0, y1 = self.extent
        return x0 <= lo and y0 <= lo and x1 >= hi and y1 >= hi


@dataclass(frozen=True)
class CovarianceModel:
    kind: str = "white_noise"
    m: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DomainError(f"unknown covariance model {self.kind!r}", "model.kind")
        if not (self.m > 0 and math.isfinite(self.m)):
            raise DomainError("mass must be positive", "model.m")

    def cov(self, r, eps):
        """Cutoff covariance at separation(s) ``r`` (vectorized closed form)."""
        _check_eps(eps)
        r = np.asarray(r, dtype=float)
        if self.kind == "mff":
            return special.k0(self.m * np.sqrt(r * r + eps * eps))
        if self.kind == "white_noise":
            return wn_closed(r, eps, self.m)
        return exact_scale_cov(r, eps)

    def variance(self, eps):
        _check_eps(eps)
        if self.kind == "mff":
            return float(special.k0(self.m * eps))
        if self.kind == "white_noise":
            return cutoff_variance(eps)
        return float(exact_scale_cov(0.0, eps))


def _check_eps(eps, name="eps"):
    if not (isinstance(eps, (int, float, np.floating)) and 0 < eps <= 1):
        raise DomainError(f"cutoff must lie in (0, 1], got {eps!r}", name)


def wn_closed(r, eps, m=1.0):
    """K_0(m r) - K_0(m r / eps), with the r = 0 limit ln(1/eps)."""
    r = np.asarray(r, dtype=float)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), r.shape)
    out = np.array(np.log(1.0 / eps), dtype=float)
    pos = r > 0
    if np.any(pos):
        rp = r[pos]
        out[pos] = special.k0(m * rp) - special.k0(m * rp / eps[pos])
    return out if out.ndim else float(out)


_SMOOTH_BAND = 10.0   # Gaussian smoothing is invisible beyond 10 eps (e^-50)


def _smoothed_log(r, eps):
    """E ln_+(2/|r e_1 + eps Z|), Z standard normal in the plane (radial form)."""
    e2 = eps * eps

    def f(rho):
        if rho <= 0:
            return 0.0
        return (math.log(2.0 / rho) * rho / e2 * math.exp(-(rho - r) ** 2 / (2 * e2))
                * special.i0e(rho * r / e2))
    lo = max(r - _SMOOTH_BAND * eps, 0.0)
    pts = [p for p in (r, 2.0) if lo < p < 2.0]
    val, _ = integrate.quad(f, lo, 2.0, points=pts or None, epsabs=1e-12, epsrel=1e-11,
                            limit=400)
    return val


@functools.lru_cache(maxsize=16)
def _exact_scale_tables(eps):
    """Cubic splines of the smoothed kernel near r = 0 and near the kink r = 2."""
    from scipy.interpolate import CubicSpline
    w = _SMOOTH_BAND * eps
    step = eps / 64
    if 2 - w <= w:
        spans = [(0.0, 2.0 + w)]
    else:
        spans = [(0.0, w), (2.0 - w, 2.0 + w)]
    out = []
    for a, b in spans:
        rr = np.linspace(a, b, int(math.ceil((b - a) / step)) + 1)
        out.append((a, b, CubicSpline(rr, [_smoothed_log(x, eps) for x in rr])))
    return tuple(out)


def exact_scale_cov(r, eps):
    """Gaussian-smoothed ln_+(2/r) at cutoff eps (vectorized)."""
    r = np.asarray(r, dtype=float)
    out = np.array(np.log(np.clip(2.0 / np.maximum(r, 1e-300), 1.0, None)))
    for a, b, spl in _exact_scale_tables(float(eps)):
        sel = (r >= a) & (r <= b)
        if np.any(sel):
            out[sel] = spl(r[sel])
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# quadrature oracles

_QUAD = dict(epsabs=1e-11, epsrel=1e-12, limit=200)


def cov_mff(r, m=1.0):
    """G_m(r) = int_0^inf exp(-m^2 u/2 - r^2/(2u)) du/(2u) by quadrature."""
    if not (math.isfinite(r) and math.isfinite(m)):
        raise DomainError("non-finite input", "r")
    if r < 0:
        raise DomainError("distance must be nonnegative", "r")
    if r == 0:
        raise DomainError("G_m diverges at r = 0; use a cutoff", "r")
    if m <= 0:
        raise DomainError("mass must be positive", "m")
    # log variable v = ln u; integrand peaks at e^v = r/m with value e^{-mr}/2
    lead = m * r + 38.0
    v_lo = math.log(r * r / (2 * lead))
    v_hi = math.log(2 * lead / (m * m))
    v_pk = math.log(r / m)

    def f(v):
        return 0.5 * math.exp(-0.5 * (m * m * math.exp(v) + r * r * math.exp(-v)))

    val, _ = integrate.quad(f, v_lo, v_hi, points=[v_pk], **_QUAD)
    return val


def _inner_k(z, m):
    """k(z) = 1/2 int_0^inf exp(-m^2 z^2/(2v) - v/2) dv by quadrature."""
    if z == 0:
        val, _ = integrate.quad(lambda v: 0.5 * math.exp(-0.5 * v), 0, 80.0, **_QUAD)
        return val
    a = m * z
    if a > 45.0:
        return 0.0
    lead = a + 38.0
    w_lo = math.log(a * a / (2 * lead))
    w_hi = math.log(2 * lead)

    def f(w):
        v = math.exp(w)
        return 0.5 * math.exp(-0.5 * (a * a / v + v)) * v

    val, _ = integrate.quad(f, w_lo, w_hi, points=[math.log(a)], **_QUAD)
    return val


def cov_wn(r, eps1, eps2, m=1.0):
    """White-noise cutoff covariance int_1^{1/max(eps1, eps2)} k(u r)/u du.

    The shared scales of X_eps1 and X_eps2 end at the coarser cutoff.
    """
    _check_eps(eps1, "eps1")
    _check_eps(eps2, "eps2")
    if not (math.isfinite(r) and r >= 0):
        raise DomainError("distance must be finite and nonnegative", "r")
    if m <= 0:
        raise DomainError("mass must be positive", "m")
    wmax = math.log(1.0 / max(eps1, eps2))
    if wmax == 0:
        return 0.0
    if r == 0:
        return wmax * _inner_k(0.0, m)
    # k(z) < 1e-17 once m z > 45
    wcut = min(wmax, math.log(45.0 / (m * r))) if m * r < 45 else 0.0
    if wcut <= 0:
        return 0.0
    val, _ = integrate.quad(lambda w: _inner_k(r * math.exp(w), m), 0.0, wcut,
                            epsabs=1e-10, epsrel=1e-10, limit=200)
    return val


def cutoff_variance(eps):
    """ln(1/eps): variance of the white-noise cutoff field."""
    _check_eps(eps)
    return math.log(1.0 / eps)


# ---------------------------------------------------------------------------
# sampling

@dataclass(frozen=True, eq=False)
class FieldSample:
    grid: GridSpec
    eps: float
    values: np.ndarray
    seed: int
    model: CovarianceModel
    clipped_fraction: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.ny, self.grid.nx):
            raise DomainError(f"values shape {v.shape} != (ny, nx)", "field.values")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite", "field.values")
        v = v.copy() if v is self.values else v
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def variance(self):
        return self.model.variance(self.eps)


def _check_spectrum(lam, clip, what):
    lmax = float(np.max(lam))
    lmin = float(np.min(lam))
    clipped = 0.0
    if lmax <= 0:
        return np.zeros_like(lam), 0.0
    if lmin < -EIG_TOL * lmax:
        if not clip:
            raise EmbeddingError(
                f"{what}: min eigenvalue {lmin:.3e} below -1e-8 * max ({lmax:.3e}); "
                "enlarge the domain or enable clipping", "field.clip")
    neg = lam < 0
    if np.any(neg):
        clipped = float(-lam[neg].sum() / np.abs(lam).sum())
    return np.where(neg, 0.0, lam), clipped


@functools.lru_cache(maxsize=4)
def _dense_factor(spec, model, eps, clip):
    P = spec.nodes()
    D = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1))
    C = model.cov(D, eps)
    try:
        L = linalg.cholesky(C, lower=True)
        return L, 0.0
    except linalg.LinAlgError:
        pass
    lam, V = linalg.eigh(C)
    lam, clipped = _check_spectrum(lam, clip, "dense covariance")
    return V * np.sqrt(lam), clipped


@functools.lru_cache(maxsize=2)
def _circulant_sqrt(spec, model, eps, clip):
    Nx, Ny = 2 * spec.nx, 2 * spec.ny
    ix = np.arange(Nx)
    iy = np.arange(Ny)
    dx = np.minimum(ix, Nx - ix) * spec.h
    dy = np.minimum(iy, Ny - iy) * spec.h
    R = np.sqrt(dy[:, None] ** 2 + dx[None, :] ** 2)
    lam = np.fft.fft2(model.cov(R, eps)).real
    lam, clipped = _check_spectrum(lam, clip, "circulant embedding")
    return np.sqrt(lam / (Nx * Ny)), clipped


def sample_field(spec, model, eps, seed, clip=False, method="auto"):
    """Exact centered Gaussian sample of the cutoff field on ``spec``.

    Dense Cholesky for at most ``MAX_DENSE_POINTS`` nodes, circulant
    embedding on the doubled torus otherwise. ``clip=True`` zeroes negative
    embedding eigenvalues and records the clipped spectral mass fraction
    (also emitted as a warning).
    """
    _check_eps(eps)
    if method == "auto":
        method = "dense" if spec.size <= MAX_DENSE_POINTS else "circulant"
    if method == "dense" and spec.size > MAX_DENSE_POINTS:
        raise DomainError(f"dense sampling limited to {MAX_DENSE_POINTS} points", "grid")
    if method == "circulant" and spec.size > MAX_CIRCULANT_POINTS:
        raise DomainError(f"circulant sampling limited to {MAX_CIRCULANT_POINTS} points", "grid")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    rng = np.random.default_rng(seed)
    if model.variance(eps) == 0:
        return FieldSample(spec, eps, np.zeros((spec.ny, spec.nx)), seed, model)
    if method == "dense":
        L, clipped = _dense_factor(spec, model, float(eps), bool(clip))
        z = rng.standard_normal(L.shape[1])
        vals = (L @ z).reshape(spec.ny, spec.nx)
    elif method == "circulant":
        sq, clipped = _circulant_sqrt(spec, model, float(eps), bool(clip))
        Ny, Nx = sq.shape
        z = rng.standard_normal((Ny, Nx)) + 1j * rng.standard_normal((Ny, Nx))
        vals = np.fft.fft2(sq * z).real[: spec.ny, : spec.nx]
    else:
        raise DomainError(f"unknown method {method!r}", "field.method")
    if clipped > 0:
        warnings.warn(f"clipped spectral mass fraction {clipped:.3e}", RuntimeWarning,
                      stacklevel=2)
    return FieldSample(spec, float(eps), vals, seed, model, clipped)


def sample_replica(spec, model, eps, seed, index, clip=False):
    """Field for replica ``index`` of a run seeded with ``seed``."""
    return sample_field(spec, model, eps, derive_seed(seed, index), clip=clip)


def apply_girsanov_shift(model, eval_points, tilt_points, gamma, eps):
    """Mean shift of the field under the tilt exp(gamma * sum X(t_i))."""
    tilt = np.atleast_2d(np.asarray(tilt_points, dtype=float))
    if tilt.shape[0] not in (1, 2):
        raise DomainError("one or two tilt points supported", "tilt_points")
    pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
    shift = np.zeros(len(pts))
    for t in tilt:
        shift += model.cov(np.linalg.norm(pts - t, axis=1), eps)
    return gamma * shift
