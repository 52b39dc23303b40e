"""Mellin-Barnes transform of the Liouville heat kernel.

M(x, y) = int_0^inf t^-s e^-alpha t p^gamma_t(x, y) dt is estimated through
the Brownian-bridge decomposition

    M = int_0^inf E_bridge[exp(-alpha F(t)) F(t)^-s] p_t(x, y) dt,

with p_t the Euclidean heat kernel and F the Liouville clock of the bridge.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import integrate, special, stats

from .errors import DomainError, InvariantViolation, OutOfDomain, TruncationError
from .field import CovarianceModel, GridSpec, sample_field
from .gmc import build_measure
from .lbm import bridge_batch, liouville_clock, lbm_path, sample_bm, sample_bridge, Path
from .rng import derive_seed, stream, parallel_map


def heat_kernel(t, d):
    """Planar heat kernel p_t at distance d."""
    return np.exp(-d * d / (2 * t)) / (2 * np.pi * t)


def _dist(x, y):
    return float(np.hypot(y[0] - x[0], y[1] - x[1]))


def _check_s(s):
    if not (0 < s < 1):
        raise DomainError(f"s must lie in (0, 1), got {s}", "s")


def mellin_gamma0(x, y, s, alpha):
    """Euclidean Mellin-Barnes kernel by quadrature (abs tol 1e-10)."""
    _check_s(s)
    if alpha < 0:
        raise DomainError("alpha must be nonnegative", "alpha")
    d = _dist(x, y)
    if d == 0:
        raise DomainError("kernel diverges at x = y", "y")
    c = alpha * d * d

    # u = e^w; integrand of int u^{-s-1} e^{-1/(2u)} e^{-c u} du
    def f(w):
        e = -s * w - 0.5 * math.exp(-w)
        if c > 0:
            e -= c * math.exp(min(w, 700.0))
        return math.exp(e)

    w_lo = -math.log(2 * 45.0)
    w_pk = -math.log(2 * s) if c == 0 else math.log((math.sqrt(s * s + 2 * c) - s) / (2 * c))
    if c > 0:
        w_hi = max(math.log(60.0 / c), w_pk + 1)
        val, _ = integrate.quad(f, w_lo, w_hi, points=[w_pk], epsabs=1e-12, epsrel=1e-12,
                                limit=400)
    else:
        a, _ = integrate.quad(f, w_lo, w_pk + 5, epsabs=1e-12, epsrel=1e-12, limit=400)
        b, _ = integrate.quad(f, w_pk + 5, np.inf, epsabs=1e-12, epsrel=1e-12, limit=400)
        val = a + b
    return d ** (-2 * s) / (2 * np.pi) * val


def mellin_gamma0_closed(d, s, alpha):
    """Closed form of ``mellin_gamma0``: (1/pi)(2a/d^2)^{s/2} K_s(d sqrt(2a))."""
    d = np.asarray(d, dtype=float)
    if alpha == 0:
        return special.gamma(s) * 2 ** s * d ** (-2 * s) / (2 * np.pi)
    return (1 / np.pi) * (2 * alpha / d ** 2) ** (s / 2) * special.kv(s, d * np.sqrt(2 * alpha))


# ---------------------------------------------------------------------------
# joint field values along paths (annealed mode)

def field_at_points(points, eps, model, rng):
    """Exact joint samples of the cutoff field at point sets.

    points: (K, n, 2); eps: (K,) cutoff per set. Returns (K, n) values.
    """
    K, n, _ = points.shape
    D = np.sqrt(((points[:, :, None, :] - points[:, None, :, :]) ** 2).sum(-1))
    C = np.empty_like(D)
    for k in range(K):
        C[k] = model.cov(D[k], float(eps[k]))
    var = np.array([model.variance(float(e)) for e in eps])
    idx = np.arange(n)
    C[:, idx, idx] += 1e-10 * np.maximum(var, 1.0)[:, None]
    z = rng.standard_normal((K, n))
    try:
        L = np.linalg.cholesky(C)
        return np.einsum("kij,kj->ki", L, z)
    except np.linalg.LinAlgError:
        lam, V = np.linalg.eigh(C)
        return np.einsum("kij,kj->ki", V * np.sqrt(np.maximum(lam, 0))[:, None, :], z)


def resolution_cutoff(t, d, n_steps, eps_floor=None):
    """Cutoff matched to the bridge step length, max(sqrt(t/n), d/n)."""
    e = np.maximum(np.sqrt(np.asarray(t, dtype=float) / n_steps), np.asarray(d) / n_steps)
    if eps_floor is not None:
        e = np.maximum(e, eps_floor)
    return np.minimum(e, 1.0)


def annealed_clock(x, y, t, gamma, n_steps, model, rng, eps=None, tilt=0.0):
    """Clock F(t) of bridges x->y with a fresh field per bridge.

    ``tilt`` > 0 shifts the field by tilt * (C(x, .) + C(y, .)) (Girsanov
    tilt by exp(tilt X(x) + tilt X(y))). Returns (F, cutoffs, min weight).
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    t = np.asarray(t, dtype=float)
    K = len(t)
    x = np.broadcast_to(x, (K, 2))
    y = np.broadcast_to(y, (K, 2))
    d = np.hypot(*(y - x).T)
    pos = bridge_batch(x, y, t, n_steps, rng)[:, :-1, :]
    e = resolution_cutoff(t, d, n_steps) if eps is None else np.full(K, float(eps))
    X = field_at_points(pos, e, model, rng)
    if tilt:
        for p in (x, y):
            r = np.sqrt(((pos - p[:, None, :]) ** 2).sum(-1))
            X = X + tilt * np.stack([model.cov(r[k], float(e[k])) for k in range(K)])
    var = np.array([model.variance(float(v)) for v in e])
    w = np.exp(gamma * X - 0.5 * gamma * gamma * var[:, None])
    return w.sum(1) * t / n_steps, e, float(w.min())


# ---------------------------------------------------------------------------
# bridge-decomposition estimator

@dataclass(frozen=True)
class FieldParams:
    model: CovarianceModel = CovarianceModel("white_noise", 1.0)
    eps: float | None = None      # None: resolution-matched cutoff (annealed)
    grid: GridSpec | None = None  # quenched mode grid
    clip: bool = False


@dataclass(frozen=True)
class MCParams:
    n_bridges: int = 200
    n_nodes: int = 40
    n_steps: int = 64
    t_min: float | None = None
    t_max: float | None = None
    check_truncation: bool = True
    threads: int = 1


@dataclass
class MellinEstimate:
    value: float
    stderr: float
    n_bridges_per_node: int
    t_nodes: np.ndarray
    truncation_bounds: tuple
    params: dict
    node_means: np.ndarray = None
    node_stderrs: np.ndarray = None
    truncation: dict = dc_field(default_factory=dict)
    mc_stderr: float = 0.0
    quad_error: float = 0.0
    samples: np.ndarray = None

    def to_dict(self):
        return {
            "value": self.value,
            "stderr": self.stderr,
            "nodes": [{"t": float(t), "inner_mean": float(m), "inner_stderr": float(e)}
                      for t, m, e in zip(self.t_nodes, self.node_means, self.node_stderrs)],
            "truncation": dict(self.truncation),
            "mc_stderr": self.mc_stderr,
            "quadrature_error": self.quad_error,
            "params": self.params,
        }


def _trap_weights(n, dlog):
    w = np.full(n, dlog)
    w[0] = w[-1] = 0.5 * dlog
    return w


def default_quenched_grid(x, y, t_max, n=1024):
    mid = 0.5 * (np.asarray(x, float) + np.asarray(y, float))
    half = 0.5 * _dist(x, y) + 6.0 * math.sqrt(t_max)
    return GridSpec(n, n, 2 * half / n, (mid[0] - half, mid[1] - half))


def mellin_mc(x, y, s, alpha, gamma, field_params=None, mc_params=None, seed=0,
              mode="annealed", field=None):
    """Monte Carlo Mellin-Barnes transform via the bridge decomposition.

    Log-spaced t-nodes on [t_min, t_max] (defaults |x-y|^2/100 and 50/alpha),
    trapezoid rule in log t. ``mode="annealed"`` draws a fresh field for
    every bridge (sampled jointly at the bridge points); ``"quenched"``
    shares one grid field (``field`` or a sample on ``field_params.grid``).
    The reported stderr combines the Monte Carlo error with the change of
    the quadrature under halving the node set.
    """
    _check_s(s)
    if not alpha > 0:
        raise DomainError("alpha must be positive", "alpha")
    if not (0 <= gamma < 2):
        raise DomainError("gamma must lie in [0, 2)", "gamma")
    if mode not in ("annealed", "quenched"):
        raise DomainError(f"unknown mode {mode!r}", "mode")
    fp = field_params or FieldParams()
    mp = mc_params or MCParams()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = _dist(x, y)
    if d == 0:
        raise DomainError("x and y must differ", "y")
    t_min = d * d / 100 if mp.t_min is None else mp.t_min
    t_max = 50.0 / alpha if mp.t_max is None else mp.t_max
    if not (t_min < d * d / 8 and t_max > 8 * d * d):
        raise DomainError("t-grid must bracket the diffusive scale |x-y|^2", "mc.t_min")
    n = int(mp.n_nodes)
    tn = np.geomspace(t_min, t_max, n)
    dlog = math.log(t_max / t_min) / (n - 1)

    if gamma > 0 and mode == "quenched" and field is None:
        grid = fp.grid or default_quenched_grid(x, y, t_max)
        field = sample_field(grid, fp.model, fp.eps or grid.h, derive_seed(seed, 0),
                             clip=fp.clip)

    def node(k):
        t = tn[k]
        if gamma == 0:
            F = np.full(mp.n_bridges, t)
            wmin = 1.0
        else:
            rng = stream(seed, 1, k)
            if mode == "annealed":
                F, _, wmin = annealed_clock(x, y, np.full(mp.n_bridges, t), gamma, mp.n_steps,
                                            fp.model, rng, fp.eps)
            else:
                F = np.empty(mp.n_bridges)
                wmin = np.inf
                for b in range(mp.n_bridges):
                    p = sample_bridge(x, y, t, mp.n_steps, rng)
                    c = liouville_clock(p, field, gamma)
                    F[b] = c.total
                    wmin = min(wmin, float(np.min(np.diff(c.F_values) / np.diff(p.times))))
        if np.any(F <= 0):
            raise InvariantViolation("F(t) = 0 for a sampled bridge", "mellin")
        g = np.exp(-alpha * F) * F ** (-s)
        return g, wmin

    res = parallel_map(node, range(n), mp.threads)
    G = np.array([r[0] for r in res])           # (n_nodes, n_bridges)
    wmin = min(r[1] for r in res)
    means = G.mean(axis=1)
    nb = G.shape[1]
    sems = G.std(axis=1, ddof=1) / math.sqrt(nb) if nb > 1 else np.zeros(n)
    jac = heat_kernel(tn, d) * tn
    w = _trap_weights(n, dlog)
    value = float(np.sum(w * means * jac))
    mc_var = float(np.sum((w * jac * sems) ** 2))
    # halved node set over [t_0, t_{n-2}] plus the last full-grid panel
    m = n - 1 if (n - 1) % 2 == 0 else n - 2
    even = np.arange(0, m + 1, 2)
    half = float(np.sum(_trap_weights(len(even), 2 * dlog) * (means * jac)[even]))
    half += float(np.sum(_trap_weights(n - m, dlog) * (means * jac)[m:]))
    quad_err = max(abs(value - half), 64 * np.finfo(float).eps * abs(value))
    stderr = math.sqrt(mc_var + quad_err ** 2)

    head, tail = _truncation(d, s, alpha, gamma, t_min, t_max, wmin, means * jac, dlog)
    trunc = {"head": head, "tail": tail}
    if mp.check_truncation and (tail > 0.1 * value or head > 0.1 * value):
        raise TruncationError(
            f"truncated t-integral too large (head {head:.3g}, tail {tail:.3g}, value {value:.3g})",
            suggested=(t_min / 10, t_max * 4), param="mc.t_max" if tail > head else "mc.t_min")
    if value <= 0:
        raise InvariantViolation("non-positive Mellin estimate", "mellin")
    # the halved sum carries its own Monte Carlo noise, hence the 3*sqrt(2) slack
    if quad_err > max(3 * math.sqrt(2 * mc_var), 1e-6 * value):
        warnings.warn(f"node halving changed the estimate by {quad_err:.3g}", RuntimeWarning,
                      stacklevel=2)
    params = dict(x=list(map(float, x)), y=list(map(float, y)), s=s, alpha=alpha,
                  gamma=gamma, eps=fp.eps, seed=seed, mode=mode, n_steps=mp.n_steps)
    return MellinEstimate(value, stderr, nb, tn, (t_min, t_max), params, means, sems, trunc,
                          math.sqrt(mc_var), quad_err, G)


def _truncation(d, s, alpha, gamma, t_min, t_max, wmin, h, dlog):
    """Head bound (F >= t * wmin) and tail estimate of the truncated t-integral."""
    wmin = max(wmin, 1e-300)
    head_int, _ = integrate.quad(lambda t: t ** (-s) * heat_kernel(t, d), 0, t_min,
                                 epsabs=1e-300, epsrel=1e-8, limit=200)
    head = wmin ** (-s) * head_int
    if gamma == 0:
        tail, _ = integrate.quad(lambda t: t ** (-s) * math.exp(-alpha * t) * heat_kernel(t, d),
                                 t_max, np.inf, epsabs=1e-300, epsrel=1e-8, limit=200)
    else:
        # geometric extrapolation of the log-t integrand beyond the last node
        rho = h[-1] / h[-2] if h[-2] > 0 else 0.0
        tail = float(h[-1] * dlog * rho / (1 - rho)) if rho < 1 else float("inf")
    return float(head), float(tail)


# ---------------------------------------------------------------------------
# single-sample kernel estimator for energy integrals

def mellin_kernel_samples(x, y, s, alpha, gamma, rng, n_steps=32, tilt=True,
                          model=CovarianceModel("white_noise", 1.0), eps=None, beta=None):
    """One unbiased sample of the Mellin-Barnes kernel per pair (x_i, y_i).

    t is drawn from q(t) ~ t^-s e^{-beta t} p_t(x, y) (generalized inverse
    Gaussian) and the bridge clock is weighted by e^{-alpha F + beta t}(t/F)^s.
    With ``tilt`` (gamma > 0) the field is tilted by e^{s gamma (X(x) + X(y))},
    the Girsanov form of the capacity kernel, and the factor
    e^{s^2 gamma^2 C(x, y)} is included. ``beta`` (default alpha/2 for
    gamma > 0) fixes the proposal rate; sharing it couples runs at different
    alpha sample by sample.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = np.hypot(*(y - x).T)
    if np.any(d == 0):
        raise DomainError("coincident pair", "pairs")
    if gamma == 0:
        return np.asarray(mellin_gamma0_closed(d, s, alpha), dtype=float).copy()
    beta = 0.5 * alpha if beta is None else float(beta)
    if not 0 < beta <= alpha:
        raise DomainError("proposal rate beta must lie in (0, alpha]", "beta")
    Z = mellin_gamma0_closed(d, s, beta)
    K = len(d)
    c = d * math.sqrt(2 * beta)
    t = stats.geninvgauss.rvs(-s, c, scale=d / math.sqrt(2 * beta), size=K, random_state=rng)
    F, e, _ = annealed_clock(x, y, t, gamma, n_steps, model, rng, eps,
                             tilt=s * gamma if tilt else 0.0)
    out = Z * np.exp(-alpha * F + beta * t) * (t / F) ** s
    if tilt:
        out *= np.exp((s * gamma) ** 2 * np.array([model.cov(d[k], float(e[k]))
                                                    for k in range(K)]))
    return out


# ---------------------------------------------------------------------------
# resolvent two-way check

@dataclass(frozen=True)
class ResolventParams:
    n_paths: int = 10_000
    n_bridges: int = 10_000
    h: float = 1.0 / 64
    half_width: float = 4.0
    dt: float | None = None       # default h^2
    t_max: float = 2.0            # kill time, shared by both estimators
    eps: float | None = None      # default h
    model: CovarianceModel = CovarianceModel("white_noise", 1.0)
    clip: bool = False
    threads: int = 1


def resolvent_two_way(x, target, alpha, gamma, params=None, seed=0, field=None):
    """Two estimators of E[int_0^T* alpha e^{-alpha t} 1{LBM_t in ball} dt].

    A simulates LBM directly; B integrates the bridge decomposition over y
    against the chaos measure of the same field. Both are killed at T* =
    min(t_max, exit time of the field domain). ``target`` is a Ball.
    Returns (A, B) as MellinEstimate objects.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive", "alpha")
    if not (0 <= gamma < 2):
        raise DomainError("gamma must lie in [0, 2)", "gamma")
    p = params or ResolventParams()
    x = np.asarray(x, dtype=float)
    center = np.asarray(target.center, dtype=float)
    radius = float(target.radius)
    if field is None:
        grid = GridSpec.covering(-p.half_width, p.half_width, p.h)
        field = sample_field(grid, p.model, p.eps or grid.h, derive_seed(seed, 0), clip=p.clip)
    grid = field.grid
    h = grid.h
    x0, x1, y0, y1 = grid.extent
    lo = np.array([x0 + h, y0 + h])
    hi = np.array([x1 - h, y1 - h])
    if np.any(center - radius < lo - h) or np.any(center + radius > hi + h):
        raise DomainError("target ball must lie inside the field domain", "target")
    if np.any(x < lo) or np.any(x > hi):
        raise DomainError("start point outside field domain", "x")
    dt = p.dt or h * h
    mu = build_measure(field, gamma)

    def inside(pos):
        return np.all((pos >= lo) & (pos <= hi), axis=-1)

    n_steps_A = int(math.ceil(p.t_max / dt))
    X, Y = np.meshgrid(grid.xs, grid.ys)
    in_ball = np.hypot(X - center[0], Y - center[1]) <= radius * (1 + 1e-12)

    def path_A(i):
        # integrate alpha e^{-alpha F} dF over BM time, ball membership by cell centre
        path = sample_bm(x, p.t_max, n_steps_A, derive_seed(seed, 1, i))
        ok = inside(path.positions)
        k = len(ok) if ok.all() else int(np.argmin(ok))
        if k < 2:
            return 0.0
        path = Path(path.times[:k], path.positions[:k], "bm")
        F = liouville_clock(path, field, gamma).F_values
        ij = np.floor((path.positions[:-1] - grid.origin) / h).astype(int)
        hit = in_ball[ij[:, 1], ij[:, 0]]
        e = np.exp(-alpha * F)
        return float(np.sum((e[:-1] - e[1:])[hit]))

    A = np.array(parallel_map(path_A, range(p.n_paths), p.threads))

    # bridge side: y ~ M restricted to the ball, t ~ e^{-beta t} p_t(x, y)
    cells = np.flatnonzero(in_ball.ravel())
    cm = mu.cell_mass.ravel()[cells]
    M_ball = float(cm.sum())
    cdf = np.cumsum(cm) / M_ball
    beta = alpha if gamma == 0 else 0.5 * alpha

    def bridge_B(i):
        rng = stream(seed, 2, i)
        c = cells[min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cells) - 1)]
        yy = np.array([X.ravel()[c], Y.ravel()[c]])
        d = _dist(x, yy)
        cd = d * math.sqrt(2 * beta)
        t = float(stats.geninvgauss.rvs(0.0, cd, scale=d / math.sqrt(2 * beta),
                                        random_state=rng))
        Zb = special.k0(cd) / np.pi
        if t > p.t_max:
            return 0.0
        n = max(int(math.ceil(t / dt)), 8)
        b = sample_bridge(x, yy, t, n, rng)
        if not inside(b.positions).all():
            return 0.0
        F = liouville_clock(b, field, gamma).total
        return float(M_ball * Zb * alpha * math.exp(-alpha * F + beta * t))

    B = np.array(parallel_map(bridge_B, range(p.n_bridges), p.threads))
    params = dict(x=list(map(float, x)), center=list(map(float, center)), radius=radius,
                  alpha=alpha, gamma=gamma, h=h, dt=dt, t_max=p.t_max, seed=seed)

    def est(v, label):
        return MellinEstimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))),
                              len(v), np.array([]), (0.0, p.t_max), dict(params, estimator=label),
                              np.array([]), np.array([]), {}, float(v.std(ddof=1) / math.sqrt(len(v))),
                              0.0, v)
    return est(A, "lbm"), est(B, "bridge")


def resolvent_gamma0(center, radius, alpha, x=(0.0, 0.0)):
    """Euclidean value int_ball int alpha e^{-alpha t} p_t(x, y) dt dy by quadrature."""
    x = np.asarray(x, float)
    c = np.asarray(center, float)
    k = math.sqrt(2 * alpha)

    def inner(phi):
        # radial integral in polar coordinates around x, clipped to the ball
        u = np.array([math.cos(phi), math.sin(phi)])
        w = x - c
        b = 2 * (w @ u)
        cc = w @ w - radius * radius
        disc = b * b - 4 * cc
        if disc <= 0:
            return 0.0
        r0 = max((-b - math.sqrt(disc)) / 2, 0.0)
        r1 = (-b + math.sqrt(disc)) / 2
        if r1 <= 0:
            return 0.0
        val, _ = integrate.quad(lambda r: alpha * special.k0(k * r) / np.pi * r, r0, r1,
                                epsabs=1e-12, limit=200)
        return val

    val, _ = integrate.quad(inner, 0, 2 * np.pi, epsabs=1e-10, limit=200)
    return val
