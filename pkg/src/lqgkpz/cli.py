"""Experiment runner.

Configuration is an INI file (sections ``run``, ``field`` and one section
per experiment) overridden by command-line flags. Every run writes
``summary.json`` (with the resolved configuration and package version),
CSV tables and, on request, LQG1 binary dumps to the output directory.

Exit codes: 0 success, 2 invalid configuration or input, 3 numerical guard
(truncation, embedding, bracketing, domain exit, invariant).
"""
from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .errors import (BracketNotFound, DomainError, EmbeddingError, InvariantViolation,
                     OutOfDomain, TruncationError)
from .io import write_csv, write_field, write_json, write_measure

log = logging.getLogger("lqgkpz")

SCHEMA_VERSION = 1
EXPERIMENTS = ("field", "measure", "spectrum", "mellin", "resolvent-check", "kpz", "doubling",
               "cascade", "heat-scaling")

DEFAULTS = {
    "run": {
        "experiment": "field", "gamma": "0.0", "eps": "", "grid": "256 256 0.00390625",
        "origin": "0 0", "alpha": "1.0", "s": "0.5", "set": "segment:-0.25,-0.1,0.25,0.12",
        "scales": "", "replicas": "4", "seed": "0", "threads": "1", "out": "out",
        "mode": "annealed", "dump": "no",
    },
    "field": {"model": "white_noise", "mass": "1.0", "clip": "yes"},
    "measure": {"radius": "0.25", "center": "0.5 0.5"},
    "spectrum": {"qs": "0.5,1,1.5", "radii": "0.125,0.0625,0.03125,0.015625,0.0078125",
                 "centers": "lattice"},
    "mellin": {"x": "0 0", "y": "0.25 0", "n_bridges": "200", "n_nodes": "40",
               "n_steps": "64"},
    "resolvent-check": {"x": "0 0", "center": "0 0", "radius": "0.25", "n_paths": "2000",
                        "n_bridges": "2000", "h": "0.03125", "half_width": "8",
                        "t_max": "12"},
    "kpz": {"s_grid": "0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7", "n_per_shell": "400",
            "covering": "no", "a": "1"},
    "doubling": {"eta": "0.5", "levels": "3,4,5,6,7"},
    "cascade": {"etas": "0.2,0.6", "levels": "8,11,14", "n_trees": "200", "depth": "20",
                "tail_trees": "0", "tail_depth": "18", "sibling": "no"},
    "heat-scaling": {"t_list": ""},
}


class ConfigError(DomainError):
    pass


# ---------------------------------------------------------------------------
# parsing helpers

def _floats(text, sep=","):
    text = text.strip()
    if not text:
        return []
    return [float(v) for v in text.replace(";", sep).split(sep) if v.strip()]


def _point(text):
    v = [float(t) for t in text.replace(",", " ").split()]
    if len(v) != 2:
        raise ValueError(f"expected two coordinates, got {text!r}")
    return tuple(v)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_set(text):
    """``segment:x0,y0,x1,y1`` | ``square:x,y,side`` | ``cantor:ratio,level,x,y,side``
    | ``ball:cx,cy,r`` | ``points:x,y;x,y``."""
    from .dimension import Ball, CantorDust, PointCloud, Segment, Square
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    if kind == "points":
        pts = tuple(_point(p) for p in args.split(";") if p.strip())
        return PointCloud(pts)
    v = _floats(args)
    if kind == "segment" and len(v) == 4:
        return Segment((v[0], v[1]), (v[2], v[3]))
    if kind == "square" and len(v) == 3:
        return Square((v[0], v[1]), v[2])
    if kind == "cantor" and len(v) == 5:
        return CantorDust(v[0], int(v[1]), (v[2], v[3]), v[4])
    if kind == "ball" and len(v) == 3:
        return Ball((v[0], v[1]), v[2])
    raise ValueError(f"cannot parse set spec {text!r}")


class Config:
    """Resolved configuration with typed accessors; ``raw`` holds strings."""

    def __init__(self, raw):
        self.raw = raw

    def get(self, section, key):
        return self.raw[section][key]

    def _typed(self, section, key, conv):
        try:
            return conv(self.raw[section][key])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid value {self.raw[section][key]!r}: {exc}",
                              f"{section}.{key}") from None

    def f(self, section, key):
        return self._typed(section, key, float)

    def i(self, section, key):
        return self._typed(section, key, lambda t: int(float(t)))

    def b(self, section, key):
        return self._typed(section, key, _bool)

    def floats(self, section, key):
        return self._typed(section, key, _floats)

    def point(self, section, key):
        return self._typed(section, key, _point)

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        for sec, kv in self.raw.items():
            cp[sec] = kv
        from io import StringIO
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def build_parser():
    p = argparse.ArgumentParser(prog="lqgkpz", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--grid", nargs=3, metavar=("NX", "NY", "H"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--s", help="s value or comma-separated s-grid")
    p.add_argument("--set", dest="set_spec", help="test set, e.g. segment:0,0,1,0")
    p.add_argument("--scales", help="comma-separated scales (radii or deltas)")
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("--mode", choices=("annealed", "quenched"))
    p.add_argument("--dump", action="store_true", help="write LQG1 binary dumps")
    p.add_argument("--option", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any configuration key")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args):
    raw = {sec: dict(kv) for sec, kv in DEFAULTS.items()}
    if args.config:
        cp = configparser.ConfigParser(interpolation=None)
        if not cp.read(args.config):
            raise ConfigError(f"cannot read config file {args.config!r}", "config")
        for sec in cp.sections():
            if sec not in raw:
                raise ConfigError(f"unknown section [{sec}]", sec)
            for k, v in cp[sec].items():
                if k not in raw[sec]:
                    raise ConfigError(f"unknown key {k!r}", f"{sec}.{k}")
                raw[sec][k] = v
    flags = {"experiment": args.experiment, "gamma": args.gamma, "eps": args.eps,
             "alpha": args.alpha, "s": args.s, "set": args.set_spec, "scales": args.scales,
             "replicas": args.replicas, "seed": args.seed, "threads": args.threads,
             "out": args.out, "mode": args.mode}
    for k, v in flags.items():
        if v is not None:
            raw["run"][k] = str(v)
    if args.grid:
        raw["run"]["grid"] = " ".join(args.grid)
    if args.dump:
        raw["run"]["dump"] = "yes"
    for opt in args.option:
        key, eq, val = opt.partition("=")
        sec, dot, k = key.rpartition(".")
        if not (eq and dot) or sec not in raw or k not in raw[sec]:
            raise ConfigError(f"bad override {opt!r}", "option")
        raw[sec][k] = val
    cfg = Config(raw)
    validate(cfg)
    return cfg


def validate(cfg):
    exp = cfg.get("run", "experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}", "run.experiment")
    g = cfg.f("run", "gamma")
    if not (0 <= g < 2):
        raise ConfigError("gamma must lie in [0, 2)", "run.gamma")
    if exp == "cascade" and g * g >= 2 * math.log(2):
        raise ConfigError("cascade needs gamma^2 < 2 ln 2", "run.gamma")
    if cfg.get("run", "eps").strip():
        e = cfg.f("run", "eps")
        if not (0 < e <= 1):
            raise ConfigError("eps must lie in (0, 1]", "run.eps")
    a = cfg.f("run", "alpha")
    if exp in ("mellin", "resolvent-check", "kpz") and not a > 0:
        raise ConfigError("alpha must be positive", "run.alpha")
    nx, ny, h = _grid_tuple(cfg)
    if nx < 1 or ny < 1 or not h > 0:
        raise ConfigError("grid needs NX, NY >= 1 and H > 0", "run.grid")
    for k in ("replicas", "threads"):
        if cfg.i("run", k) < 1:
            raise ConfigError(f"{k} must be >= 1", f"run.{k}")
    if cfg.get("run", "mode") not in ("annealed", "quenched"):
        raise ConfigError("mode must be annealed or quenched", "run.mode")
    svals = cfg.floats("run", "s")
    if exp in ("mellin",) and not (len(svals) == 1 and 0 < svals[0] < 1):
        raise ConfigError("mellin needs a single s in (0, 1)", "run.s")
    if exp in ("kpz", "mellin"):
        try:
            parse_set(cfg.get("run", "set"))
        except ValueError as exc:
            raise ConfigError(str(exc), "run.set") from None
    cfg.f("field", "mass")
    cfg.b("field", "clip")
    cfg.b("run", "dump")


def _grid_tuple(cfg):
    def conv(t):
        v = t.split()
        if len(v) != 3:
            raise ValueError("expected NX NY H")
        return int(v[0]), int(v[1]), float(v[2])
    return cfg._typed("run", "grid", conv)


def _grid(cfg):
    from .field import GridSpec
    nx, ny, h = _grid_tuple(cfg)
    return GridSpec(nx, ny, h, cfg.point("run", "origin"))


def _model(cfg):
    from .field import CovarianceModel
    return CovarianceModel(cfg.get("field", "model"), cfg.f("field", "mass"))


def _eps(cfg, grid):
    return cfg.f("run", "eps") if cfg.get("run", "eps").strip() else min(grid.h, 1.0)


# ---------------------------------------------------------------------------
# experiments

def exp_field(cfg, out):
    from .field import sample_replica
    grid, model = _grid(cfg), _model(cfg)
    eps = _eps(cfg, grid)
    seed, n = cfg.i("run", "seed"), cfg.i("run", "replicas")
    rows = []
    clipped = 0.0
    for k in range(n):
        f = sample_replica(grid, model, eps, seed, k, clip=cfg.b("field", "clip"))
        clipped = max(clipped, f.clipped_fraction)
        rows.append((k, f.seed, float(f.values.mean()), float(f.values.var())))
        if cfg.b("run", "dump"):
            write_field(os.path.join(out, f"field_{k:04d}.lqg1"), f)
    write_csv(os.path.join(out, "field_stats.csv"), ["replica", "seed", "mean", "variance"], rows)
    return {"target_variance": model.variance(eps),
            "mean_empirical_variance": float(np.mean([r[3] for r in rows])),
            "clipped_fraction": clipped}


def exp_measure(cfg, out):
    from .field import sample_replica
    from .gmc import ball_mass, build_measure
    grid, model = _grid(cfg), _model(cfg)
    eps = _eps(cfg, grid)
    gamma, seed, n = cfg.f("run", "gamma"), cfg.i("run", "seed"), cfg.i("run", "replicas")
    center, radius = cfg.point("measure", "center"), cfg.f("measure", "radius")
    rows = []
    for k in range(n):
        f = sample_replica(grid, model, eps, seed, k, clip=cfg.b("field", "clip"))
        mu = build_measure(f, gamma)
        rows.append((k, f.seed, mu.total, ball_mass(mu, center, radius)))
        if cfg.b("run", "dump"):
            write_measure(os.path.join(out, f"measure_{k:04d}.lqg1"), mu)
    write_csv(os.path.join(out, "measure_stats.csv"),
              ["replica", "seed", "total_mass", "ball_mass"], rows)
    bm = np.array([r[3] for r in rows])
    return {"ball_mass_mean": float(bm.mean()),
            "ball_mass_stderr": float(bm.std(ddof=1) / math.sqrt(n)) if n > 1 else None,
            "ball_lebesgue": math.pi * radius ** 2}


def exp_spectrum(cfg, out):
    from .gmc import moment_spectrum
    grid, model = _grid(cfg), _model(cfg)
    radii = cfg.floats("run", "scales") or cfg.floats("spectrum", "radii")
    rows = moment_spectrum(cfg.f("run", "gamma"), cfg.floats("spectrum", "qs"), radii,
                           cfg.i("run", "replicas"), cfg.i("run", "seed"), grid=grid,
                           model=model, eps=_eps(cfg, grid), centers=cfg.get("spectrum", "centers"),
                           clip=cfg.b("field", "clip"), threads=cfg.i("run", "threads"))
    write_csv(os.path.join(out, "spectrum.csv"), ["q", "slope", "stderr", "xi_theoretical"],
              [(r.q, r.slope, r.stderr, r.xi_theoretical) for r in rows])
    return {"spectrum": [dict(q=r.q, slope=r.slope, stderr=r.stderr, xi=r.xi_theoretical)
                         for r in rows]}


def exp_mellin(cfg, out):
    from .mellin import FieldParams, MCParams, mellin_gamma0, mellin_mc
    x, y = cfg.point("mellin", "x"), cfg.point("mellin", "y")
    s, alpha, gamma = cfg.floats("run", "s")[0], cfg.f("run", "alpha"), cfg.f("run", "gamma")
    fp = FieldParams(_model(cfg), cfg.f("run", "eps") if cfg.get("run", "eps").strip() else None,
                     _grid(cfg) if cfg.get("run", "mode") == "quenched" else None,
                     cfg.b("field", "clip"))
    mp = MCParams(cfg.i("mellin", "n_bridges"), cfg.i("mellin", "n_nodes"),
                  cfg.i("mellin", "n_steps"), threads=cfg.i("run", "threads"))
    est = mellin_mc(x, y, s, alpha, gamma, fp, mp, cfg.i("run", "seed"), cfg.get("run", "mode"))
    rep = est.to_dict()
    write_json(os.path.join(out, "mellin.json"),
               {k: rep[k] for k in ("value", "stderr", "nodes", "truncation")})
    write_csv(os.path.join(out, "mellin_nodes.csv"), ["t", "inner_mean", "inner_stderr"],
              [(n["t"], n["inner_mean"], n["inner_stderr"]) for n in rep["nodes"]])
    summary = {"value": est.value, "stderr": est.stderr, "truncation": est.truncation}
    if gamma == 0:
        summary["gamma0_closed_form"] = mellin_gamma0(x, y, s, alpha)
    return summary


def exp_resolvent(cfg, out):
    from .dimension import Ball
    from .mellin import ResolventParams, resolvent_two_way
    sec = "resolvent-check"
    p = ResolventParams(n_paths=cfg.i(sec, "n_paths"), n_bridges=cfg.i(sec, "n_bridges"),
                        h=cfg.f(sec, "h"), half_width=cfg.f(sec, "half_width"),
                        t_max=cfg.f(sec, "t_max"), model=_model(cfg),
                        eps=cfg.f("run", "eps") if cfg.get("run", "eps").strip() else None,
                        threads=cfg.i("run", "threads"))
    A, B = resolvent_two_way(cfg.point(sec, "x"), Ball(cfg.point(sec, "center"), cfg.f(sec, "radius")),
                             cfg.f("run", "alpha"), cfg.f("run", "gamma"), p, cfg.i("run", "seed"))
    comb = math.hypot(A.stderr, B.stderr)
    write_csv(os.path.join(out, "resolvent.csv"), ["estimator", "value", "stderr", "n"],
              [("lbm", A.value, A.stderr, A.n_bridges_per_node),
               ("bridge", B.value, B.stderr, B.n_bridges_per_node)])
    return {"A": A.value, "A_stderr": A.stderr, "B": B.value, "B_stderr": B.stderr,
            "difference": A.value - B.value, "combined_stderr": comb,
            "within_3_stderr": abs(A.value - B.value) <= 3 * comb}


def exp_kpz(cfg, out):
    from .dimension import (capacity_dimension_estimate, euclid_capacity_dim, kpz_map,
                            measure_dimension, mellin_family)
    from .field import sample_field
    from .gmc import build_measure
    set_ = parse_set(cfg.get("run", "set"))
    gamma, alpha = cfg.f("run", "gamma"), cfg.f("run", "alpha")
    sv = cfg.floats("run", "s")
    s_grid = sv if len(sv) >= 5 else cfg.floats("kpz", "s_grid")
    cap = capacity_dimension_estimate(set_, mellin_family(alpha, gamma), s_grid,
                                      dict(n_per_shell=cfg.i("kpz", "n_per_shell"),
                                           seed=cfg.i("run", "seed"),
                                           threads=cfg.i("run", "threads")))
    write_csv(os.path.join(out, "capacity.csv"), ["s", "statistic", "verdict"],
              [(r["s"], r["statistic"], r["verdict"]) for r in cap.diagnostics["rows"]])
    d0 = euclid_capacity_dim(set_)
    pred = kpz_map(d0, gamma, "inverse")
    summary = {"capacity_estimate": cap.value, "capacity_bracket": cap.diagnostics["bracket"],
               "euclidean_dimension": d0, "kpz_prediction": pred,
               "kpz_roundtrip_error": abs(kpz_map(pred, gamma, "forward") - d0),
               "kpz_identity_check": gamma != 0 or abs(pred - d0) < 1e-12,
               "capacity": cap.to_dict()}
    if cfg.b("kpz", "covering"):
        scales = cfg.floats("run", "scales") or None
        if gamma == 0:
            mu = "lebesgue"
        else:
            grid = _grid(cfg)
            f = sample_field(grid, _model(cfg), _eps(cfg, grid), cfg.i("run", "seed"),
                             clip=cfg.b("field", "clip"))
            mu = build_measure(f, gamma)
        md = measure_dimension(set_, mu, cfg.f("kpz", "a"), scales)
        write_csv(os.path.join(out, "covering.csv"), ["s", "statistic", "verdict"],
                  [(r["s"], r["statistic"], r["verdict"]) for r in md.diagnostics["rows"]])
        summary["measure_dimension"] = md.to_dict()
    return summary


def exp_doubling(cfg, out):
    from .cascade import eta_critical
    from .field import sample_replica
    from .gmc import build_measure, doubling_statistic, trend_statistic
    grid, model = _grid(cfg), _model(cfg)
    eps = _eps(cfg, grid)
    gamma, seed, n = cfg.f("run", "gamma"), cfg.i("run", "seed"), cfg.i("run", "replicas")
    eta = cfg.f("doubling", "eta")
    levels = [int(v) for v in cfg.floats("doubling", "levels")]
    rows, rhos = [], []
    for k in range(n):
        mu = build_measure(sample_replica(grid, model, eps, seed, k, clip=cfg.b("field", "clip")),
                           gamma)
        st = [doubling_statistic(mu, eta, lv) for lv in levels]
        rows += [(k, lv, eta, v) for lv, v in zip(levels, st)]
        rhos.append(trend_statistic(levels, st))
    write_csv(os.path.join(out, "doubling.csv"), ["replica", "level", "eta", "statistic"], rows)
    rhos = np.array(rhos, dtype=float)
    return {"eta_critical": eta_critical(gamma, "gmc"), "eta": eta,
            "spearman_mean": float(np.nanmean(rhos)),
            "spearman_stderr": float(np.nanstd(rhos, ddof=1) / math.sqrt(n)) if n > 1 else None}


def exp_cascade(cfg, out):
    from .cascade import doubling_trend, eta_critical, tail_exponent, total_masses
    gamma, seed = cfg.f("run", "gamma"), cfg.i("run", "seed")
    sec = "cascade"
    rows, _ = doubling_trend(gamma, cfg.floats(sec, "etas"),
                             [int(v) for v in cfg.floats(sec, "levels")], cfg.i(sec, "n_trees"),
                             cfg.i(sec, "depth"), seed, cfg.b(sec, "sibling"),
                             cfg.i("run", "threads"))
    write_csv(os.path.join(out, "cascade_trend.csv"),
              ["n", "eta", "R", "empirical_probability", "n_trees", "seed"],
              [(r.n, r.eta, r.R, r.empirical_probability, r.n_trees, r.seed) for r in rows])
    summary = {"eta_critical": eta_critical(gamma, "cascade"),
               "tail_exponent_theory": 2 * math.log(2) / gamma ** 2 if gamma > 0 else None,
               "trend": [r.__dict__ for r in rows],
               "note": "finite-depth trend over three levels; the limit statement is not certified"}
    nt = cfg.i(sec, "tail_trees")
    if nt > 0:
        m = total_masses(gamma, cfg.i(sec, "tail_depth"), nt, seed, cfg.i("run", "threads"))
        a, se = tail_exponent(m)
        summary.update(tail_exponent=a, tail_exponent_stderr=se)
    return summary


def exp_heat(cfg, out):
    from .dimension import Segment, Square, default_heat_times, euclidean_heat_scaling, heat_self_energy
    set_ = parse_set(cfg.get("run", "set"))
    if not isinstance(set_, (Segment, Square)):
        raise ConfigError("heat-scaling supports segment and square", "run.set")
    tl = cfg.floats("heat-scaling", "t_list") or default_heat_times(set_)
    write_csv(os.path.join(out, "heat.csv"), ["t", "value"],
              [(t, heat_self_energy(set_, t)) for t in tl])
    return {"exponent": euclidean_heat_scaling(set_, tl)}


RUNNERS = {"field": exp_field, "measure": exp_measure, "spectrum": exp_spectrum,
           "mellin": exp_mellin, "resolvent-check": exp_resolvent, "kpz": exp_kpz,
           "doubling": exp_doubling, "cascade": exp_cascade, "heat-scaling": exp_heat}


def run_experiment(cfg):
    """Run the configured experiment; returns the summary dict."""
    out = cfg.get("run", "out")
    os.makedirs(out, exist_ok=True)
    exp = cfg.get("run", "experiment")
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = RUNNERS[exp](cfg, out)
    msgs = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    for m in msgs:
        log.warning(m)
    summary = {"schema_version": SCHEMA_VERSION, "version": __version__, "experiment": exp,
               "config": cfg.raw, "result": result, "warnings": msgs}
    write_json(os.path.join(out, "summary.json"), summary)
    with open(os.path.join(out, "config.ini"), "w") as f:
        f.write(cfg.to_ini())
    log.info("%s finished in %.1f s", exp, time.perf_counter() - t0)
    return summary


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        run_experiment(cfg)
    except (TruncationError, EmbeddingError, BracketNotFound, OutOfDomain,
            InvariantViolation) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
