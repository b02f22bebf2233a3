"""Experiment orchestration: configuration, execution and output files.

A run is described by a JSON configuration layered over the packaged
``defaults.json``.  Every value the runner uses comes from that merged
configuration.  Outputs are CSV/JSON files whose content depends only on the
configuration (worker count and output directory excluded), so repeated runs
are byte-identical; the wall time lives in ``manifest.json`` alone.
"""
from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ParameterError
from .io import cached_green, config_hash, write_csv, write_json
from .lattice import BoxDomain, DependencyRadiusPolicy, dependency_radius
from .models import ModelSpec

EXPERIMENTS = ("covariance", "sample", "maxima", "steinchen", "pointprocess", "audit")
# keys that do not change results and are left out of the hash
_UNHASHED = ("workers", "out")


def load_defaults() -> dict:
    return json.loads(resources.files("glx").joinpath("defaults.json").read_text())


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown configuration key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k != "model":
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    """Validated run configuration (see ``defaults.json`` for every field)."""

    raw: dict
    model: ModelSpec = field(init=False)
    sizes: list = field(init=False)

    def __post_init__(self):
        self.model, self.sizes = validate(self.raw)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(_merge(load_defaults(), data))

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for k, v in overrides.items():
            if v is not None:
                data[k] = v
        return cls.from_dict(data)

    def __getattr__(self, name):
        raw = self.__dict__.get("raw", {})
        if name in raw:
            return raw[name]
        raise AttributeError(name)

    @property
    def options(self) -> dict:
        return self.raw["options"]

    @property
    def hash(self) -> str:
        return config_hash({k: v for k, v in self.raw.items() if k not in _UNHASHED})

    def domain(self, n: int) -> BoxDomain:
        return BoxDomain(self.model.d, int(n), float(self.raw["domain"]["delta"]))

    def radius(self, N: int) -> float:
        pol = self.raw["policy"]
        if pol["radius"] is not None:
            return float(pol["radius"])
        m = self.model
        return dependency_radius(DependencyRadiusPolicy(m.kind, m.d, theta=pol["theta"],
                                                        exponent=pol["exponent"], xi=pol["xi"],
                                                        s=m.s), N)


def validate(raw: dict):
    """Check a merged configuration; returns ``(ModelSpec, sizes)``."""
    if raw["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {raw['experiment']!r}")
    try:
        model = ModelSpec.from_dict(raw["model"])
    except (ParameterError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    dom = raw["domain"]
    sizes = dom["sizes"] if dom["sizes"] is not None else [dom["n"]]
    if not sizes or any(not isinstance(n, int) or n < 1 for n in sizes):
        raise ConfigError("domain sizes must be positive integers")
    if not 0.0 <= dom["delta"] < 0.5:
        raise ConfigError("delta must lie in [0, 1/2)")
    if not isinstance(raw["seed"], int) or raw["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(raw["workers"], int) or raw["workers"] < 1:
        raise ConfigError("workers must be a positive integer")
    if not isinstance(raw["replicates"], int) or raw["replicates"] < 2:
        raise ConfigError("replicates must be an integer >= 2")
    opts = raw["options"]
    if opts["mode"] not in ("full", "bulk"):
        raise ConfigError("options.mode must be 'full' or 'bulk'")
    if opts["rescale"] not in ("auto", "box", "bulk"):
        raise ConfigError("options.rescale must be 'auto', 'box' or 'bulk'")
    if opts["law"] not in ("finite", "infinite"):
        raise ConfigError("options.law must be 'finite' or 'infinite'")
    if opts["b3_method"] not in ("exact", "hermite"):
        raise ConfigError("options.b3_method must be 'exact' or 'hermite'")
    if raw["experiment"] == "pointprocess":
        from .pointprocess import CellSpec

        try:
            cells = [CellSpec.from_dict(c) for c in opts["cells"]]
        except (ParameterError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad cell specification: {exc}") from exc
        if any(c.d != model.d for c in cells):
            raise ConfigError(f"cells must be {model.d}-dimensional")
    if raw["experiment"] in ("steinchen", "pointprocess", "audit") and model.kind == "fractional" \
            and raw["policy"]["radius"] is None and not raw["policy"]["xi"] > 2:
        raise ConfigError("fractional radius policy requires xi > 2")
    return model, list(sizes)


@dataclass
class RunManifest:
    config_hash: str
    version: str
    experiment: str
    wall_time: float
    tolerances: dict
    flags: dict
    files: list
    seed: int
    norm: str = "euclidean"

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "version": self.version,
                "experiment": self.experiment, "wall_time": self.wall_time,
                "tolerances": self.tolerances, "flags": self.flags, "files": self.files,
                "seed": self.seed, "norm": self.norm}


# ---------------------------------------------------------------------------
# helpers


def _sampler(cfg: RunConfig, dom: BoxDomain):
    from .gaussian import GaussianSampler, MembraneSparseSampler
    from .green import MAX_DENSE

    if cfg.model.kind == "membrane" and dom.N > MAX_DENSE:
        return MembraneSparseSampler(cfg.model, dom, cfg.tolerances["membrane_cg"]), None
    G = cached_green(cfg.model, dom)
    return GaussianSampler(G.matrix, "covariance", dom), G


def _g0(cfg: RunConfig) -> float:
    from .green import InfiniteGreen

    return InfiniteGreen(cfg.model, cfg.tolerances["green_quadrature"],
                         cfg.options["fractional_box_radius"]).at_zero()


def _series_rows(xs, ys, series):
    return [(float(x), float(y), series) for x, y in zip(xs, ys)]


def emit_plotdata(results, kind: str, path, chash: str, points: int = 200):
    """Long-format ``(x, y, series)`` CSV for one of the supported plot kinds.

    kinds: ``gumbel`` (a MaximaSample-like object with ``z`` and a ``limit``
    callable), ``bterms`` (list of report dicts with ``N``, ``b1``, ``b2``,
    ``b3``), ``decay`` (a DecayTable, extra ``ratio`` column) and
    ``intensity`` (a KallenbergReport).
    """
    if kind == "gumbel":
        z = np.sort(np.asarray(results["z"], float))
        grid = np.linspace(z[0], z[-1], points)
        emp = np.searchsorted(z, grid, side="right") / z.size
        rows = _series_rows(grid, emp, "empirical") + _series_rows(grid, results["limit"](grid), "limit")
        return write_csv(path, ["x", "y", "series"], rows, chash)
    if kind == "bterms":
        rows = []
        for b in ("b1", "b2", "b3"):
            rows += _series_rows([r["N"] for r in results], [r[b] for r in results], b)
        return write_csv(path, ["x", "y", "series"], rows, chash)
    if kind == "decay":
        rows = [(r["radius"], r["g"], r["direction"], r["normalized"]) for r in results.rows]
        return write_csv(path, ["x", "y", "series", "ratio"], rows, chash)
    if kind == "intensity":
        ids = range(len(results.cells))
        rows = _series_rows(ids, results.mean, "empirical") + _series_rows(ids, results.intensity, "intensity")
        return write_csv(path, ["x", "y", "series"], rows, chash)
    raise ParameterError(f"unknown plot kind {kind!r}")


# ---------------------------------------------------------------------------
# experiments


def _covariance(cfg, out, h, files, flags):
    summary = []
    for n in cfg.sizes:
        dom = cfg.domain(n)
        G = cached_green(cfg.model, dom)
        idx = np.arange(dom.N)
        rows = ((i, j, G.matrix[i, j]) for i in idx for j in idx)
        files.append(write_csv(out / f"covariance_n{n}.csv", ["row_site_index", "col_site_index", "value"],
                               rows, h))
        d = G.diagonal()
        summary.append({"n": n, "N": dom.N, "diag_min": d.min(), "diag_max": d.max()})
    files.append(write_json(out / "covariance_summary.json",
                            {"config_hash": h, "g0": _g0(cfg), "boxes": summary}))


def _sample(cfg, out, h, files, flags):
    from .gaussian import map_batches

    rows = []
    for n in cfg.sizes:
        dom = cfg.domain(n)
        sampler, _ = _sampler(cfg, dom)
        blocks = map_batches(sampler, cfg.replicates, cfg.seed, lambda b, ids: (b, ids), cfg.workers)
        for block, ids in blocks:
            for j, r in enumerate(ids):
                rows.extend((n, r, i, block[i, j]) for i in range(dom.N))
    files.append(write_csv(out / "samples.csv", ["n", "replicate", "site_index", "value"], rows, h))


def _maxima(cfg, out, h, files, flags):
    from .evt import gumbel_cdf, ks_distance, limit_cdf, simulate_maxima

    g0 = _g0(cfg)
    mode = cfg.options["mode"]
    delta = cfg.raw["domain"]["delta"]
    rows, summary = [], []
    qs = np.asarray(cfg.options["quantiles"], float)
    for n in cfg.sizes:
        dom = cfg.domain(n)
        sampler, _ = _sampler(cfg, dom)
        rescale = {"auto": None, "box": dom.N, "bulk": dom.bulk_count}[cfg.options["rescale"]]
        ms = simulate_maxima(sampler, dom, mode, cfg.replicates, cfg.seed, g0, rescale, cfg.workers)
        rows.extend((n, r, z) for r, z in enumerate(ms.z))
        # a bulk maximum normalised with the box count picks up the shift
        shifted = mode == "bulk" and ms.rescale_count == dom.N
        limit = (lambda z: limit_cdf(z, delta, dom.d)) if shifted else gumbel_cdf
        entry = {"n": n, "N": dom.N, "rescale_count": ms.rescale_count,
                 "ks_gumbel": ks_distance(ms, gumbel_cdf),
                 "quantiles": {"p": qs, "empirical": np.quantile(ms.z, qs),
                               "limit": -np.log(-np.log(qs)) + (dom.d * math.log(1 - 2 * delta)
                                                                 if shifted else 0.0)}}
        if shifted:
            entry["ks_limit"] = ks_distance(ms, limit)
        summary.append(entry)
        files.append(emit_plotdata({"z": ms.z, "limit": limit}, "gumbel", out / f"plot_gumbel_n{n}.csv",
                                   h, cfg.options["plot_points"]))
    files.append(write_csv(out / "maxima.csv", ["n", "replicate", "z"], rows, h))
    files.append(write_json(out / "maxima_summary.json",
                            {"config_hash": h, "mode": mode, "g0": g0, "sizes": summary}))


def _exceedance_counts(cfg, dom, sampler, us):
    """Per replicate, number of bulk sites above each threshold in ``us``."""
    from .gaussian import map_batches

    bulk = dom.bulk_indices()
    us = np.asarray(us, float)

    def count(block, ids):
        sub = block[bulk]
        return np.stack([(sub > u).sum(axis=0) for u in us], axis=1)

    return np.concatenate(map_batches(sampler, cfg.replicates, cfg.seed, count, cfg.workers))


def _steinchen(cfg, out, h, files, flags):
    from .green import InfiniteGreen, precision_matrix
    from .steinchen import build_family, compute_bounds

    reports, site_rows = [], []
    law = cfg.options["law"]
    ok = True
    for n in cfg.sizes:
        dom = cfg.domain(n)
        s_N = cfg.radius(dom.N)
        if law == "finite":
            sampler, green = _sampler(cfg, dom)
            prec = precision_matrix(cfg.model, dom, as_sparse=cfg.model.kind != "fractional")
        else:
            from .gaussian import GaussianSampler

            green = InfiniteGreen(cfg.model, cfg.tolerances["green_quadrature"],
                                  cfg.options["fractional_box_radius"])
            sampler, prec = GaussianSampler(green.matrix(dom.coords), "covariance", dom), None
        fams = [build_family(cfg.model, dom, z, s_N, law, green=green, precision=prec)
                for z in cfg.z_grid]
        reps = [compute_bounds(f, cfg.options["b3_method"]) for f in fams]
        counts = (_exceedance_counts(cfg, dom, sampler, [f.u for f in fams])
                  if cfg.options["monte_carlo"] else None)
        for k, (z, f, rep) in enumerate(zip(cfg.z_grid, fams, reps)):
            d = rep.to_dict()
            d.update(n=n, N=dom.N, z=z, u=f.u, s_N=s_N, m_N=int(dom.bulk_count), config_hash=h)
            if counts is not None:
                W = counts[:, k]
                R = W.size
                void = float(np.mean(W == 0))
                void_se = math.sqrt(max(void * (1 - void), 1e-300) / R)
                gap = abs(void - math.exp(-rep.lam))
                mean_se = float(W.std(ddof=1) / math.sqrt(R))
                d.update(replicates=R, void_freq=void, void_se=void_se,
                         void_limit=math.exp(-rep.lam), void_gap=gap,
                         void_ok=bool(gap <= rep.void_gap_bound + 3 * void_se),
                         mean_count=float(W.mean()), mean_se=mean_se,
                         mean_ok=bool(abs(W.mean() - rep.lam) <= 3 * mean_se))
                ok &= d["void_ok"] and d["mean_ok"]
            reports.append(d)
            per = rep.per_site
            site_rows.extend((n, z, s, p, a, b, c, vm, vp) for s, p, a, b, c, vm, vp in zip(
                per["site"], per["p"], per["b1"], per["b2"], per["b3"], per["var_mu"], per["var_psi"]))
    flags["steinchen"] = "pass" if ok else "fail"
    files.append(write_json(out / "steinchen.json", {"config_hash": h, "reports": reports}))
    files.append(write_csv(out / "steinchen_sites.csv",
                           ["n", "z", "site_index", "p", "b1", "b2", "b3", "var_mu", "var_psi"],
                           site_rows, h))
    for z in cfg.z_grid:
        files.append(emit_plotdata([r for r in reports if r["z"] == z], "bterms",
                                   out / f"plot_bterms_z{z:g}.csv", h))


def _pointprocess(cfg, out, h, files, flags):
    from .evt import scaling_constants
    from .pointprocess import CellSpec, exact_mean_counts, kallenberg_check
    from .steinchen import build_family, multivariate_tv_bound

    cells = [CellSpec.from_dict(c) for c in cfg.options["cells"]]
    mode = cfg.options["mode"]
    if mode != "bulk":
        raise ConfigError("pointprocess runs on the bulk; set options.mode to 'bulk'")
    g0 = _g0(cfg)
    rows, summary = [], []
    ok = True
    for n in cfg.sizes:
        dom = cfg.domain(n)
        sampler, green = _sampler(cfg, dom)
        # points are normalised with the box count; the bulk restriction enters the intensity
        sc = scaling_constants(g0, dom.N)
        pos = dom.positions()
        intervals, owner = [], []
        for j, c in enumerate(cells):
            mask = c.in_rectangle(pos)
            for x, y in c.intervals:
                intervals.append((mask, sc.u(x), math.inf if math.isinf(y) else sc.u(y)))
                owner.append(j)
        fam = build_family(cfg.model, dom, 0.0, cfg.radius(dom.N), "finite", green=green,
                           intervals=intervals)
        counts = [int(np.sum(m[dom.bulk_indices()])) for m, _, _ in intervals]
        ent = np.repeat(np.asarray(owner), counts)
        part = [np.flatnonzero(ent == j) for j in range(len(cells))]
        bound = multivariate_tv_bound(fam, part).bound
        exact = None if green is None else exact_mean_counts(green.diagonal(), dom, cells, sc, mode)
        rep = kallenberg_check(sampler, dom, cells, cfg.replicates, cfg.seed, sc, mode, cfg.workers,
                               exact_mean=exact)
        for j in range(len(cells)):
            rows.append((n, j, rep.mean[j], rep.se[j], rep.intensity[j],
                         np.nan if exact is None else exact[j], rep.var_ratio[j],
                         rep.void_freq[j], rep.void_limit[j], bound))
        mean_ok = bool(np.all(np.abs(rep.mean - rep.intensity) <= 3 * rep.se))
        var_ok = bool(np.all((rep.var_ratio >= 0.85) & (rep.var_ratio <= 1.15)))
        void_ok = bool(abs(rep.joint_void_freq - rep.joint_void_limit) <= bound + 3 * rep.joint_void_se)
        ok &= mean_ok and var_ok and void_ok
        summary.append({"n": n, "joint_void_freq": rep.joint_void_freq,
                        "joint_void_se": rep.joint_void_se, "joint_void_limit": rep.joint_void_limit,
                        "agg2_bound": bound, "mean_ok": mean_ok, "var_ok": var_ok,
                        "void_ok": void_ok, "count_corr": rep.count_corr})
        files.append(emit_plotdata(rep, "intensity", out / f"plot_intensity_n{n}.csv", h))
    flags["pointprocess"] = "pass" if ok else "fail"
    files.append(write_csv(out / "pointprocess.csv",
                           ["n", "cell", "mean", "se", "intensity", "exact_mean", "var_mean",
                            "void_freq", "void_limit", "agg2_bound"], rows, h))
    files.append(write_json(out / "pointprocess_summary.json",
                            {"config_hash": h, "cells": [c.to_dict() for c in cells],
                             "sizes": summary}))


def _audit(cfg, out, h, files, flags):
    from . import audit as A
    from .green import InfiniteGreen, kappa

    m = cfg.model
    o = cfg.options
    ev = InfiniteGreen(m, cfg.tolerances["green_quadrature"], o["fractional_box_radius"])
    decay = A.audit_decay(m, o["decay_max_radius"], ev, tuple(o["decay_window"]),
                          o["fractional_box_radius"])
    files.append(write_csv(out / "audit_decay.csv", ["direction", "radius", "g", "normalized"],
                           [(r["direction"], r["radius"], r["g"], r["normalized"]) for r in decay.rows], h))
    files.append(emit_plotdata(decay, "decay", out / "plot_decay.csv", h))
    a2 = A.audit_finite_vs_infinite(m, cfg.sizes, cfg.raw["domain"]["delta"], ev, o["a2_threshold"])
    files.append(write_csv(out / "audit_a2.csv", ["n", "N", "below", "above", "diag_excess"],
                           [(r["n"], r["N"], r["below"], r["above"], r["diag_excess"]) for r in a2.rows], h))
    pol = cfg.raw["policy"]
    policy = DependencyRadiusPolicy(m.kind, m.d, theta=pol["theta"], exponent=pol["exponent"],
                                    xi=pol["xi"], s=m.s)
    a3 = A.audit_conditional_variance(m, cfg.sizes, cfg.raw["domain"]["delta"], pol["theta"], policy,
                                      o["allow_degenerate"])
    files.append(write_csv(out / "audit_a3.csv", ["n", "N", "s_N", "sup_var_mu", "scaled", "claim6"],
                           [(r["n"], r["N"], r["s_N"], r["sup_var_mu"], r["scaled"], r["claim6"])
                            for r in a3.rows], h))
    kap = kappa(m, tol=cfg.tolerances["kappa"], evaluator=ev)
    link = A.kappa_link(m, cfg.sizes, pol["theta"], policy, kap.kappa)
    cert = A.certificate(decay, a2, a3, kap, link)
    cert.update(config_hash=h, kappa_argmax=kap.argmax, kappa_certificate=kap.certificate,
                decay_statistic=decay.statistic, decay_note=decay.note)
    files.append(write_json(out / "certificate.json", cert))
    flags.update(A1=decay.flag, A2=a2.flag, A3=a3.flag, kappa_link=link["flag"])


_DISPATCH = {"covariance": _covariance, "sample": _sample, "maxima": _maxima,
             "steinchen": _steinchen, "pointprocess": _pointprocess, "audit": _audit}


def run(config: RunConfig, out=None) -> RunManifest:
    """Execute the configured experiment and write its outputs plus ``manifest.json``."""
    if not isinstance(config, RunConfig):
        config = RunConfig.from_dict(config)
    out = Path(out if out is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    h = config.hash
    files, flags = [], {}
    t0 = time.perf_counter()
    _DISPATCH[config.experiment](config, out, h, files, flags)
    wall = time.perf_counter() - t0
    man = RunManifest(h, __version__, config.experiment, wall, dict(config.tolerances), flags,
                      sorted(p.name for p in files), config.seed)
    write_json(out / "manifest.json", man.to_dict())
    write_json(out / "config.json", {k: v for k, v in config.raw.items() if k not in _UNHASHED})
    return man
