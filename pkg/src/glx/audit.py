"""Numerical audits of the decay, finite-volume and conditional-variance hypotheses.

Each audit returns a table plus a flag in ``{"pass", "fail", "inconclusive"}``.
The hypotheses are asymptotic; a pass certifies a finite-size trend only.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ConsistencyError, ParameterError
from .evt import scaling_constants
from .green import (InfiniteGreen, box_solver, box_symmetry_representatives, finite_green,
                    kappa, precision_matrix, subdomain_green)
from .lattice import BoxDomain, DependencyRadiusPolicy, dependency_radius, radius_constraint_ratio
from .models import ModelSpec
from . import stable

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def _strictly_decreasing(x) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(np.diff(x) < 0))


# ---------------------------------------------------------------------------
# decay


@dataclass
class DecayTable:
    model: str
    rows: list
    plateau: Optional[float]
    statistic: float
    flag: str
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _directions(d: int):
    return {"axis": (1,) + (0,) * (d - 1), "diagonal": (1,) * d}


def audit_decay(model: ModelSpec, max_radius: int = 12, evaluator=None,
                window: tuple = (8, 12), box_radius: int = 64) -> DecayTable:
    """Decay of ``g(alpha)`` along the axis and the main diagonal.

    membrane: ``g r^(d-4)`` at the ends of ``window`` must agree within 10%;
    massive: correlation of ``log g`` with ``r`` must be at most -0.999;
    fractional: ``G_s r^(d-s)`` must change by under 10% when the inversion
    box is doubled, at radii up to ``box_radius / 8``;
    dgff: same plateau test as the membrane with power ``d - 2``.
    """
    d = model.d
    rows = []
    if model.kind == "fractional":
        return _audit_decay_fractional(model, box_radius)
    ev = evaluator or InfiniteGreen(model)
    g0 = ev.at_zero()
    for name, unit in _directions(d).items():
        for k in range(1, max_radius + 1):
            off = tuple(k * u for u in unit)
            r = k * math.sqrt(sum(unit))
            if r > max_radius + 1e-9:
                break
            g = ev(off)
            p = model.decay_power
            rows.append({"direction": name, "radius": r, "g": g,
                         "normalized": g * r**p if p is not None else math.log(g)})
    if model.kind == "massive":
        ax = [(row["radius"], row["g"]) for row in rows if row["direction"] == "axis"]
        r, g = np.array(ax).T
        corr = float(np.corrcoef(r, np.log(g))[0, 1])
        flag = PASS if corr <= -0.999 else FAIL
        ratios = g[1:] / g[:-1]
        return DecayTable(model.label(), rows, float(np.exp(np.mean(np.log(ratios)))), corr, flag,
                          "log-linearity of the axis decay; plateau is the mean step ratio")
    lo, hi = window
    ax = {round(row["radius"]): row["normalized"] for row in rows if row["direction"] == "axis"}
    if lo not in ax or hi not in ax:
        return DecayTable(model.label(), rows, None, math.nan, INCONCLUSIVE, "window outside table")
    stat = ax[hi] / ax[lo]
    flag = PASS if abs(stat - 1) <= 0.1 else INCONCLUSIVE
    if rows[-1]["g"] >= g0:
        flag = FAIL
    return DecayTable(model.label(), rows, float(ax[hi]), float(stat), flag,
                      f"ratio of g r^p at |alpha|={hi} and {lo}")


def _audit_decay_fractional(model: ModelSpec, box_radius: int) -> DecayTable:
    law = stable.StableLaw.of(model)
    p = model.decay_power
    rmax = max(1, box_radius // 8)
    rows, worst = [], 0.0
    for name, unit in _directions(model.d).items():
        for k in range(1, rmax + 1):
            r = k * math.sqrt(sum(unit))
            if r > rmax + 1e-9:
                break
            off = tuple(k * u for u in unit)
            g1 = stable.fractional_green_infinite(off, law, box_radius).value
            g2 = stable.fractional_green_infinite(off, law, 2 * box_radius).value
            change = abs(g2 * r**p / (g1 * r**p) - 1)
            worst = max(worst, change)
            rows.append({"direction": name, "radius": r, "g": g2, "g_half_box": g1,
                         "normalized": g2 * r**p, "doubling_change": change})
    plateau = float(np.median([row["normalized"] for row in rows]))
    norm = np.array([row["normalized"] for row in rows])
    in_sandwich = bool(np.all((norm >= 0.5 * plateau) & (norm <= 1.5 * plateau)))
    flag = PASS if worst <= 0.1 and in_sandwich else INCONCLUSIVE
    return DecayTable(model.label(), rows, plateau, float(worst), flag,
                      f"box doubling {box_radius}->{2 * box_radius}; plateau omega estimate "
                      f"(continuum constant {stable.omega_constant(law):.6g})")


# ---------------------------------------------------------------------------
# finite vs infinite volume


@dataclass
class FiniteVsInfiniteTable:
    model: str
    rows: list
    flag: str
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _infinite_on_pairs(ev: InfiniteGreen, coords: np.ndarray, cols: np.ndarray) -> np.ndarray:
    diff = np.sort(np.abs(coords[:, None, :] - coords[None, cols, :]), axis=2)
    keys, inv = np.unique(diff.reshape(-1, coords.shape[1]), axis=0, return_inverse=True)
    vals = np.array([ev(tuple(k)) for k in keys])
    return vals[inv.ravel()].reshape(len(coords), len(cols))


def finite_vs_infinite_row(model: ModelSpec, domain: BoxDomain, ev: InfiniteGreen) -> dict:
    """(A2) error terms for one box, scaled by ``log N``."""
    bulk = domain.bulk_indices()
    L = math.log(domain.N)
    g0 = ev.at_zero()
    if model.kind == "membrane" and domain.N > 4096:
        # one column per orbit of the box's reflection group
        reps, orbit = box_symmetry_representatives(domain)
        solve = box_solver(model, domain)
        below = above = diag = 0.0
        is_bulk = np.zeros(domain.N, bool)
        is_bulk[bulk] = True
        for r in reps:
            e = np.zeros(domain.N)
            e[r] = 1.0
            col = solve(e)
            diag = max(diag, col[r] - g0)
            if not is_bulk[r]:
                continue
            gi = _infinite_on_pairs(ev, domain.coords[bulk], np.array([np.flatnonzero(bulk == r)[0]]))[:, 0]
            dev = col[bulk] - gi
            below, above = max(below, -dev.min()), max(above, dev.max())
    else:
        G = finite_green(model, domain).matrix
        gi = _infinite_on_pairs(ev, domain.coords[bulk], np.arange(bulk.size))
        dev = G[np.ix_(bulk, bulk)] - gi
        below, above = max(0.0, -dev.min()), max(0.0, dev.max())
        diag = float(np.max(np.diag(G)) - g0)
    return {"n": domain.n, "N": domain.N, "below": max(below, 0.0) * L,
            "above": max(above, 0.0) * L, "diag_excess": max(diag, 0.0) * L}


def audit_finite_vs_infinite(model: ModelSpec, sizes: Sequence[int], delta: float = 0.1,
                             evaluator=None, threshold: float = 0.1) -> FiniteVsInfiniteTable:
    """(A2): ``(g - g_N)^+``, ``(g_N - g)^+`` over bulk pairs and ``(g_N(a,a) - g(0))^+``, times log N.

    Passes when the columns are non-increasing along the sizes and the last
    ``below`` entry (the dominant one) is under ``threshold``.
    """
    ev = evaluator or InfiniteGreen(model)
    rows = [finite_vs_infinite_row(model, BoxDomain(model.d, n, delta), ev) for n in sizes]
    below = [r["below"] for r in rows]
    above = [r["above"] for r in rows]
    ok = (all(np.diff(below) <= 0) and all(np.diff(above) <= 1e-15)
          and max(below[-1], above[-1]) < threshold)
    return FiniteVsInfiniteTable(model.label(), rows, PASS if ok else FAIL,
                                 "entries multiplied by log N; decreasing trend plus final < 0.1")


# ---------------------------------------------------------------------------
# conditional variance


@dataclass
class ConditionalVarianceTable:
    model: str
    theta: float
    rows: list
    flag: str
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _default_policy(model: ModelSpec, theta: float) -> DependencyRadiusPolicy:
    return DependencyRadiusPolicy(model.kind, model.d, theta=theta, s=model.s)


def conditional_variance_row(model: ModelSpec, domain: BoxDomain, s_N: float, theta: float,
                             g0: float, z: float = 0.0) -> dict:
    from .gaussian import ball_conditional_variances

    bulk = domain.bulk_indices()
    A = precision_matrix(model, domain, as_sparse=model.kind != "fractional")
    if model.kind in ("dgff", "massive", "fractional"):
        diag = np.diag(finite_green(model, domain).matrix)
    else:
        diag = np.zeros(domain.N)
        diag[bulk] = _membrane_diagonal(model, domain, bulk)
    balls = [domain.ball_indices(a, s_N) for a in bulk]
    vpsi, vmu = ball_conditional_variances(A, diag, balls, bulk)
    L = math.log(domain.N)
    u = scaling_constants(g0, bulk.size).u(z)
    return {"n": domain.n, "N": domain.N, "s_N": s_N,
            "sup_var_mu": float(vmu.max()),
            "scaled": float(vmu.max() * L ** (2 + theta)),
            "claim6": float(np.max((g0 / vpsi - 1) * u * u))}


def _membrane_diagonal(model, domain, idx):
    reps, orbit = box_symmetry_representatives(domain)
    solve = box_solver(model, domain)
    val = {}
    for r in np.unique(orbit[idx]):
        e = np.zeros(domain.N)
        e[reps[r]] = 1.0
        val[r] = solve(e)[reps[r]]
    return np.array([val[o] for o in orbit[idx]])


def audit_conditional_variance(model: ModelSpec, sizes: Sequence[int], delta: float = 0.1,
                               theta: float = 1.0, policy: Optional[DependencyRadiusPolicy] = None,
                               allow_degenerate: bool = False) -> ConditionalVarianceTable:
    """(A3): ``sup_bulk Var(mu_a) (log N)^(2 + theta)`` with ``s_N`` from the policy.

    ``K`` is the box minus the ball ``B(a, s_N)``.  A radius reaching half the
    box side is a configuration error unless ``allow_degenerate``.
    """
    policy = policy or _default_policy(model, theta)
    g0 = InfiniteGreen(model).at_zero()
    rows = []
    for n in sizes:
        dom = BoxDomain(model.d, n, delta)
        s_N = dependency_radius(policy, dom.N)
        if s_N >= n / 2 and not allow_degenerate:
            raise ConfigError(f"s_N = {s_N:.3g} is not below the box radius {n / 2} (n={n})")
        rows.append(conditional_variance_row(model, dom, s_N, theta, g0))
    scaled = [r["scaled"] for r in rows]
    flag = PASS if _strictly_decreasing(scaled) else FAIL
    return ConditionalVarianceTable(model.label(), theta, rows, flag,
                                    "strictly decreasing sup Var(mu) (log N)^(2+theta) required")


def membrane_var_mu(model: ModelSpec, domain: BoxDomain, alpha: int, radius: float,
                    check: bool = False, tol: float = 1e-8) -> float:
    """``Var(mu_a) = G_N(a, a) - G_B(a, a)`` with ``B`` the ball of the given radius.

    ``check=True`` also runs the dense Schur route and raises on disagreement.
    """
    ball = domain.ball_indices(alpha, radius)
    GB = subdomain_green(model, domain.coords[ball])
    pos = int(np.flatnonzero(ball == alpha)[0])
    e = np.zeros(domain.N)
    e[alpha] = 1.0
    gN = float(box_solver(model, domain)(e)[alpha])
    val = gN - float(GB[pos, pos])
    if check:
        from .gaussian import conditional_variances

        G = finite_green(model, domain)
        K = np.setdiff1d(np.arange(domain.N), ball)
        dec = conditional_variances(G, K, alpha)
        if abs(dec.var_mu - val) > tol:
            raise ConsistencyError(f"membrane Var(mu) routes differ: {dec.var_mu} vs {val}")
    return val


@dataclass
class SlopeReport:
    radii: list
    var_mu: list
    slope: float
    limit: float
    flag: str


def membrane_slope_test(model: ModelSpec, n: int = 11, radii=(1.5, 2.0, 2.5, 3.0, 3.5)) -> SlopeReport:
    """Regression slope of ``log Var(mu)`` on ``log s`` at the centre of a fixed box.

    The decay bound ``Var(mu) <= C s^(4-d)`` predicts slope at most ``-(d-4)``;
    the audit accepts ``-(d-4) + 0.5``.
    """
    if model.kind != "membrane":
        raise ParameterError("slope test is for the membrane")
    dom = BoxDomain(model.d, n)
    c = dom.index((n // 2,) * model.d)
    vals = [membrane_var_mu(model, dom, c, r) for r in radii]
    slope = float(np.polyfit(np.log(radii), np.log(vals), 1)[0])
    lim = -(model.d - 4) + 0.5
    return SlopeReport(list(radii), vals, slope, lim, PASS if slope <= lim else FAIL)


# ---------------------------------------------------------------------------
# kappa link and certificate


def kappa_link(model: ModelSpec, sizes: Sequence[int], theta: float = 1.0,
               policy: Optional[DependencyRadiusPolicy] = None, kappa_value=None) -> dict:
    """Check that ``s_N / N^(kappa/(d(2-kappa)))`` decreases along the sizes."""
    policy = policy or _default_policy(model, theta)
    k = kappa_value if kappa_value is not None else kappa(model).kappa
    ratios = [radius_constraint_ratio(dependency_radius(policy, n**model.d), n**model.d, k, model.d)
              for n in sizes]
    return {"kappa": k, "sizes": list(sizes), "ratios": ratios,
            "flag": PASS if _strictly_decreasing(ratios) else INCONCLUSIVE}


def certificate(decay: Optional[DecayTable] = None, a2: Optional[FiniteVsInfiniteTable] = None,
                a3: Optional[ConditionalVarianceTable] = None, kappa_est=None, link=None) -> dict:
    """Hypothesis certificate as a JSON-ready dict; missing audits are inconclusive."""
    out = {"A1": decay.flag if decay else INCONCLUSIVE,
           "A2": a2.flag if a2 else INCONCLUSIVE,
           "A3": a3.flag if a3 else INCONCLUSIVE,
           "kappa": None if kappa_est is None else kappa_est.kappa,
           "kappa_link": None if link is None else link["flag"],
           "note": "finite-size numerical evidence, not a proof"}
    return out
