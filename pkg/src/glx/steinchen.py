"""Stein-Chen Poisson approximation for Gaussian exceedance families.

For indicators ``X_a = 1{phi_a in R_a}`` with dependency neighbourhoods
``B_a`` the bounds are

    b1 = sum_a sum_{b in B_a} p_a p_b
    b2 = sum_a sum_{b in B_a, b != a} P(X_a = X_b = 1)
    b3 = sum_a E| E[X_a - p_a | phi outside B_a] |

and ``|P(W = 0) - exp(-lambda)| <= min(1, 1/lambda) (b1 + b2 + b3)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import owens_t, roots_hermite
from scipy.stats import norm

from .errors import ParameterError, PartitionError
from .lattice import BoxDomain

_RHO_DEGENERATE = 1.0 - 1e-12


@dataclass(frozen=True)
class ExceedProb:
    value: float
    lower: Optional[float]
    upper: Optional[float]


def exceed_prob(variance: float, u: float) -> ExceedProb:
    """``P(phi > u)`` for ``phi ~ N(0, variance)`` with the Mills bracket.

    The bracket ``(1 - 1/t^2) phi(t)/t <= Pbar(t) <= phi(t)/t`` at
    ``t = u / sigma`` is returned only for ``u > 0``.
    """
    if not variance > 0:
        raise ParameterError("variance must be positive")
    t = u / np.sqrt(variance)
    val = float(norm.sf(t))
    if u <= 0:
        return ExceedProb(val, None, None)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        upper = float(norm.pdf(t) / t)
        lower = float((1 - 1 / t**2) * upper)
    return ExceedProb(val, lower, upper)


def upper_orthant(h, k, r):
    """``P(X > h, Y > k)`` for standard normals with correlation ``r``.

    Owen's T representation, vectorized.  Infinite thresholds are allowed;
    correlations within 1e-12 of +-1 use the comonotone limits.
    """
    h, k, r = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float), np.asarray(r, float))
    out = np.zeros(h.shape)
    qh, qk = norm.sf(h), norm.sf(k)
    inf = np.isinf(h) | np.isinf(k)
    # one coordinate unconstrained (-inf) or impossible (+inf)
    out[inf] = np.where(h[inf] == -np.inf, qk[inf], np.where(k[inf] == -np.inf, qh[inf], 0.0))
    hi = ~inf & (r >= _RHO_DEGENERATE)
    out[hi] = norm.sf(np.maximum(h[hi], k[hi]))
    lo = ~inf & (r <= -_RHO_DEGENERATE)
    out[lo] = np.maximum(0.0, norm.cdf(-k[lo]) - norm.cdf(h[lo]))
    zero = ~inf & ~hi & ~lo & ((h == 0) | (k == 0))
    if np.any(zero):
        out[zero] = _on_axis(h[zero], k[zero], r[zero])
    gen = ~inf & ~hi & ~lo & ~zero
    out[gen] = _owen(h[gen], k[gen], r[gen], qh[gen], qk[gen])
    return np.clip(out, 0.0, 1.0)


def _on_axis(h, k, r):
    # limits of the Owen form as one threshold tends to 0
    both = (h == 0) & (k == 0)
    out = 0.25 + np.arcsin(r) / (2 * np.pi)
    x = np.where(h == 0, k, h)
    s = np.sqrt(1.0 - r * r)
    one = 0.5 * (0.5 + norm.sf(x)) - 0.25 * np.sign(x) - owens_t(x, -r / s) - np.where(x < 0, 0.5, 0.0)
    return np.where(both, out, one)


def _owen(h, k, r, qh, qk):
    s = np.sqrt(1.0 - r * r)
    with np.errstate(divide="ignore", invalid="ignore"):
        ah = (k - r * h) / (h * s)
        ak = (h - r * k) / (k * s)
    # h, k are nonzero here; compare signs directly since h * k may underflow
    beta = np.where((h < 0) != (k < 0), 0.5, 0.0)
    return 0.5 * (qh + qk) - owens_t(h, ah) - owens_t(k, ak) - beta


def rectangle_prob(lo1, hi1, lo2, hi2, r):
    """``P(X in (lo1, hi1], Y in (lo2, hi2])`` for standard normals."""
    return (upper_orthant(lo1, lo2, r) - upper_orthant(hi1, lo2, r)
            - upper_orthant(lo1, hi2, r) + upper_orthant(hi1, hi2, r))


@dataclass(frozen=True)
class BivariateProb:
    value: float
    savage: Optional[float]
    degenerate: bool


def savage_bound(cov, u):
    """Savage upper bound on ``P(X > u, Y > u)``; ``inf`` unless both Delta_i > 0.

    Accepts a single 2x2 covariance or arrays ``(v1, v2, c12)``.
    """
    if isinstance(cov, tuple):
        v1, v2, c = (np.asarray(x, float) for x in cov)
    else:
        cov = np.asarray(cov, float)
        v1, v2, c = cov[0, 0], cov[1, 1], cov[0, 1]
    det = v1 * v2 - c * c
    # Sigma^{-1} 1 = (v2 - c, v1 - c) / det
    d1 = u * (v2 - c) / det
    d2 = u * (v1 - c) / det
    q = u * u * (v1 + v2 - 2 * c) / det
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = np.exp(-q / 2) / (2 * np.pi * np.sqrt(det) * d1 * d2)
    return np.where((d1 > 0) & (d2 > 0) & (det > 0), val, np.inf)


def bivariate_exceed_prob(cov2x2, u: float) -> BivariateProb:
    """``P(X > u, Y > u)`` for a centred pair plus the Savage bound."""
    cov = np.asarray(cov2x2, float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
        raise ParameterError("need a symmetric 2x2 covariance")
    s1, s2 = np.sqrt(cov[0, 0]), np.sqrt(cov[1, 1])
    r = cov[0, 1] / (s1 * s2)
    if abs(r) > 1 + 1e-12 or cov[0, 0] <= 0 or cov[1, 1] <= 0:
        raise ParameterError("covariance is not positive semidefinite")
    degenerate = bool(abs(r) >= _RHO_DEGENERATE)
    val = float(upper_orthant(u / s1, u / s2, np.clip(r, -1, 1)))
    sav = None if degenerate else float(savage_bound(cov, u))
    return BivariateProb(val, sav, degenerate)


def kappa_form_bound(kappa: float, m: float, z: float) -> float:
    """Closed-form majorant of the pair term at level ``u_m(z)``.

    ``(2 - k)^{3/2} k^{-1/2} m^{-2/(2-k)} max(e^{-2z} 1{z<=0}, e^{-2z/(2-k)} 1{z>0})``
    """
    zf = np.exp(-2 * z) if z <= 0 else np.exp(-2 * z / (2 - kappa))
    return float((2 - kappa) ** 1.5 / np.sqrt(kappa) * m ** (-2 / (2 - kappa)) * zf)


# ---------------------------------------------------------------------------
# families


@dataclass
class BernoulliFamily:
    """Indicators ``X_i = 1{phi_{site_i} in (lo_i, hi_i]}`` with ball neighbourhoods.

    ``cov`` gives covariances between sites (box index), either a dense
    matrix or a callable ``cov(i_array, j_array)``.  ``var_mu`` and
    ``var_psi`` hold the conditional split given the field outside each
    neighbourhood ball (within the box).
    """

    sites: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    variance: np.ndarray
    neighbours: list
    cov: object
    u: float
    var_mu: Optional[np.ndarray] = None
    var_psi: Optional[np.ndarray] = None
    label: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=np.int64)
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)
        self.variance = np.asarray(self.variance, float)

    @property
    def size(self) -> int:
        return self.sites.size

    @property
    def p(self) -> np.ndarray:
        sd = np.sqrt(self.variance)
        return norm.sf(self.lo / sd) - norm.sf(self.hi / sd)

    @property
    def lam(self) -> float:
        return float(np.sum(self.p))

    def pair_cov(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        a, b = self.sites[i], self.sites[j]
        if callable(self.cov):
            return self.cov(a, b)
        return np.asarray(self.cov)[a, b]


def _ball_neighbours(coords: np.ndarray, entries_sites: np.ndarray, radius: float) -> list:
    """Entry indices whose sites lie within ``radius`` of each entry's site."""
    from scipy.spatial import cKDTree

    pts = coords[entries_sites].astype(float)
    tree = cKDTree(pts)
    lists = tree.query_ball_point(pts, r=radius + 1e-9, p=2.0)
    return [np.asarray(sorted(l), dtype=np.int64) for l in lists]


def build_family(model, domain: BoxDomain, z: float, s_N: float, mode: str = "finite",
                 green=None, precision=None, intervals=None, conditional: bool = True):
    """Exceedance family over the bulk at level ``u_{m_N}(z)``.

    ``mode="finite"`` uses the box covariance ``g_N`` (law P_N); ``"infinite"``
    uses the stationary ``g`` restricted to the box (law P).  ``intervals``
    optionally replaces the single threshold by a list of ``(site_mask, lo, hi)``
    triples in field units (used for point-process cells).
    """
    from .evt import scaling_constants
    from .gaussian import ball_conditional_variances
    from .green import InfiniteGreen, finite_green, precision_matrix

    bulk = domain.bulk_indices()
    if bulk.size == 0:
        raise ParameterError("bulk is empty")
    if mode == "finite":
        G = green if green is not None else finite_green(model, domain)
        C = np.asarray(getattr(G, "matrix", G))
    elif mode == "infinite":
        ev = green if green is not None else InfiniteGreen(model)
        C = ev.matrix(domain.coords)
    else:
        raise ParameterError("mode must be 'finite' or 'infinite'")
    # scaling always uses the stationary variance g(0) and the exact bulk count
    g0 = float(C[0, 0]) if mode == "infinite" else _reference_g0(model, green)
    sc = scaling_constants(g0, bulk.size)
    u = sc.u(z)
    if intervals is None:
        sites, lo, hi = bulk, np.full(bulk.size, u), np.full(bulk.size, np.inf)
    else:
        parts = [(bulk[np.asarray(mask)[bulk]], l, h) for mask, l, h in intervals]
        sites = np.concatenate([s for s, _, _ in parts])
        lo = np.concatenate([np.full(s.size, l) for s, l, _ in parts])
        hi = np.concatenate([np.full(s.size, h) for s, _, h in parts])
    nb = _ball_neighbours(domain.coords, sites, s_N)
    fam = BernoulliFamily(sites, lo, hi, np.diag(C)[sites], nb, C, u,
                          label={"model": model.label(), "n": domain.n, "d": domain.d,
                                 "delta": domain.delta, "z": z, "s_N": s_N, "mode": mode,
                                 "m_N": int(bulk.size)})
    if conditional:
        # ball around each site within the whole box (K = V_N minus the ball)
        uniq = np.unique(sites)
        balls = [domain.ball_indices(a, s_N) for a in uniq]
        if mode == "finite":
            A = precision if precision is not None else precision_matrix(model, domain, as_sparse=model.kind != "fractional")
            vpsi, vmu = ball_conditional_variances(A, np.diag(C), balls, uniq)
        else:
            vpsi, vmu = _cov_ball_conditional(C, balls, uniq)
        pos = np.searchsorted(uniq, sites)
        fam.var_psi, fam.var_mu = vpsi[pos], vmu[pos]
    return fam


def _reference_g0(model, green):
    """Stationary ``g(0)`` used for the scaling constants of either law."""
    from .green import InfiniteGreen

    if isinstance(green, InfiniteGreen):
        return green.at_zero()
    return InfiniteGreen(model).at_zero()


def _cov_ball_conditional(C, balls, alphas):
    from scipy import linalg

    vpsi, vmu = np.empty(len(alphas)), np.empty(len(alphas))
    n = C.shape[0]
    for i, (a, B) in enumerate(zip(alphas, balls)):
        K = np.setdiff1d(np.arange(n), B)
        if K.size == 0:
            vpsi[i], vmu[i] = C[a, a], 0.0
            continue
        L = linalg.cholesky(C[np.ix_(K, K)], lower=True)
        v = linalg.solve_triangular(L, C[K, a], lower=True)
        vmu[i] = float(v @ v)
        vpsi[i] = C[a, a] - vmu[i]
    return vpsi, vmu


# ---------------------------------------------------------------------------
# bounds


@dataclass
class SteinChenReport:
    lam: float
    b1: float
    b2: float
    b3: float
    per_site: dict = field(repr=False, default_factory=dict)
    label: dict = field(default_factory=dict)
    b3_method: str = "exact"

    @property
    def total(self) -> float:
        return self.b1 + self.b2 + self.b3

    @property
    def tv_bound(self) -> float:
        return 2.0 * self.total

    @property
    def void_gap_bound(self) -> float:
        return poisson_gap_bound(self)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "b1": self.b1, "b2": self.b2, "b3": self.b3,
                "tv_bound": self.tv_bound, "void_gap_bound": self.void_gap_bound,
                "b3_method": self.b3_method, **self.label}


def poisson_gap_bound(report) -> float:
    """``min(1, 1/lambda) (b1 + b2 + b3)``."""
    return min(1.0, 1.0 / report.lam) * (report.b1 + report.b2 + report.b3)


def _b3_exact_halfline(u, var_mu, var_psi, p):
    """``E|Pbar((u - mu)/s_psi) - p|`` for ``mu ~ N(0, var_mu)``, exactly.

    The integrand is increasing in ``mu`` and crosses ``p`` at
    ``mu* = u - s_psi Pbar^{-1}(p)``; since ``E[f(mu)] = p`` the mean absolute
    deviation is ``2 [P(phi > u, mu > mu*) - p P(mu > mu*)]``.
    """
    out = np.zeros(np.shape(var_mu))
    ok = var_mu > 0
    if not np.any(ok):
        return out
    sm, sp = np.sqrt(var_mu[ok]), np.sqrt(var_psi[ok])
    sphi = np.sqrt(var_mu[ok] + var_psi[ok])
    mu_star = u[ok] - sp * norm.isf(p[ok])
    r = sm / sphi
    joint = upper_orthant(u[ok] / sphi, mu_star / sm, r)
    out[ok] = 2.0 * (joint - p[ok] * norm.sf(mu_star / sm))
    return np.maximum(out, 0.0)


def _b3_hermite(lo, hi, var_mu, var_psi, p, nodes: int = 64):
    x, w = roots_hermite(nodes)
    out = np.zeros(np.shape(var_mu))
    for i in range(len(out)):
        if var_mu[i] <= 0:
            continue
        mu = np.sqrt(2 * var_mu[i]) * x
        sp = np.sqrt(var_psi[i])
        f = norm.cdf((hi[i] - mu) / sp) - norm.cdf((lo[i] - mu) / sp)
        out[i] = np.sum(w * np.abs(f - p[i])) / np.sqrt(np.pi)
    return out


def _b3_interval(lo, hi, var_mu, var_psi, p):
    """Mean absolute deviation for a bounded interval by root-split quadrature."""
    out = np.zeros(np.shape(var_mu))
    for i in range(len(out)):
        if var_mu[i] <= 0:
            continue
        sm, sp = np.sqrt(var_mu[i]), np.sqrt(var_psi[i])

        def f(mu, i=i):
            return norm.cdf((hi[i] - mu) / sp) - norm.cdf((lo[i] - mu) / sp) - p[i]

        # f is unimodal with its peak at the interval midpoint
        mid = 0.5 * (lo[i] + hi[i]) if np.isfinite(lo[i]) else hi[i] - 10 * sp
        roots = []
        span = 12 * sm + 12 * sp + abs(mid)
        for a, b in ((mid - span, mid), (mid, mid + span)):
            if f(a) * f(b) < 0:
                roots.append(optimize.brentq(f, a, b, xtol=1e-14))
        lim = 12 * sm
        pts = [x for x in roots if -lim < x < lim]
        val, _ = integrate.quad(lambda m: abs(f(m)) * norm.pdf(m / sm) / sm, -lim, lim,
                                points=pts or None, limit=400, epsabs=1e-15, epsrel=1e-10)
        out[i] = val
    return out


def _pair_terms(fam: BernoulliFamily, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    c = fam.pair_cov(i, j)
    s1, s2 = np.sqrt(fam.variance[i]), np.sqrt(fam.variance[j])
    r = np.clip(c / (s1 * s2), -1.0, 1.0)
    return rectangle_prob(fam.lo[i] / s1, fam.hi[i] / s1, fam.lo[j] / s2, fam.hi[j] / s2, r)


def compute_bounds(fam: BernoulliFamily, b3_method: str = "exact",
                   hermite_nodes: int = 64, chunk: int = 200_000) -> SteinChenReport:
    """Evaluate lambda, b1, b2 and b3 for a family.

    ``b3_method``: ``"exact"`` (orthant identity for half-lines, root-split
    quadrature for bounded intervals) or ``"hermite"`` (Gauss-Hermite).
    """
    p = fam.p
    lens = np.array([len(b) for b in fam.neighbours])
    rows = np.repeat(np.arange(fam.size), lens)
    cols = np.concatenate(fam.neighbours) if fam.size else np.zeros(0, np.int64)
    b1_site = np.bincount(rows, weights=p[rows] * p[cols], minlength=fam.size)
    off = rows != cols
    r_off, c_off = rows[off], cols[off]
    pair = np.empty(r_off.size)
    for s in range(0, r_off.size, chunk):
        pair[s:s + chunk] = _pair_terms(fam, r_off[s:s + chunk], c_off[s:s + chunk])
    b2_site = np.bincount(r_off, weights=pair, minlength=fam.size)
    if fam.var_mu is None:
        raise ParameterError("family lacks conditional variances; build with conditional=True")
    if b3_method == "hermite":
        b3_site = _b3_hermite(fam.lo, fam.hi, fam.var_mu, fam.var_psi, p, hermite_nodes)
    elif b3_method == "exact":
        half = np.isinf(fam.hi)
        b3_site = np.zeros(fam.size)
        b3_site[half] = _b3_exact_halfline(fam.lo[half], fam.var_mu[half], fam.var_psi[half], p[half])
        if np.any(~half):
            b3_site[~half] = _b3_interval(fam.lo[~half], fam.hi[~half], fam.var_mu[~half],
                                          fam.var_psi[~half], p[~half])
    else:
        raise ParameterError("b3_method must be 'exact' or 'hermite'")
    per = {"site": fam.sites, "p": p, "b1": b1_site, "b2": b2_site, "b3": b3_site,
           "var_mu": fam.var_mu, "var_psi": fam.var_psi, "neighbours": lens}
    return SteinChenReport(float(np.sum(p)), float(np.sum(b1_site)), float(np.sum(b2_site)),
                           float(np.sum(b3_site)), per, dict(fam.label), b3_method)


@dataclass(frozen=True)
class PartitionReport:
    cells: list
    lam_cells: np.ndarray
    bound: float
    b1: float
    b2: float
    b3: float


def multivariate_tv_bound(fam: BernoulliFamily, partition: Sequence,
                          report: Optional[SteinChenReport] = None) -> PartitionReport:
    """Joint bound ``2 min(1, 1.4 (min_j lambda_j)^{-1/2}) (2 b1 + 2 b2 + b3)``.

    ``partition`` is a list of index arrays into the family's entries.
    """
    cells = [np.asarray(c, dtype=np.int64) for c in partition]
    if any(c.size == 0 for c in cells):
        raise PartitionError("partition has an empty cell")
    allidx = np.concatenate(cells)
    if allidx.size != fam.size or np.unique(allidx).size != fam.size:
        raise PartitionError("cells must be disjoint and cover the family")
    rep = report or compute_bounds(fam)
    p = fam.p
    lam = np.array([p[c].sum() for c in cells])
    factor = min(1.0, 1.4 / np.sqrt(lam.min())) if lam.min() > 0 else 1.0
    bound = 2.0 * factor * (2 * rep.b1 + 2 * rep.b2 + rep.b3)
    return PartitionReport(cells, lam, float(bound), rep.b1, rep.b2, rep.b3)
