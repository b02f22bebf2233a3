"""Finite- and infinite-volume Green's functions for the four interface models.

Conventions
-----------
The walk generator is ``Delta = P - I`` with ``P`` the simple random walk
kernel (``1/(2d)`` to each neighbour), so ``(-Delta)^{-1}`` equals the walk
path sum.  Precision matrices on a finite site set ``U`` are

* dgff        ``I - P_U``
* massive     ``I - (1 - theta) P_U``
* membrane    ``Delta^2`` restricted to ``U x U`` (not ``(Delta_U)^2``)
* fractional  ``I - Q_U`` with ``Q`` the stable-walk kernel.

For the membrane, ``(Delta^2)_U = (I - P_U)^2 + B^T B`` where ``B`` has one
row per exterior site ``g`` adjacent to ``U`` with entries ``1/(2d)`` at the
neighbours of ``g`` in ``U``.  On a box every exterior site touches a single
box site and ``B^T B`` is the diagonal ``#{exterior neighbours}/(2d)^2``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy import integrate, linalg, sparse
from scipy.sparse.linalg import LinearOperator, cg, eigsh
from scipy.special import ive, gammaln
from scipy.stats import binom

from . import stable
from .errors import (CertificateError, ParameterError, SPDError, SizeError,
                     TruncationError)
from .lattice import BoxDomain
from .models import ModelSpec

# dense GreenMatrix budget
MAX_DENSE = 8192


def _step_weight(model: ModelSpec) -> float:
    return 1.0 - model.theta if model.kind == "massive" else 1.0


# ---------------------------------------------------------------------------
# infinite volume


def _bessel_integrand(t, offset, d, c, theta, w):
    val = np.exp(-theta * t) if theta else 1.0
    for x in offset:
        val = val * ive(x, c * t / d)
    return val * t if w else val


def walk_green_infinite(model: ModelSpec, offset, tol: float = 1e-10) -> float:
    """Whole-space Green's function ``g(0, offset)`` via a Bessel integral.

    Uses ``g(x) = int_0^inf t^w e^{-theta t} prod_i Ie_{|x_i|}(c t / d) dt``
    with ``Ie`` the exponentially scaled modified Bessel function, ``w = 1``
    for the membrane and ``c = 1 - theta`` for the massive field.
    """
    if model.kind == "fractional":
        raise ParameterError("use fractional_green_infinite for the fractional field")
    if model.kind == "dgff" and model.d < 3:
        raise ParameterError("dgff integral diverges for d < 3")
    if model.kind == "membrane" and model.d < 5:
        raise ParameterError("membrane integral diverges for d < 5")
    off = tuple(sorted(abs(int(x)) for x in np.ravel(offset)))
    if len(off) != model.d:
        raise ParameterError(f"offset {offset} has wrong dimension for d={model.d}")
    c = _step_weight(model)
    theta = model.theta if model.kind == "massive" else 0.0
    w = model.kind == "membrane"
    r2 = sum(x * x for x in off)
    T = max(50.0, 4.0 * r2)
    args = (off, model.d, c, theta, w)
    # the integrand peaks near t ~ |x|^2; split there for quad
    v1, e1 = integrate.quad(_bessel_integrand, 0.0, T, args=args, epsabs=0.0,
                            epsrel=tol / 10, limit=500, points=[max(1.0, r2 / 2)] if r2 > 2 else None)
    v2, e2 = integrate.quad(_bessel_integrand, T, np.inf, args=args, epsabs=0.0,
                            epsrel=tol / 10, limit=500)
    val = v1 + v2
    if not np.isfinite(val) or (e1 + e2) > tol * abs(val) * 10:
        raise ParameterError(f"Bessel quadrature did not converge for {model.label()} at {offset}")
    return float(val)


def _lattice_walk_1d(m_max: int, x: int) -> np.ndarray:
    """``P(S_m = x)`` for the 1-d simple walk, m = 0..m_max."""
    m = np.arange(m_max + 1)
    k = (m + x) / 2
    ok = (k == np.floor(k)) & (np.abs(x) <= m)
    out = np.zeros(m_max + 1)
    out[ok] = binom.pmf(k[ok].astype(int), m[ok], 0.5)
    return out


def walk_probabilities(d: int, offset, m_max: int) -> np.ndarray:
    """``P_0(S_m = offset)`` for the d-dimensional simple walk, m = 0..m_max.

    Splits the steps among the coordinates: the number of steps taken in the
    first coordinate is Binomial(m, 1/d).
    """
    offset = [abs(int(x)) for x in offset]
    if d == 1:
        return _lattice_walk_1d(m_max, offset[0])
    first = _lattice_walk_1d(m_max, offset[0])
    rest = walk_probabilities(d - 1, offset[1:], m_max)
    out = np.empty(m_max + 1)
    for m in range(m_max + 1):
        k = np.arange(m + 1)
        out[m] = np.sum(binom.pmf(k, m, 1.0 / d) * first[: m + 1] * rest[m::-1])
    return out


@dataclass(frozen=True)
class WalkSum:
    value: float
    tail: float
    steps: int


def walk_sum_green(model: ModelSpec, offset, steps: Optional[int] = None,
                   tol: float = 1e-6) -> WalkSum:
    """Truncated path sum ``sum_{m<=M} w(m) c^m P_0(S_m = offset)`` plus tail.

    Massive: the tail is bounded by ``c^(M+1)/theta``.  DGFF and membrane:
    the tail is estimated from the local CLT ``P(S_m = x) ~ (d/(2 pi m))^(d/2)``
    (averaged over parity) and added to the value.
    """
    d = model.d
    if model.kind == "massive":
        c = _step_weight(model)
        M = steps or int(math.ceil(math.log(tol * model.theta) / math.log(c)))
        p = walk_probabilities(d, offset, M)
        val = float(np.sum(c ** np.arange(M + 1) * p))
        return WalkSum(val, c ** (M + 1) / model.theta, M)
    if model.kind not in ("dgff", "membrane"):
        raise ParameterError("walk sums cover dgff, membrane and massive")
    M = steps or 4000
    p = walk_probabilities(d, offset, M)
    a = (d / (2 * np.pi)) ** (d / 2)
    if model.kind == "dgff":
        val = float(p.sum())
        # int_{M+1/2}^inf a m^{-d/2} dm
        tail = a * (M + 0.5) ** (1 - d / 2) / (d / 2 - 1)
    else:
        val = float(np.sum((np.arange(M + 1) + 1) * p))
        tail = a * ((M + 0.5) ** (2 - d / 2) / (d / 2 - 2) + (M + 0.5) ** (1 - d / 2) / (d / 2 - 1))
    return WalkSum(val + tail, tail, M)


def canonical_offset(offset) -> tuple:
    """Representative of the offset's orbit under sign flips and permutations."""
    return tuple(sorted(abs(int(x)) for x in np.ravel(offset)))


@dataclass
class InfiniteGreen:
    """Memoizing evaluator of the stationary Green's function ``g(alpha)``.

    Values are cached per canonical offset, so lattice symmetries hold exactly.
    """

    model: ModelSpec
    tol: float = 1e-10
    box_radius: int = 64
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.model.kind == "fractional" and self.model.d > 2 and self.box_radius == 64:
            # 129^3 grids are too large for desk use
            self.box_radius = 16

    def __call__(self, offset) -> float:
        key = canonical_offset(offset)
        if key not in self._cache:
            if self.model.kind == "fractional":
                law = stable.StableLaw.of(self.model)
                val = stable.fractional_green_infinite(key, law, self.box_radius).value
            else:
                val = walk_green_infinite(self.model, key, self.tol)
            self._cache[key] = val
        return self._cache[key]

    def at_zero(self) -> float:
        return self((0,) * self.model.d)

    def matrix(self, coords: np.ndarray) -> np.ndarray:
        """``g(a - b)`` for all pairs of the given sites."""
        coords = np.asarray(coords, dtype=np.int64)
        diff = np.sort(np.abs(coords[:, None, :] - coords[None, :, :]), axis=2)
        keys, inv = np.unique(diff.reshape(-1, coords.shape[1]), axis=0, return_inverse=True)
        vals = np.array([self(tuple(k)) for k in keys])
        return vals[inv.ravel()].reshape(len(coords), len(coords))


# ---------------------------------------------------------------------------
# precision matrices


class _SiteLookup:
    """Map integer coordinates to positions in a site list (``-1`` if absent)."""

    def __init__(self, coords: np.ndarray):
        self.coords = np.asarray(coords, dtype=np.int64)
        self.lo = self.coords.min(axis=0) - 2
        self.shape = tuple(self.coords.max(axis=0) + 3 - self.lo)
        self.table = -np.ones(self.shape, dtype=np.int64)
        self.table[tuple((self.coords - self.lo).T)] = np.arange(len(self.coords))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        rel = pts - self.lo
        inside = np.all((rel >= 0) & (rel < np.array(self.shape)), axis=1)
        out = -np.ones(len(pts), dtype=np.int64)
        out[inside] = self.table[tuple(rel[inside].T)]
        return out


def _neighbour_operator(coords: np.ndarray, lookup: _SiteLookup):
    """Sparse ``P_U`` and the count of exterior neighbours per site."""
    n, d = coords.shape
    rows, cols = [], []
    outside = np.zeros(n)
    for i in range(d):
        for sgn in (1, -1):
            nb = coords.copy()
            nb[:, i] += sgn
            j = lookup(nb)
            ok = j >= 0
            rows.append(np.flatnonzero(ok))
            cols.append(j[ok])
            outside += ~ok
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    P = sparse.csr_matrix((np.full(rows.size, 1.0 / (2 * d)), (rows, cols)), shape=(n, n))
    return P, outside


def _sites(where) -> np.ndarray:
    if isinstance(where, BoxDomain):
        return where.coords
    arr = np.asarray(where, dtype=np.int64)
    if arr.ndim != 2:
        raise ParameterError("site list must be a (k, d) integer array")
    return arr


def precision_matrix(model: ModelSpec, where, as_sparse: bool = False):
    """Precision matrix of the model on a box or an arbitrary site set.

    Sites are ordered as in ``where`` (row-major for a :class:`BoxDomain`).
    """
    coords = _sites(where)
    if coords.shape[1] != model.d:
        raise ParameterError("site dimension does not match the model")
    n = len(coords)
    if model.kind == "fractional":
        if n > MAX_DENSE:
            raise SizeError(f"fractional precision is dense; {n} sites exceed {MAX_DENSE}")
        A = stable.fractional_precision_dense(stable.StableLaw.of(model), coords)
        return sparse.csr_matrix(A) if as_sparse else A
    if model.kind == "membrane":
        D = membrane_factor(coords)
        A = (D.T @ D).tocsr()
    else:
        P, _ = _neighbour_operator(coords, _SiteLookup(coords))
        A = (sparse.identity(n, format="csr") - _step_weight(model) * P).tocsr()
    if as_sparse:
        return A
    if n > MAX_DENSE:
        raise SizeError(f"{n} sites exceed the dense budget {MAX_DENSE}")
    return A.toarray()


def membrane_factor(where) -> sparse.csr_matrix:
    """Sparse ``D`` with ``D^T D = (Delta^2)_U``.

    Rows run over ``U`` followed by the exterior neighbours of ``U``; ``D`` is
    the generator ``P - I`` with columns restricted to ``U``.
    """
    coords = _sites(where)
    n, d = coords.shape
    lookup = _SiteLookup(coords)
    P, outside = _neighbour_operator(coords, lookup)
    top = sparse.identity(n, format="csr") - P
    return sparse.vstack([top, exterior_rows(coords, lookup)]).tocsr()


def exterior_rows(coords: np.ndarray, lookup=None) -> sparse.csr_matrix:
    """``B``: one row per exterior site adjacent to the set, ``1/(2d)`` at its neighbours in it."""
    n, d = coords.shape
    lookup = lookup or _SiteLookup(coords)
    ext = {}
    rows, cols = [], []
    for i in range(d):
        for sgn in (1, -1):
            nb = coords.copy()
            nb[:, i] += sgn
            j = lookup(nb)
            for a in np.flatnonzero(j < 0):
                key = tuple(nb[a])
                r = ext.setdefault(key, len(ext))
                rows.append(r)
                cols.append(a)
    return sparse.csr_matrix((np.full(len(rows), 1.0 / (2 * d)), (rows, cols)), shape=(len(ext), n))


# ---------------------------------------------------------------------------
# finite volume


@dataclass(frozen=True)
class GreenMatrix:
    """Dense finite-volume covariance ``g_N`` indexed by site index."""

    model: ModelSpec
    domain: object
    matrix: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def value(self, a, b) -> float:
        dom = self.domain
        return float(self.matrix[dom.index(a), dom.index(b)])


def _invert_spd(A: np.ndarray, what: str) -> np.ndarray:
    try:
        c = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise SPDError(f"{what}: precision matrix is not positive definite") from exc
    G = linalg.cho_solve(c, np.eye(A.shape[0]))
    return 0.5 * (G + G.T)


def finite_green(model: ModelSpec, domain) -> GreenMatrix:
    """Covariance matrix on a box (or site list) by inverting the precision."""
    coords = _sites(domain)
    if len(coords) > MAX_DENSE:
        raise SizeError(f"dense Green matrix limited to {MAX_DENSE} sites")
    A = precision_matrix(model, coords)
    return GreenMatrix(model, domain, _invert_spd(A, model.label()))


def subdomain_green(model: ModelSpec, coords) -> np.ndarray:
    """Green's matrix of the model with zero boundary data outside ``coords``."""
    return _invert_spd(precision_matrix(model, np.asarray(coords, dtype=np.int64)),
                       model.label())


def _spectral_radius(S) -> float:
    n = S.shape[0]
    if n <= 400:
        Sd = S.toarray() if sparse.issparse(S) else S
        return float(np.max(np.abs(linalg.eigvalsh(Sd))))
    vals = eigsh(S, k=1, which="LM", return_eigenvectors=False, tol=1e-10)
    return float(abs(vals[0])) * (1 + 1e-8)


def _walk_operator(model: ModelSpec, coords: np.ndarray):
    if model.kind == "fractional":
        return np.eye(len(coords)) - precision_matrix(model, coords)
    P, _ = _neighbour_operator(coords, _SiteLookup(coords))
    return _step_weight(model) * P


@dataclass(frozen=True)
class PathSum:
    values: np.ndarray
    tail_bound: float
    steps: int


def killed_walk_path_sums(model: ModelSpec, where, weight: str = "1",
                          tol: float = 1e-12, max_steps: int = 200_000,
                          columns=None) -> PathSum:
    """Path sums ``sum_m w(m) [(c K)^m](a, b)`` of the walk killed on leaving U.

    ``K`` is the sub-stochastic kernel of the model's walk restricted to the
    site set (``P_U`` or ``Q_U``) and ``c`` the survival factor per step.  The
    truncation error is bounded with the spectral radius ``r`` of ``c K``:
    ``sum_{m>M} w(m) r^m``.
    """
    coords = _sites(where)
    if weight not in ("1", "m+1"):
        raise ParameterError("weight must be '1' or 'm+1'")
    K = _walk_operator(model, coords)
    r = _spectral_radius(K)
    if r >= 1:
        raise TruncationError("walk is not killed: spectral radius >= 1")

    def tail(M):
        if weight == "1":
            return r ** (M + 1) / (1 - r)
        return r ** (M + 1) * ((M + 2) - (M + 1) * r) / (1 - r) ** 2

    n = len(coords)
    cols = np.arange(n) if columns is None else np.asarray(columns)
    V = np.zeros((n, len(cols)))
    V[cols, np.arange(len(cols))] = 1.0
    acc = np.zeros_like(V)
    m = 0
    while True:
        acc += (m + 1 if weight == "m+1" else 1) * V
        if tail(m) <= tol:
            break
        m += 1
        if m > max_steps:
            raise TruncationError(f"path sum needs more than {max_steps} steps (r={r:.6f})")
        V = K @ V
    return PathSum(acc, tail(m), m)


def membrane_boundary_correction(Gbar: np.ndarray, exterior, tol: float = 1e-12,
                                 max_terms: int = 10_000):
    """``(Gbar^{-1} + B^T B)^{-1}`` as a Neumann series.

    ``exterior`` is ``B`` (rows per exterior site) or, for a box, the vector
    of diagonal entries of ``B^T B``.  With ``S = B Gbar B^T`` the result is
    ``Gbar - Gbar B^T (I - S + S^2 - ...) B Gbar``, convergent when the
    spectral radius of ``S`` is below one.  Returns ``(matrix, tail_bound)``.
    """
    if sparse.issparse(exterior) or np.ndim(exterior) == 2:
        B = exterior.toarray() if sparse.issparse(exterior) else np.asarray(exterior, float)
    else:
        B = np.diag(np.sqrt(np.asarray(exterior, float)))
    L = Gbar @ B.T  # Gbar B^T
    S = B @ L
    rho = _spectral_radius(S)
    if rho >= 1:
        raise TruncationError(f"boundary series diverges (spectral radius {rho:.4f})")
    scale = np.linalg.norm(L, 2) ** 2
    term = np.eye(len(S))
    series = np.zeros_like(S)
    k = 0
    while scale * rho**k / (1 - rho) > tol:
        series += term
        term = -term @ S
        k += 1
        if k > max_terms:
            raise TruncationError("boundary series did not reach tolerance")
    return Gbar - L @ series @ L.T, scale * rho**k / (1 - rho)


@dataclass(frozen=True)
class OracleResult:
    value: float
    tail_bound: float
    steps: int


def killed_walk_green_oracle(model: ModelSpec, where, a, b, weight: Optional[str] = None,
                             tol: float = 1e-12) -> OracleResult:
    """Single entry of the killed-walk path-sum construction.

    ``weight="1"`` gives the killed Green's function (DGFF, massive, fractional);
    ``weight="m+1"`` gives ``Gbar_U = sum (m+1) P_a(S_m = b, m < tau)``, i.e.
    ``(I - P_U)^(-2)``.  For the membrane with the default weight the boundary
    correction of :func:`membrane_boundary_correction` is applied to ``Gbar``.
    """
    coords = _sites(where)
    lookup = _SiteLookup(coords)
    ia = int(lookup(np.asarray(a, dtype=np.int64).reshape(1, -1))[0])
    ib = int(lookup(np.asarray(b, dtype=np.int64).reshape(1, -1))[0])
    if ia < 0 or ib < 0:
        raise ParameterError("sites must belong to the domain")
    if model.kind != "membrane" or weight is not None:
        w = weight or "1"
        ps = killed_walk_path_sums(model, coords, w, tol, columns=[ib])
        return OracleResult(float(ps.values[ia, 0]), ps.tail_bound, ps.steps)
    M = membrane_oracle_matrix(model, coords, tol)
    return OracleResult(float(M.values[ia, ib]), M.tail_bound, M.steps)


def membrane_oracle_matrix(model: ModelSpec, where, tol: float = 1e-12) -> PathSum:
    """Membrane covariance from walk path sums plus the boundary series."""
    coords = _sites(where)
    ps = killed_walk_path_sums(model, coords, "m+1", tol)
    G, tb = membrane_boundary_correction(ps.values, exterior_rows(coords), tol)
    return PathSum(0.5 * (G + G.T), ps.tail_bound + tb, ps.steps)


def killed_walk_oracle_matrix(model: ModelSpec, where, tol: float = 1e-12) -> PathSum:
    """Entrywise path-sum oracle for ``finite_green`` on small domains."""
    if model.kind == "membrane":
        return membrane_oracle_matrix(model, where, tol)
    return killed_walk_path_sums(model, where, "1", tol)


# ---------------------------------------------------------------------------
# large-box solves


def _dst_box_inverse(n: int, d: int, c: float, power: int):
    """Apply ``(I - c P_N)^(-power)`` on the box ``[0, n-1]^d`` via DST-I."""
    k = np.arange(1, n + 1)
    cos = np.cos(np.pi * k / (n + 1))
    lam = np.ones((n,) * d)
    acc = np.zeros((n,) * d)
    for i in range(d):
        shape = [1] * d
        shape[i] = n
        acc = acc + cos.reshape(shape)
    lam = (1.0 - c * acc / d) ** power

    def apply(v):
        v = v.reshape((n,) * d)
        w = sfft.dstn(v, type=1, norm="ortho")
        return sfft.idstn(w / lam, type=1, norm="ortho").ravel()

    return apply


def box_solver(model: ModelSpec, domain: BoxDomain, rtol: float = 1e-12):
    """Return ``solve(rhs)`` for the box precision without dense inverses.

    DGFF and massive fields are diagonalized exactly by the sine transform;
    the membrane uses conjugate gradients preconditioned by ``(I - P_N)^(-2)``.
    """
    n, d = domain.n, domain.d
    if model.kind in ("dgff", "massive"):
        return _dst_box_inverse(n, d, _step_weight(model), 1)
    if model.kind != "membrane":
        raise ParameterError("box_solver covers dgff, massive and membrane")
    A = precision_matrix(model, domain, as_sparse=True)
    pre = _dst_box_inverse(n, d, 1.0, 2)
    Minv = LinearOperator(A.shape, matvec=pre, dtype=float)

    def solve(rhs):
        rhs = np.asarray(rhs, dtype=float).ravel()
        x, info = cg(A, rhs, rtol=rtol, atol=0.0, M=Minv, maxiter=5000)
        if info != 0:
            raise TruncationError(f"membrane CG did not converge (info={info})")
        return x

    return solve


def green_columns(model: ModelSpec, domain: BoxDomain, indices, rtol: float = 1e-12) -> np.ndarray:
    """Columns ``g_N(., b)`` for the given site indices, shape ``(N, k)``."""
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if model.kind == "fractional":
        G = finite_green(model, domain).matrix
        return G[:, idx]
    solve = box_solver(model, domain, rtol)
    out = np.empty((domain.N, len(idx)))
    for j, b in enumerate(idx):
        e = np.zeros(domain.N)
        e[b] = 1.0
        out[:, j] = solve(e)
    return out


def box_symmetry_representatives(domain: BoxDomain) -> tuple[np.ndarray, np.ndarray]:
    """Orbit representatives of box sites under the box's reflection group.

    Returns ``(rep_indices, orbit_id)`` where ``orbit_id[i]`` indexes
    ``rep_indices`` for every site ``i``.
    """
    n = domain.n
    folded = np.minimum(domain.coords, n - 1 - domain.coords)
    canon = np.sort(folded, axis=1)
    keys, first, inv = np.unique(canon, axis=0, return_index=True, return_inverse=True)
    return first.astype(np.int64), inv.ravel()


# ---------------------------------------------------------------------------
# kappa


@dataclass(frozen=True)
class KappaEstimate:
    kappa: float
    argmax: tuple
    search_radius: float
    certificate: dict


def _offsets_in_ball(d: int, radius: float) -> list:
    R = int(math.floor(radius))
    reps = []
    for t in itertools.combinations_with_replacement(range(R + 1), d):
        if 0 < sum(x * x for x in t) <= radius * radius + 1e-9:
            reps.append(t)
    return reps


DEFAULT_KAPPA_RADIUS = {"massive": 6.0, "dgff": 12.0, "membrane": 12.0, "fractional": 8.0}


def kappa(model: ModelSpec, search_radius: Optional[float] = None, tol: float = 1e-10,
          evaluator: Optional[InfiniteGreen] = None) -> KappaEstimate:
    """``kappa = 1 - sup_{alpha != 0} g(alpha)/g(0)`` with a tail certificate.

    The supremum is scanned over offsets with ``|alpha| <= search_radius``.
    Beyond the scan the ratio is bounded by

    * massive: ``(1 - theta)^{|alpha|_1}``, since ``g(alpha)/g(0)`` is the
      probability that the killed walk ever reaches ``alpha``;
    * power-law models: ``1.1 C R^{-p}/g(0)`` where ``C`` is the largest
      ``g(alpha)|alpha|^p`` on the outer half of the scan (direction axis and
      diagonal), accepted only when that product is stable to 10% over the
      outer half.
    """
    R = float(search_radius or DEFAULT_KAPPA_RADIUS[model.kind])
    ev = evaluator or InfiniteGreen(model, tol)
    if model.kind == "fractional":
        ev.box_radius = max(ev.box_radius, int(math.ceil(4 * R)))
    g0 = ev.at_zero()
    best, arg = -np.inf, None
    for off in _offsets_in_ball(model.d, R):
        ratio = ev(off) / g0
        if ratio > best:
            best, arg = ratio, off
    cert = {"method": None, "tail_bound": None, "attained": best, "radius": R}
    if model.kind == "massive":
        bound = (1.0 - model.theta) ** R
        cert.update(method="killed-walk hitting probability", tail_bound=bound)
    else:
        p = model.decay_power
        radii, prods = [], []
        for r in range(max(1, int(R // 2)), int(R) + 1):
            axis = (r,) + (0,) * (model.d - 1)
            val = ev(axis)
            radii.append(float(r))
            prods.append(val * r**p)
            k = int(round(r / math.sqrt(model.d)))
            if k >= 1:
                diag = (k,) * model.d
                rn = k * math.sqrt(model.d)
                prods.append(ev(diag) * rn**p)
        prods = np.asarray(prods)
        spread = float(prods.max() / prods.min() - 1.0) if np.all(prods > 0) else np.inf
        C = float(prods.max())
        bound = 1.1 * C * R ** (-p) / g0
        cert.update(method="power-law plateau", tail_bound=bound, plateau=C,
                    plateau_spread=spread, power=p)
        if spread > 0.1:
            raise CertificateError(
                f"decay plateau not reached within radius {R} (spread {spread:.3f})", cert)
    if not cert["tail_bound"] < best:
        raise CertificateError(
            f"tail bound {cert['tail_bound']:.4g} does not undercut the scanned maximum {best:.4g}",
            cert)
    k = 1.0 - best
    if not 0.0 < k <= 1.0:
        raise CertificateError(f"kappa {k} outside (0, 1]", cert)
    return KappaEstimate(float(k), tuple(arg), R, cert)
