"""Isotropic stable densities and the fractional-field random walk.

The density ``q_s`` of the isotropic stable law with characteristic function
``exp(-rho |t|^s)`` on R^d is radial.  Near the origin it is computed from the
Hankel-type inversion

    q(r) = (2 pi)^(-d/2) r^(1-d/2) int_0^inf exp(-rho k^s) k^(d/2) J_(d/2-1)(k r) dk

with Gauss-Legendre panels one half-period of the Bessel factor long, graded
towards k = 0 where ``exp(-rho k^s)`` has a cusp.  For large r the
inverse-power series

    q(r) = sum_k (-1)^(k+1) rho^k 2^(ks) Gamma((ks+d)/2) Gamma(ks/2+1)
                 sin(pi k s / 2) / (k! pi^(d/2+1) r^(ks+d))

is summed instead (convergent for s < 1, asymptotic otherwise).

Supported range: the quadrature is used where the series is not yet
accurate and is capped at ``MAX_PANELS`` Gauss-Legendre panels.  For
``s >= 0.4`` every radius up to ``R_MAX`` is covered; smaller indices raise
:class:`RangeError` at radii where neither route meets the tolerance.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import fft as sfft
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import gammaln, jv

from .errors import ParameterError, RangeError, TruncationError

_GL_X, _GL_W = leggauss(40)
# largest radius the quadrature/series pair is trusted for
R_MAX = 1e6
# radius beyond which the kernel switches from its spline table to the series
R_SWITCH = 20.0
# quadrature work cap; small s with large r exceeds it and raises RangeError
MAX_PANELS = 200_000


@dataclass(frozen=True)
class StableLaw:
    """Isotropic s-stable law on R^d with scale rho."""

    d: int
    s: float
    rho: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError("dimension must be positive")
        if not 0.0 < self.s < 2.0:
            raise ParameterError("stable index must lie in (0, 2)")
        if not self.rho > 0:
            raise ParameterError("stable scale must be positive")

    @classmethod
    def of(cls, model) -> "StableLaw":
        if isinstance(model, StableLaw):
            return model
        if getattr(model, "kind", None) != "fractional":
            raise ParameterError("a fractional model is required")
        return cls(model.d, model.s, model.rho)


def _density_at_zero(s, rho, d):
    # (2 pi)^-d |S^{d-1}| Gamma(d/s) / (s rho^(d/s))
    logv = (np.log(2.0) + (d / 2) * np.log(np.pi) - gammaln(d / 2)
            + gammaln(d / s) - np.log(s) - (d / s) * np.log(rho)
            - d * np.log(2 * np.pi))
    return float(np.exp(logv))


def _quadrature_one(r, s, rho, d, tol):
    nu = d / 2 - 1
    # exp(-rho k^s) k^(d/2) falls below tol * (its peak) beyond kmax
    kmax = ((-np.log(tol) + 10.0 + (d / (2 * s)) * np.log(1 + 40.0 / rho)) / rho) ** (1 / s)
    # oscillation period of the Bessel factor; r may be tiny or zero
    h = kmax / 64 if r * kmax < 64 * np.pi else np.pi / r
    if kmax / h > MAX_PANELS:
        raise RangeError(f"stable density at r={r:g}, s={s:g} needs more than "
                         f"{MAX_PANELS} quadrature panels")
    edges = np.arange(0.0, kmax + h, h)
    graded = h * np.geomspace(1e-10, 1.0, 40)
    edges = np.unique(np.concatenate([graded, edges]))
    edges[0] = 0.0
    a, b = edges[:-1, None], edges[1:, None]
    k = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    w = 0.5 * (b - a) * _GL_W
    f = np.exp(-rho * k**s) * k ** (d / 2) * jv(nu, k * r)
    terms = f * w
    total = terms.sum()
    scale = np.abs(terms).sum()
    return (2 * np.pi) ** (-d / 2) * r ** (1 - d / 2) * total, scale


def _series_coefficients(s, rho, d, K=80):
    k = np.arange(1, K + 1)
    logmag = (k * np.log(rho) + k * s * np.log(2.0) + gammaln((k * s + d) / 2)
              + gammaln(k * s / 2 + 1) - gammaln(k + 1) - (d / 2 + 1) * np.log(np.pi))
    sign = (-1.0) ** (k + 1) * np.sin(np.pi * k * s / 2)
    return k, logmag, sign


def _series(r, s, rho, d, tol):
    """Sum the inverse-power series at each r; return (values, trusted mask)."""
    r = np.asarray(r, dtype=float)
    k, logmag, sign = _series_coefficients(s, rho, d)
    logr = np.log(r)[..., None]
    logterm = np.minimum(logmag - (k * s + d) * logr, 700.0)
    terms = sign * np.exp(logterm)
    mags = np.where(np.abs(sign) > 1e-12, np.exp(logterm), 0.0)
    # stop at the smallest term (optimal truncation for the asymptotic case)
    cut = np.argmin(np.where(mags > 0, mags, np.inf), axis=-1)
    mask_k = np.arange(k.size) <= cut[..., None]
    val = np.sum(np.where(mask_k, terms, 0.0), axis=-1)
    last = np.take_along_axis(mags, cut[..., None], axis=-1)[..., 0]
    biggest = np.max(np.where(mask_k, mags, 0.0), axis=-1)
    ok = (val > 0) & (last <= tol * val) & (biggest <= 1e3 * val)
    return val, ok


def stable_radial(r, s: float, rho: float, d: int, tol: float = 1e-10) -> np.ndarray:
    """Radial profile of the isotropic stable density at distances ``r``."""
    StableLaw(d, s, rho)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ParameterError("radius must be nonnegative")
    if np.any(r > R_MAX):
        raise RangeError(f"radius beyond the supported range r <= {R_MAX:g}")
    out = np.empty_like(r)
    ser, ok = _series(np.maximum(r, 1e-300), s, rho, d, tol)
    for i, ri in enumerate(r):
        if ri == 0.0:
            out[i] = _density_at_zero(s, rho, d)
        elif ok[i]:
            out[i] = ser[i]
        else:
            val, scale = _quadrature_one(ri, s, rho, d, tol)
            if not val > 0 or val * r_scale(ri, d) < 1e-13 * scale:
                raise RangeError(f"stable density quadrature lost accuracy at r={ri:g}")
            out[i] = val
    return out


def r_scale(r, d):
    return (2 * np.pi) ** (d / 2) * r ** (d / 2 - 1)


def stable_density(x, s: float, rho: float = 1.0, tol: float = 1e-10) -> np.ndarray:
    """Density of the isotropic s-stable law at point(s) ``x`` of R^d.

    ``x`` has shape ``(d,)`` or ``(k, d)``; a scalar is read as d = 1.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    single = x.ndim == 1
    pts = x.reshape(1, -1) if single else x
    d = pts.shape[1]
    vals = stable_radial(np.linalg.norm(pts, axis=1), s, rho, d, tol)
    return vals[0] if single else vals


class StableKernel:
    """Fast evaluator of the radial stable density for kernel assembly.

    Holds a cubic spline of ``log q`` on ``[0, R_SWITCH]`` and falls back to
    the series beyond it.
    """

    def __init__(self, law: StableLaw, nodes: int = 1200):
        self.law = law
        # small s gives a sharp core: grade the nodes geometrically towards 0
        r = np.unique(np.concatenate([[0.0], np.geomspace(1e-4, R_SWITCH + 1, nodes),
                                      np.linspace(0.0, R_SWITCH + 1, nodes // 2)]))
        q = stable_radial(r, law.s, law.rho, law.d)
        self._spline = CubicSpline(r, np.log(q))
        # F(t) = int_0^t q(r) r^(d-1) dr, for the cell holding the peak
        self.radial_cdf = CubicSpline(r, q * r ** (law.d - 1)).antiderivative()
        self._rmax_table = R_SWITCH
        _, ok = _series(np.array([R_SWITCH]), law.s, law.rho, law.d, 1e-10)
        if not ok[0]:
            raise RangeError(f"series not accurate at r={R_SWITCH}; kernel unsupported for {law}")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        near = r <= self._rmax_table
        out[near] = np.exp(self._spline(r[near]))
        if np.any(~near):
            out[~near] = _series(r[~near], self.law.s, self.law.rho, self.law.d, 1e-10)[0]
        return out


@functools.lru_cache(maxsize=16)
def _kernel_evaluator(law: StableLaw) -> StableKernel:
    return StableKernel(law)


def _cell_integral(q, offsets: np.ndarray, d: int) -> np.ndarray:
    """Integrate q(|x + o|) over the unit cube ``[-1/2, 1/2]^d`` for each offset o."""
    out = np.empty(len(offsets))
    dist = np.abs(offsets).max(axis=1) if len(offsets) else np.zeros(0)
    if np.any(dist == 0):
        out[dist == 0] = _centre_cell(q, d)
    for lo, hi, npts in ((0, 3, 12), (3, 10, 6), (10, np.inf, 3)):
        sel = (dist > lo) & (dist <= hi)
        if not np.any(sel):
            continue
        x, w = leggauss(npts)
        x, w = x / 2, w / 2
        grids = np.meshgrid(*([x] * d), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0).ravel()
        o = offsets[sel].astype(float)
        # chunk to bound memory
        res = np.empty(len(o))
        chunk = max(1, 2_000_000 // len(nodes))
        for i in range(0, len(o), chunk):
            pts = o[i:i + chunk, None, :] + nodes[None, :, :]
            res[i:i + chunk] = q(np.linalg.norm(pts, axis=2)) @ weights
        out[sel] = res
    return out


def _centre_cell(q, d: int, npts: int = 24) -> float:
    # polar form: the cube seen from its centre has radial extent
    # 1 / (2 max_i |v_i|); parametrize directions by the faces
    if d == 1:
        return float(2 * q.radial_cdf(0.5))
    x, w = leggauss(npts)
    grids = np.meshgrid(*([x] * (d - 1)), indexing="ij")
    wts = np.prod(np.meshgrid(*([w] * (d - 1)), indexing="ij"), axis=0)
    rad2 = sum(g**2 for g in grids)
    F = q.radial_cdf(0.5 * np.sqrt(1 + rad2))
    return float(2 * d * np.sum(wts * F * (1 + rad2) ** (-d / 2)))


def transition_kernel(law, radius: int) -> np.ndarray:
    """Array of ``Q(0, o)`` for offsets ``o`` in ``[-radius, radius]^d``.

    The returned array has shape ``(2 radius + 1,) * d`` with the zero offset
    at the centre.
    """
    law = StableLaw.of(law)
    return _transition_kernel_cached(law, int(radius)).copy()


@functools.lru_cache(maxsize=8)
def _transition_kernel_cached(law: StableLaw, radius: int) -> np.ndarray:
    d = law.d
    side = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([side] * d), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=1)
    # kernel is symmetric under sign flips and permutations: integrate orbit reps
    canon = np.sort(np.abs(offsets), axis=1)
    reps, inverse = np.unique(canon, axis=0, return_inverse=True)
    vals = _cell_integral(_kernel_evaluator(law), reps, d)
    return vals[inverse.ravel()].reshape((2 * radius + 1,) * d)


def fractional_transition(a, b, law) -> float:
    """Transition probability ``Q(a, b)`` of the stable random walk on Z^d.

    Uses the signed offset ``a - b``; by the sign-flip symmetry of ``q_s`` this
    equals the integral at ``(a - b)^+``.
    """
    law = StableLaw.of(law)
    off = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    off = off.reshape(1, law.d)
    return float(_cell_integral(_kernel_evaluator(law), off, law.d)[0])


def tail_mass_outside_cube(law, half_width: float) -> float:
    """Stable-law mass outside ``[-a, a]^d`` from the inverse-power series.

    Requires ``half_width`` in the range where the series is accurate.
    """
    law = StableLaw.of(law)
    s, rho, d = law.s, law.rho, law.d
    a = float(half_width)
    _, ok = _series(np.array([a]), s, rho, d, 1e-10)
    if not ok[0]:
        raise RangeError(f"series tail not accurate at half width {a}")
    k, logmag, sign = _series_coefficients(s, rho, d)
    mags = np.exp(logmag - k * s * np.log(a))
    cut = int(np.argmin(np.where(np.abs(sign) > 1e-12, mags, np.inf)))
    total = 0.0
    for j in range(cut + 1):
        p = k[j] * s
        total += sign[j] * np.exp(logmag[j]) * a ** (-p) / p * _sphere_max_moment(d, p)
    return float(total)


def _sphere_max_moment(d: int, p: float, npts: int = 48) -> float:
    """Integral over the unit sphere of ``max_i |v_i|^p``."""
    if d == 1:
        return 2.0
    x, w = leggauss(npts)
    grids = np.meshgrid(*([x] * (d - 1)), indexing="ij")
    wts = np.prod(np.meshgrid(*([w] * (d - 1)), indexing="ij"), axis=0)
    rad2 = sum(g**2 for g in grids)
    return float(2 * d * np.sum(wts * (1 + rad2) ** (-(p + d) / 2)))


class _FFTConvolver:
    """Convolution of box-shaped arrays with a fixed centred kernel."""

    def __init__(self, kernel: np.ndarray, box_shape: tuple):
        self.box_shape = box_shape
        self.kshape = kernel.shape
        full = [b + k - 1 for b, k in zip(box_shape, kernel.shape)]
        self.fshape = [sfft.next_fast_len(f, real=True) for f in full]
        self.kfft = sfft.rfftn(kernel, self.fshape)
        self.start = [(k - 1) // 2 for k in kernel.shape]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        res = sfft.irfftn(sfft.rfftn(v, self.fshape) * self.kfft, self.fshape)
        sl = tuple(slice(s, s + b) for s, b in zip(self.start, self.box_shape))
        return res[sl]


@functools.lru_cache(maxsize=8)
def _green_column(law: StableLaw, box_radius: int, rtol: float) -> np.ndarray:
    R = box_radius
    n = 2 * R + 1
    shape = (n,) * law.d
    conv = _FFTConvolver(_transition_kernel_cached(law, 2 * R), shape)

    def mv(v):
        v = v.reshape(shape)
        return (v - conv(v)).ravel()

    A = LinearOperator((n**law.d,) * 2, matvec=mv, dtype=float)
    rhs = np.zeros(shape)
    rhs[(R,) * law.d] = 1.0
    x, info = cg(A, rhs.ravel(), rtol=rtol, atol=0.0, maxiter=20000)
    if info != 0:
        raise TruncationError(f"CG did not converge for box radius {R} (info={info})")
    x = x.reshape(shape)
    x.setflags(write=False)
    return x


def fractional_green_table(law, box_radius: int, rtol: float = 1e-12) -> np.ndarray:
    """``G_{s,Lambda}(0, o)`` for all ``o`` in the box ``Lambda = [-R, R]^d``.

    Centre of the returned array is the zero offset.
    """
    return _green_column(StableLaw.of(law), int(box_radius), rtol)


@dataclass(frozen=True)
class FractionalGreenValue:
    value: float
    box_radius: int
    offset: tuple
    raw: float = float("nan")
    half_box: float = float("nan")


def fractional_green_infinite(offset, law, box_radius: int = 64, rtol: float = 1e-12,
                              extrapolate: bool = True) -> FractionalGreenValue:
    """Approximate the whole-space Green's function ``G_s(0, offset)``.

    Solves ``(I - Q) x = delta_0`` on the box ``[-R, R]^d`` around the origin.
    The box value misses the walks that leave the box, an error of leading
    order ``c R^(s-d)``; with ``extrapolate`` the solves at ``R`` and ``R/2``
    are combined to cancel that term (Richardson step).  ``raw`` and
    ``half_box`` keep the two box values.
    """
    law = StableLaw.of(law)
    if law.s >= law.d:
        raise ParameterError("fractional Green's function needs s < d")
    off = np.asarray(offset, dtype=int).reshape(law.d)
    norm = float(np.linalg.norm(off))
    if box_radius < 4 * norm or box_radius < 1:
        raise ParameterError(f"box_radius {box_radius} < 4*|offset| = {4 * norm:g}")
    R = int(box_radius)
    raw = float(fractional_green_table(law, R, rtol)[tuple(R + int(o) for o in off)])
    if not extrapolate or R < 2:
        return FractionalGreenValue(raw, R, tuple(int(o) for o in off), raw)
    h = R // 2
    half = float(fractional_green_table(law, h, rtol)[tuple(h + int(o) for o in off)])
    f = (R / h) ** (law.d - law.s)
    return FractionalGreenValue((f * raw - half) / (f - 1), R, tuple(int(o) for o in off), raw, half)


def fractional_precision_dense(law, coords: np.ndarray) -> np.ndarray:
    """``(I - Q)`` restricted to the sites ``coords`` (dense)."""
    law = StableLaw.of(law)
    coords = np.asarray(coords, dtype=np.int64)
    diff = coords[:, None, :] - coords[None, :, :]
    R = int(np.abs(diff).max()) if len(coords) > 1 else 0
    K = _transition_kernel_cached(law, R)
    Q = K[tuple((diff + R)[..., i] for i in range(law.d))]
    return np.eye(len(coords)) - Q


def omega_constant(law: Optional[StableLaw]) -> float:
    """Riesz-potential constant ``Gamma((d-s)/2) / (2^s pi^(d/2) Gamma(s/2) rho)``.

    Leading coefficient of the continuum Green's function of ``rho |t|^s``;
    reported beside the empirical plateau for comparison only.
    """
    law = StableLaw.of(law)
    d, s = law.d, law.s
    return float(np.exp(gammaln((d - s) / 2) - s * np.log(2) - (d / 2) * np.log(np.pi)
                        - gammaln(s / 2)) / law.rho)
