"""Box, bulk, ball and boundary geometry on Z^d.

Sites of a box ``[0, n-1]^d`` are indexed in row-major (lexicographic)
order: the last coordinate varies fastest, so site ``(x_1, ..., x_d)`` has
index ``sum_i x_i * n**(d-1-i)``.  Every other module, and every CSV written
by the runner, relies on this ordering.

All distances are Euclidean.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import ParameterError, SizeError

NORM = "euclidean"

# dense index arrays are int64; keep a margin for offset arithmetic
MAX_SITES = 2**40


def _check_size(d: int, n: int) -> int:
    if d < 1 or n < 1:
        raise ParameterError(f"need d >= 1 and n >= 1, got d={d}, n={n}")
    if d * math.log2(n) > math.log2(MAX_SITES):
        raise SizeError(f"box of side {n} in d={d} has more than 2**40 sites")
    return n**d


def enumerate_box(d: int, n: int) -> np.ndarray:
    """Return the ``(n**d, d)`` integer array of sites of ``[0, n-1]^d``.

    >>> enumerate_box(2, 2).tolist()
    [[0, 0], [0, 1], [1, 0], [1, 1]]
    """
    N = _check_size(d, n)
    idx = np.arange(N, dtype=np.int64)
    return np.stack(np.unravel_index(idx, (n,) * d), axis=1).astype(np.int64)


def distance_to_exterior(coords: np.ndarray, n: int) -> np.ndarray:
    """Euclidean distance from each box site to the nearest site outside the box.

    The nearest exterior site is always one axis step past a face, so the
    distance is ``min_i min(x_i + 1, n - x_i)``.
    """
    coords = np.asarray(coords)
    return np.minimum(coords + 1, n - coords).min(axis=-1).astype(float)


@dataclass(frozen=True)
class BoxDomain:
    """The box ``V_N = [0, n-1]^d`` with bulk parameter ``delta``."""

    d: int
    n: int
    delta: float = 0.0
    _coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_size(self.d, self.n)
        if not 0.0 <= self.delta < 0.5:
            raise ParameterError(f"delta must lie in [0, 1/2), got {self.delta}")
        object.__setattr__(self, "_coords", None)

    @property
    def N(self) -> int:
        return self.n**self.d

    @property
    def coords(self) -> np.ndarray:
        if self._coords is None:
            object.__setattr__(self, "_coords", enumerate_box(self.d, self.n))
        return self._coords

    def index(self, site) -> int:
        site = tuple(int(x) for x in site)
        if len(site) != self.d:
            raise ParameterError(f"site {site} does not have dimension {self.d}")
        if not all(0 <= x < self.n for x in site):
            raise ParameterError(f"site {site} is outside the box")
        return int(np.ravel_multi_index(site, (self.n,) * self.d))

    def indices(self, sites: Iterable) -> np.ndarray:
        arr = np.asarray(list(sites), dtype=np.int64).reshape(-1, self.d)
        if arr.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(arr.T, (self.n,) * self.d).astype(np.int64)

    def site(self, index: int) -> tuple:
        return tuple(int(x) for x in np.unravel_index(index, (self.n,) * self.d))

    @property
    def bulk_threshold(self) -> float:
        # N^(1/d) == n exactly; avoid the float root
        return self.delta * self.n

    def bulk_mask(self) -> np.ndarray:
        dist = distance_to_exterior(self.coords, self.n)
        if self.delta == 0.0:
            return np.ones(self.N, dtype=bool)
        return dist > self.bulk_threshold

    def bulk_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bulk_mask())

    @property
    def bulk_count(self) -> int:
        """Exact ``m_N = |V_N^delta|`` by counting."""
        return int(self.bulk_mask().sum())

    def ball_indices(self, center_index: int, radius: float) -> np.ndarray:
        c = self.coords[center_index]
        d2 = ((self.coords - c) ** 2).sum(axis=1)
        return np.flatnonzero(d2 <= radius * radius + 1e-9)

    def positions(self) -> np.ndarray:
        """Rescaled positions ``alpha / n`` in ``[0, 1)^d``."""
        return self.coords / float(self.n)


def bulk_sites(domain: BoxDomain) -> set:
    return {tuple(int(x) for x in c) for c in domain.coords[domain.bulk_mask()]}


def ball_sites(center, radius: float, domain: BoxDomain) -> set:
    if radius < 0:
        raise ParameterError("radius must be nonnegative")
    c = np.asarray(center, dtype=np.int64)
    d2 = ((domain.coords - c) ** 2).sum(axis=1)
    sel = domain.coords[d2 <= radius * radius + 1e-9]
    return {tuple(int(x) for x in s) for s in sel}


def outer_boundary2(domain: BoxDomain) -> set:
    """Exterior sites within Euclidean distance 2 of the box."""
    d, n = domain.d, domain.n
    ranges = [range(-2, n + 2)] * d
    out = set()
    for cand in itertools.product(*ranges):
        if all(0 <= x < n for x in cand):
            continue
        # nearest box point is the coordinatewise clamp
        clamped = [min(max(x, 0), n - 1) for x in cand]
        if sum((a - b) ** 2 for a, b in zip(cand, clamped)) <= 4:
            out.add(tuple(cand))
    return out


@dataclass(frozen=True)
class DependencyRadiusPolicy:
    """How the Stein-Chen neighbourhood radius ``s_N`` grows with ``N``.

    ``exponent`` is the power ``T`` of ``log N`` for the membrane and DGFF;
    ``xi`` is the fractional-field exponent; ``theta`` is the audit exponent
    of the conditional-variance condition.
    """

    kind: str
    d: int
    theta: float = 1.0
    exponent: Optional[float] = None
    xi: float = 2.5
    s: Optional[float] = None

    def min_exponent(self) -> Optional[float]:
        if self.kind == "membrane":
            return (2.0 + self.theta) / (self.d - 4)
        if self.kind == "dgff":
            return (2.0 + self.theta) / (self.d - 2)
        return None


def dependency_radius(policy: DependencyRadiusPolicy, N: float) -> float:
    """Return ``s_N`` for the policy's model.

    membrane: ``(log N)^T`` with ``T > (2+theta)/(d-4)``;
    dgff: ``(log N)^T`` with ``T > (2+theta)/(d-2)``;
    massive: ``log N``; fractional: ``(log N)^(xi/(d-s))`` with ``xi > 2``.
    """
    if N < 2:
        raise ParameterError("dependency radius needs N >= 2")
    L = math.log(N)
    kind, d = policy.kind, policy.d
    if kind == "massive":
        return L
    if kind in ("membrane", "dgff"):
        crit = 4 if kind == "membrane" else 2
        if d <= crit:
            raise ParameterError(f"{kind} radius policy requires d > {crit}, got d={d}")
        lo = policy.min_exponent()
        T = policy.exponent if policy.exponent is not None else lo + 0.01
        if T <= lo:
            raise ParameterError(f"{kind} needs T > {lo:.4g}, got T={T}")
        return L**T
    if kind == "fractional":
        if policy.s is None or policy.s >= d:
            raise ParameterError("fractional radius policy requires s < d")
        if policy.xi <= 2:
            raise ParameterError("fractional radius policy requires xi > 2")
        return L ** (policy.xi / (d - policy.s))
    raise ParameterError(f"unknown model kind {kind!r}")


def radius_constraint_ratio(s_N: float, N: float, kappa: float, d: int) -> float:
    """``s_N / N^(kappa / (d (2 - kappa)))``; must tend to zero along N."""
    return s_N / N ** (kappa / (d * (2.0 - kappa)))
