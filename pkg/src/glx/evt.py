"""Gumbel scaling constants, limit laws and Monte Carlo maxima."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class ScalingConstants:
    """Centering ``b_N`` and scaling ``a_N = g0 / b_N`` for ``N`` variables of variance g0."""

    a: float
    b: float
    N: float
    g0: float

    def u(self, z):
        """Threshold ``u_N(z) = b_N + a_N z``."""
        return self.b + self.a * np.asarray(z, dtype=float) if np.ndim(z) else self.b + self.a * float(z)

    def z(self, x):
        return (np.asarray(x, dtype=float) - self.b) / self.a


def scaling_constants(g0: float, N: float) -> ScalingConstants:
    """``b_N = sqrt(g0) [sqrt(2 log N) - (log log N + log 4 pi) / (2 sqrt(2 log N))]``.

    >>> sc = scaling_constants(1.0, math.exp(10))
    >>> round(sc.b, 4), round(sc.a, 4)
    (3.9317, 0.2543)
    """
    if N < 3:
        raise ParameterError("scaling constants need N >= 3")
    if not g0 > 0:
        raise ParameterError("g0 must be positive")
    L = math.log(N)
    r = math.sqrt(2 * L)
    b = math.sqrt(g0) * (r - (math.log(L) + math.log(4 * math.pi)) / (2 * r))
    return ScalingConstants(g0 / b, b, float(N), float(g0))


def limit_cdf(z, delta: float = 0.0, d: int = 1):
    """``exp(-exp(-z + d log(1 - 2 delta)))``: Gumbel law of the bulk maximum."""
    if not 0.0 <= delta < 0.5:
        raise ParameterError("delta must lie in [0, 1/2)")
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-np.exp(-z + d * math.log(1 - 2 * delta)))
    return float(out) if out.ndim == 0 else out


def gumbel_cdf(z):
    return limit_cdf(z, 0.0, 1)


@dataclass(frozen=True)
class MaximaSample:
    z: np.ndarray
    mode: str
    seed: int
    rescale_count: int
    label: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.z.size


def simulate_maxima(sampler, domain, mode: str, replicates: int, seed: int, g0: float,
                    rescale_count=None, workers: int = 1, label=None) -> MaximaSample:
    """Scaled maxima ``(max_S phi - b_M) / a_M`` per replicate.

    ``mode="full"`` takes the max over the box with ``M = N``; ``mode="bulk"``
    takes it over the bulk with ``M = m_N`` unless ``rescale_count`` overrides.
    Maxima are reduced batch by batch; fields are not retained.
    """
    from .gaussian import map_batches

    if mode == "full":
        idx = None
        M = domain.N if rescale_count is None else rescale_count
    elif mode == "bulk":
        idx = domain.bulk_indices()
        M = idx.size if rescale_count is None else rescale_count
    else:
        raise ParameterError("mode must be 'full' or 'bulk'")
    sc = scaling_constants(g0, M)

    def reduce(block, ids):
        sub = block if idx is None else block[idx]
        return sub.max(axis=0)

    mx = np.concatenate(map_batches(sampler, replicates, seed, reduce, workers))
    return MaximaSample(sc.z(mx), mode, seed, int(M), dict(label or {}))


def ks_distance(sample, reference_cdf) -> float:
    """Exact Kolmogorov statistic ``sup |F_n - F|`` of a sample against a CDF."""
    z = np.sort(np.asarray(getattr(sample, "z", sample), dtype=float).ravel())
    n = z.size
    if n == 0:
        raise ParameterError("empty sample")
    F = np.asarray(reference_cdf(z), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
