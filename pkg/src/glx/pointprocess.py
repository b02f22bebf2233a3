"""Extremal point measures and Kallenberg's conditions for Poisson convergence.

A replicate's point configuration is ``{(alpha / n, (phi_alpha - b_N) / a_N)}``.
The limit is Poisson with intensity ``dt x e^{-z} dz`` on the retained bulk
cube ``[delta, 1 - delta]^d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class PointMeasure:
    positions: np.ndarray
    z: np.ndarray

    @property
    def count(self) -> int:
        return self.z.size

    def count_in(self, cell: "CellSpec") -> int:
        return int(np.sum(cell.contains(self.positions, self.z)))


def exceedance_points(values, domain, scaling, mode: str = "full") -> PointMeasure:
    """Rescaled points of one field; ``mode="bulk"`` keeps bulk sites only.

    Positions stay ``alpha / n`` in bulk mode.
    """
    phi = np.asarray(getattr(values, "values", values), dtype=float)
    if phi.size != domain.N:
        raise ParameterError("field length does not match the domain")
    if mode == "full":
        idx = np.arange(domain.N)
    elif mode == "bulk":
        idx = domain.bulk_indices()
    else:
        raise ParameterError("mode must be 'full' or 'bulk'")
    return PointMeasure(domain.positions()[idx], (phi[idx] - scaling.b) / scaling.a)


@dataclass(frozen=True)
class CellSpec:
    """Rectangle ``A = prod [lo_i, hi_i)`` (closed at 1) times a union of ``(x, y]``."""

    lo: tuple
    hi: tuple
    intervals: tuple = ((0.0, math.inf),)

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or np.any(lo < 0) or np.any(hi > 1) or np.any(lo >= hi):
            raise ParameterError("rectangle must lie in the unit cube with lo < hi")
        ivs = sorted((float(x), float(y)) for x, y in self.intervals)
        if not ivs:
            raise ParameterError("cell needs at least one interval")
        for x, y in ivs:
            if not x < y or x == math.inf:
                raise ParameterError(f"bad interval ({x}, {y}]")
        for (x0, y0), (x1, _) in zip(ivs, ivs[1:]):
            if x1 < y0:
                raise ParameterError("intervals must be disjoint")
        object.__setattr__(self, "intervals", tuple(ivs))
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @property
    def d(self) -> int:
        return len(self.lo)

    def in_rectangle(self, positions: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        upper = np.where(hi >= 1.0, positions <= hi, positions < hi)
        return np.all((positions >= lo) & upper, axis=-1)

    def in_intervals(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        out = np.zeros(z.shape, dtype=bool)
        for x, y in self.intervals:
            out |= (z > x) & (z <= y)
        return out

    def contains(self, positions, z) -> np.ndarray:
        return self.in_rectangle(positions) & self.in_intervals(z)

    def bulk_volume(self, delta: float) -> float:
        lo = np.maximum(np.asarray(self.lo), delta)
        hi = np.minimum(np.asarray(self.hi), 1.0 - delta)
        return float(np.prod(np.clip(hi - lo, 0.0, None)))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi),
                "intervals": [[x, None if math.isinf(y) else y] for x, y in self.intervals]}

    @classmethod
    def from_dict(cls, data: dict) -> "CellSpec":
        ivs = [(x, math.inf if y is None else y) for x, y in data.get("intervals", [[0.0, None]])]
        return cls(tuple(data["lo"]), tuple(data["hi"]), tuple(ivs))


@dataclass(frozen=True)
class Intensity:
    expected: float
    void: float


def poisson_intensity(cell: CellSpec, delta: float = 0.0) -> Intensity:
    """Limit mean count ``|A cap [delta, 1-delta]^d| sum (e^{-x} - e^{-y})`` and void probability."""
    mass = sum(math.exp(-x) - (0.0 if math.isinf(y) else math.exp(-y)) for x, y in cell.intervals)
    ex = cell.bulk_volume(delta) * mass
    return Intensity(ex, math.exp(-ex))


@dataclass
class KallenbergReport:
    cells: list
    mean: np.ndarray
    se: np.ndarray
    var_ratio: np.ndarray
    intensity: np.ndarray
    void_freq: np.ndarray
    void_limit: np.ndarray
    joint_void_freq: float
    joint_void_se: float
    joint_void_limit: float
    count_corr: np.ndarray
    replicates: int
    agg2_bound: Optional[float] = None
    exact_mean: Optional[np.ndarray] = None
    label: dict = field(default_factory=dict)

    def rows(self) -> list:
        out = []
        for j, c in enumerate(self.cells):
            out.append({"cell": j, "mean": self.mean[j], "se": self.se[j],
                        "intensity": self.intensity[j], "var_mean": self.var_ratio[j],
                        "void_freq": self.void_freq[j], "void_limit": self.void_limit[j],
                        "agg2_bound": self.agg2_bound})
        return out


def cell_counts(block: np.ndarray, positions: np.ndarray, scaling, cells: Sequence[CellSpec],
                idx: np.ndarray) -> np.ndarray:
    """Counts per (replicate, cell) for a batch of fields (columns)."""
    z = (block[idx] - scaling.b) / scaling.a
    pos = positions[idx]
    out = np.empty((block.shape[1], len(cells)), dtype=np.int64)
    for j, c in enumerate(cells):
        rect = c.in_rectangle(pos)
        out[:, j] = c.in_intervals(z[rect]).sum(axis=0)
    return out


def kallenberg_check(sampler, domain, cells: Sequence[CellSpec], replicates: int, seed: int,
                     scaling, mode: str = "bulk", workers: int = 1,
                     family_report=None, exact_mean=None) -> KallenbergReport:
    """Monte Carlo counts per cell against the Poisson limit.

    Condition (i): mean count vs intensity.  Condition (ii): joint void
    frequency vs ``prod exp(-intensity)``.  ``family_report`` optionally
    carries the AGG2 partition bound from the Stein-Chen module.
    """
    from .gaussian import map_batches

    if replicates < 2:
        raise ParameterError("need at least two replicates")
    idx = np.arange(domain.N) if mode == "full" else domain.bulk_indices()
    positions = domain.positions()
    counts = np.concatenate(map_batches(
        sampler, replicates, seed,
        lambda block, ids: cell_counts(block, positions, scaling, cells, idx), workers))
    delta = domain.delta if mode == "bulk" else 0.0
    inten = np.array([poisson_intensity(c, delta).expected for c in cells])
    mean = counts.mean(axis=0)
    var = counts.var(axis=0, ddof=1)
    se = np.sqrt(var / replicates)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mean > 0, var / mean, np.nan)
    void = (counts == 0).mean(axis=0)
    joint = np.all(counts == 0, axis=1)
    jf = float(joint.mean())
    corr = np.corrcoef(counts.T) if len(cells) > 1 else np.ones((1, 1))
    bound = getattr(family_report, "bound", None)
    return KallenbergReport(list(cells), mean, se, ratio, inten, void, np.exp(-inten), jf,
                            math.sqrt(max(jf * (1 - jf), 1e-300) / replicates),
                            float(np.exp(-inten.sum())), corr, replicates, bound,
                            None if exact_mean is None else np.asarray(exact_mean))


def exact_mean_counts(variances: np.ndarray, domain, cells: Sequence[CellSpec], scaling,
                      mode: str = "bulk") -> np.ndarray:
    """Finite-N expected counts ``sum_alpha P(phi_alpha in u(R))`` per cell."""
    from scipy.stats import norm

    idx = np.arange(domain.N) if mode == "full" else domain.bulk_indices()
    pos = domain.positions()[idx]
    sd = np.sqrt(np.asarray(variances)[idx])
    out = []
    for c in cells:
        rect = c.in_rectangle(pos)
        tot = 0.0
        for x, y in c.intervals:
            lo = scaling.u(x) / sd[rect]
            hi = np.inf if math.isinf(y) else scaling.u(y) / sd[rect]
            tot += float(np.sum(norm.sf(lo) - norm.sf(hi)))
        out.append(tot)
    return np.array(out)
