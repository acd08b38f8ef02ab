"""Transversal fluctuations of optimal paths and growth-exponent fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._fit import fit_line
from ._hash import derive_seed
from ._parallel import ordered_map
from .geodesic import OptimalVertexSet, Region, _auto, continuum_lift, passage_time, passage_times
from .weights import DistributionSpec, WeightField, validate


class DegenerateFit(ValueError):
    """Every per-n statistic is zero, so no power law can be fitted."""


@dataclass(frozen=True)
class Direction:
    r: float
    theta: float

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"r must be positive, got {self.r}")
        if not 0.0 <= self.theta <= math.pi / 2:
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta}")

    def point(self, n):
        """Lattice vertex nearest to ``n * (r cos theta, r sin theta)``."""
        return continuum_lift((n * self.r * math.cos(self.theta), n * self.r * math.sin(self.theta)))

    def distance_to_line(self, xy):
        """Euclidean distance from points ``(k, 2)`` to the infinite line through 0 at angle theta."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return np.abs(xy[:, 1] * math.cos(self.theta) - xy[:, 0] * math.sin(self.theta))


@dataclass(frozen=True)
class FluctuationSample:
    n: int
    hn: float
    replicate_id: int
    seed: int


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    intercept: float
    stderr: float
    n_range: tuple
    points_used: int

    def to_dict(self):
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "nRange": list(self.n_range),
            "pointsUsed": self.points_used,
        }


class VariancePoint(NamedTuple):
    n: int
    variance: float
    stderr: float = 0.0


def transversal_fluctuation(mset: OptimalVertexSet, direction: Direction) -> float:
    xy = mset.member_xy
    if len(xy) == 0:
        raise ValueError("optimal vertex set is empty")
    return float(direction.distance_to_line(xy).max())


def task_seed(seed, kind, n, rep):
    return derive_seed(seed, kind, int(n), int(rep))


def _check_grid(n_list, replicates):
    n_list = [int(n) for n in n_list]
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    if any(n < 1 for n in n_list) or n_list != sorted(n_list):
        raise ValueError("n_list must be ascending positive integers")
    return n_list


def sample_fluctuations(
    spec: DistributionSpec, direction: Direction, n_list, replicates: int, seed: int, threads=1
) -> list[FluctuationSample]:
    """One ``h_n`` per ``(n, replicate)`` in canonical ``(n, replicate)`` order."""
    validate(spec)
    n_list = _check_grid(n_list, replicates)
    tasks = [(n, rep) for n in n_list for rep in range(replicates)]

    def one(task):
        n, rep = task
        s = task_seed(seed, "xi", n, rep)
        mset, _ = _auto(WeightField(spec, s, rep), (0, 0), direction.point(n))
        return FluctuationSample(n, transversal_fluctuation(mset, direction), rep, s)

    return ordered_map(one, tasks, threads)


def _median_by_n(samples):
    by_n = {}
    for s in samples:
        by_n.setdefault(int(s.n), []).append(float(s.hn))
    ns = np.array(sorted(by_n))
    return ns, np.array([np.median(by_n[n]) for n in ns])


def estimate_xi(samples: Sequence[FluctuationSample]) -> ExponentFit:
    """Slope of log(median h_n) against log n over the n with a positive median."""
    ns, med = _median_by_n(samples)
    if len(ns) and np.all(med == 0):
        raise DegenerateFit("all median fluctuations are zero; the exponent is undefined")
    keep = med > 0
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 values of n with positive median, got {int(keep.sum())}")
    f = fit_line(np.log(ns[keep]), np.log(med[keep]))
    return ExponentFit(f.slope, f.intercept, f.slope_se, (int(ns[keep][0]), int(ns[keep][-1])), f.points)


def median_curve(samples):
    """``(n, median h_n)`` arrays, as used by :func:`estimate_xi`."""
    return _median_by_n(samples)


def _variance_with_error(values):
    v = np.asarray(values, dtype=float)
    R = len(v)
    var = float(v.var(ddof=1))
    m4 = float(((v - v.mean()) ** 4).mean())
    # standard error of the unbiased sample variance
    se2 = (m4 - (R - 3) / (R - 1) * var**2) / R
    return var, math.sqrt(max(se2, 0.0))


def variance_scan(
    spec: DistributionSpec,
    direction: Direction,
    n_list,
    replicates: int,
    seed: int,
    threads=1,
    region: Region | None = None,
    min_replicates: int = 30,
) -> list[VariancePoint]:
    """Unbiased sample variance of ``T(0, n * direction)`` for each n.

    ``region`` pins the computation to a fixed box instead of the
    automatically certified one.
    """
    validate(spec)
    n_list = _check_grid(n_list, replicates)
    if replicates < min_replicates:
        raise ValueError(f"variance needs at least {min_replicates} replicates, got {replicates}")
    tasks = [(n, rep) for n in n_list for rep in range(replicates)]

    def one(task):
        n, rep = task
        field = WeightField(spec, task_seed(seed, "chi", n, rep), rep)
        target = direction.point(n)
        if region is None:
            return passage_time(field, (0, 0), target)
        return passage_times(field, region, (0, 0)).time(target)

    times = np.array(ordered_map(one, tasks, threads), dtype=float).reshape(len(n_list), replicates)
    return [VariancePoint(n, *_variance_with_error(row)) for n, row in zip(n_list, times)]


def estimate_chi(scan) -> ExponentFit:
    """Half the slope of log-variance against log n.

    The reported error combines the regression residual error with the
    sampling error of the variances when the scan carries it.
    """
    pts = [VariancePoint(*p) for p in scan]
    ns = np.array([p.n for p in pts], dtype=float)
    var = np.array([p.variance for p in pts], dtype=float)
    se = np.array([p.stderr for p in pts], dtype=float)
    if len(var) and np.all(var == 0):
        raise DegenerateFit("all variances are zero; the exponent is undefined")
    keep = var > 0
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 values of n with positive variance, got {int(keep.sum())}")
    x, y = np.log(ns[keep]), np.log(var[keep])
    f = fit_line(x, y)
    err = f.slope_se
    if np.all(se[keep] > 0):
        err = math.hypot(err, fit_line(x, y, sigma=se[keep] / var[keep]).slope_se)
    return ExponentFit(f.slope / 2, f.intercept / 2, err / 2, (int(ns[keep][0]), int(ns[keep][-1])), f.points)
