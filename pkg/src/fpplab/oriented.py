"""Oriented bond percolation on the rotated lattice and its right edge.

Sites are ``(m, n)`` with ``m + n`` even and ``n >= 0``; each site has two
upward edges, to ``(m - 1, n + 1)`` (bit 0) and ``(m + 1, n + 1)`` (bit 1).
An edge is open when its counter-based uniform falls below ``p``, so fields
with the same seed are monotonically coupled across ``p``.

Speeds produced here are in native lattice units (one level per step, so
``alpha = 1`` at ``p = 1``).  :func:`planar_speed` is the single place where
they are converted to the planar units used for cone angles on Z^2.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from numba import njit

from ._hash import STREAM_ORIENTED, stream_key, to_u64, uniform_at


class Initial(str, enum.Enum):
    HALF_LINE = "half_line"
    ORIGIN = "origin"
    ORIGIN_CONDITIONED = "origin_conditioned"


class RetryBudgetExhausted(RuntimeError):
    pass


class NoBreakPoints(RuntimeError):
    pass


class SpeedClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OrientedField:
    p: float
    seed: int = 0
    replicate_id: int = 0
    attempt: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")

    @property
    def key(self):
        return np.uint64(
            stream_key(
                np.uint64(to_u64(self.seed)),
                np.uint64(STREAM_ORIENTED),
                np.uint64(to_u64(self.replicate_id)),
                np.uint64(to_u64(self.attempt)),
            )
        )

    def is_open(self, m, n, right):
        return uniform_at(self.key, int(m), int(n), int(bool(right))) < self.p

    def with_attempt(self, attempt):
        return OrientedField(self.p, self.seed, self.replicate_id, attempt)


@njit(cache=True, nogil=True)
def _evolve(key, p, n_levels, start_lo, start_hi, fallback):
    """Right edge per level of the cluster of even sites in ``[start_lo, start_hi]``.

    Returns ``(r, alive)`` where ``alive[n]`` is 0 at levels where the
    frontier emptied (and, with ``fallback``, was reset to ``{n}``).
    """
    off = n_levels - start_lo + 2
    size = start_hi + n_levels + off + 3
    cur = np.zeros(size, dtype=np.uint8)
    nxt = np.zeros(size, dtype=np.uint8)
    lo = start_lo if (start_lo % 2 == 0) else start_lo + 1
    hi = start_hi if (start_hi % 2 == 0) else start_hi - 1
    for m in range(lo, hi + 1, 2):
        cur[m + off] = 1
    r = np.empty(n_levels + 1, dtype=np.int64)
    alive = np.ones(n_levels + 1, dtype=np.uint8)
    r[0] = hi
    for n in range(n_levels):
        new_lo = hi + 2
        new_hi = lo - 2
        for m in range(lo, hi + 1, 2):
            if cur[m + off] == 0:
                continue
            cur[m + off] = 0
            if uniform_at(key, m, n, 0) < p:
                nxt[m - 1 + off] = 1
                if m - 1 < new_lo:
                    new_lo = m - 1
                if m - 1 > new_hi:
                    new_hi = m - 1
            if uniform_at(key, m, n, 1) < p:
                nxt[m + 1 + off] = 1
                if m + 1 < new_lo:
                    new_lo = m + 1
                if m + 1 > new_hi:
                    new_hi = m + 1
        if new_hi < new_lo:
            alive[n + 1] = 0
            if not fallback:
                r[n + 1:] = np.iinfo(np.int64).min
                alive[n + 1:] = 0
                return r, alive
            new_lo = n + 1
            new_hi = n + 1
            nxt[n + 1 + off] = 1
        cur, nxt = nxt, cur
        lo = new_lo
        hi = new_hi
        r[n + 1] = hi
    return r, alive


@njit(cache=True, nogil=True)
def _survives(key, p, m0, n0, levels, buf_a, buf_b):
    """True when the open cluster of ``(m0, n0)`` reaches level ``n0 + levels``."""
    off = levels + 1
    cur = buf_a
    nxt = buf_b
    cur[m0 - m0 + off] = 1
    lo = m0
    hi = m0
    for k in range(levels):
        n = n0 + k
        new_lo = hi + 2
        new_hi = lo - 2
        for m in range(lo, hi + 1, 2):
            if cur[m - m0 + off] == 0:
                continue
            cur[m - m0 + off] = 0
            if uniform_at(key, m, n, 0) < p:
                nxt[m - 1 - m0 + off] = 1
                if m - 1 < new_lo:
                    new_lo = m - 1
                if m - 1 > new_hi:
                    new_hi = m - 1
            if uniform_at(key, m, n, 1) < p:
                nxt[m + 1 - m0 + off] = 1
                if m + 1 < new_lo:
                    new_lo = m + 1
                if m + 1 > new_hi:
                    new_hi = m + 1
        if new_hi < new_lo:
            return False
        cur, nxt = nxt, cur
        lo = new_lo
        hi = new_hi
    for m in range(lo, hi + 1, 2):
        cur[m - m0 + off] = 0
    return True


@njit(cache=True, nogil=True)
def _percolation_levels(key, p, r, last, levels):
    size = 2 * levels + 3
    a = np.zeros(size, dtype=np.uint8)
    b = np.zeros(size, dtype=np.uint8)
    flags = np.zeros(last + 1, dtype=np.uint8)
    for n in range(1, last + 1):
        if _survives(key, p, r[n], n, levels, a, b):
            flags[n] = 1
    return flags


@dataclass
class RightEdgeTrace:
    p: float
    horizon: int
    values: np.ndarray
    initial: Initial
    field: OrientedField
    attempts: int = 1
    fallback_levels: np.ndarray = dc_field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("n,rPrime\n")
            for n, v in enumerate(self.values):
                fh.write(f"{n},{int(v)}\n")


@dataclass
class BreakPointSequence:
    T: np.ndarray
    tau: np.ndarray
    X: np.ndarray
    horizon_h: int

    def __len__(self):
        return len(self.T)

    def entries(self):
        return list(zip(self.T.tolist(), self.tau.tolist(), self.X.tolist()))

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("i,T_i,tau_i,X_i\n")
            for i, (t, tau, x) in enumerate(self.entries(), start=1):
                fh.write(f"{i},{t},{tau},{x}\n")


def simulate_right_edge(field: OrientedField, N: int, initial=Initial.HALF_LINE, max_attempts=10_000):
    """Right edge ``r'_0 .. r'_N`` of the oriented cluster.

    HALF_LINE starts from the even sites of ``[-N, 0]``: a source further left
    reaches at most ``n - N - 2`` by level ``n``, so the window is exact
    unless the whole window dies out or lags that far behind.
    ORIGIN starts from ``{0}`` with no conditioning.  ORIGIN_CONDITIONED
    redraws the field (bumping its ``attempt`` counter) until the origin's
    cluster survives all ``N`` levels.  Whenever the frontier empties it
    restarts from the single site ``{n}``.
    """
    N = int(N)
    if N < 1:
        raise ValueError("N must be at least 1")
    initial = Initial(initial)
    p = float(field.p)
    if initial == Initial.ORIGIN_CONDITIONED:
        for k in range(max_attempts):
            trial = field.with_attempt(field.attempt + k)
            r, alive = _evolve(trial.key, p, N, 0, 0, False)
            if alive[N]:
                return RightEdgeTrace(p, N, r, initial, trial, attempts=k + 1)
        raise RetryBudgetExhausted(
            f"origin cluster died before level {N} in all {max_attempts} attempts at p={p}"
        )
    lo = -N if initial == Initial.HALF_LINE else 0
    r, alive = _evolve(field.key, p, N, lo, 0, True)
    return RightEdgeTrace(p, N, r, initial, field, fallback_levels=np.flatnonzero(alive == 0))


def break_points(trace: RightEdgeTrace, horizon_h: int = 100) -> BreakPointSequence:
    """Kuczek decomposition of an origin-conditioned right edge.

    A level ``n`` is a break point when the cluster of ``(r'_n, n)`` survives
    ``horizon_h`` further levels, a finite stand-in for percolating to
    infinity.  Only levels ``1 .. N - horizon_h`` can be classified.
    """
    horizon_h = int(horizon_h)
    if horizon_h < 1:
        raise ValueError("horizon_h must be positive")
    last = trace.horizon - horizon_h
    if last < 1:
        raise NoBreakPoints(f"horizon {trace.horizon} leaves no room for look-ahead {horizon_h}")
    flags = _percolation_levels(trace.field.key, trace.p, trace.values, last, horizon_h)
    T = np.flatnonzero(flags).astype(np.int64)
    if T.size == 0:
        raise NoBreakPoints(f"no break point found in levels 1..{last}; increase N")
    tau = np.diff(np.concatenate(([0], T)))
    r_at = trace.values[T]
    X = np.diff(np.concatenate(([0], r_at)))
    return BreakPointSequence(T, tau, X, horizon_h)


def estimate_alpha(p, N, replicates, seed, threads=1):
    """Mean of ``r'_N / N`` over HALF_LINE replicates, with its standard error."""
    if replicates < 1:
        raise ValueError("replicates must be at least 1")

    def one(rep):
        tr = simulate_right_edge(OrientedField(p, seed, rep), N, Initial.HALF_LINE)
        return tr.values[-1] / N

    from ._parallel import ordered_map

    vals = np.array(ordered_map(one, range(replicates), threads), dtype=float)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se


def planar_speed(alpha_lattice):
    """Convert a right-edge speed on the rotated lattice to planar cone units.

    A north-east path of ``n`` unit steps ends at level ``n`` and horizontal
    offset ``x - y``; the flat segment endpoint is ``((1 + a) / 2, (1 - a) / 2)``
    for lattice speed ``a``.  The closed-form cone angles are written with
    ``a / sqrt(2)`` in place of ``a / 2``, which makes the planar speed
    ``a / sqrt(2)``.
    """
    return float(alpha_lattice) / math.sqrt(2.0)


def theta_endpoints(alpha):
    """Cone angles ``(theta_minus, theta_plus)`` for a planar speed ``alpha``.

    Speeds above ``1/sqrt(2)`` are clamped with a warning.
    """
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0:
        raise ValueError(f"speed must be nonnegative, got {alpha}")
    cap = 1.0 / math.sqrt(2.0)
    if alpha > cap:
        warnings.warn(f"speed {alpha} exceeds 1/sqrt(2); clamped", SpeedClampWarning, stacklevel=2)
        alpha = cap
    a = alpha / math.sqrt(2.0)
    minus = math.atan2(0.5 - a, 0.5 + a)
    return minus, math.pi / 2 - minus
