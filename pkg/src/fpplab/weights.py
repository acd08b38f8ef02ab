"""Seedable i.i.d. edge-weight environments on Z^2.

A :class:`WeightField` never stores weights.  The weight of an edge is a pure
function of ``(spec, seed, replicate_id, edge)`` obtained by pushing a
counter-based uniform through the inverse CDF of the distribution, so
regions can grow or be queried in any order without re-simulation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._hash import COORD_LIMIT, STREAM_EDGE, stream_key, to_u64, uniform_at, uniform_grid


class InvalidDistribution(ValueError):
    """Raised by :func:`validate` with a human-readable reason."""


class Axis(enum.IntEnum):
    EAST = 0
    NORTH = 1


class Kind(str, enum.Enum):
    CONSTANT = "constant"
    DURRETT_LIGGETT = "durrett_liggett"
    BERNOULLI_ZERO = "bernoulli_zero"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True, order=True)
class EdgeId:
    """Undirected nearest-neighbour edge, stored from its lexicographically smaller endpoint."""

    base: tuple[int, int]
    axis: Axis

    @classmethod
    def between(cls, u, v) -> "EdgeId":
        (ux, uy), (vx, vy) = u, v
        if abs(ux - vx) + abs(uy - vy) != 1:
            raise ValueError(f"{u} and {v} are not nearest neighbours")
        lo = min((ux, uy), (vx, vy))
        axis = Axis.EAST if uy == vy else Axis.NORTH
        return cls((int(lo[0]), int(lo[1])), axis)

    def endpoints(self):
        x, y = self.base
        return (x, y), ((x + 1, y) if self.axis == Axis.EAST else (x, y + 1))


@dataclass(frozen=True)
class DistributionSpec:
    """One of the supported passage-time laws.

    ``p`` is the mass of the low atom: the atom at 1 for DURRETT_LIGGETT and the
    atom at 0 for BERNOULLI_ZERO.  ``high`` is the other atom.  Use the
    classmethod constructors rather than filling fields by hand.

    All kinds have bounded support or an exponential tail, so the exponential
    moment condition holds with any lambda below ``rate`` (EXPONENTIAL) or any
    lambda at all (atomic kinds).
    """

    kind: Kind
    value: float = 1.0
    p: float = 0.0
    high: float = 5.0
    rate: float = 1.0

    @classmethod
    def constant(cls, value=1.0):
        return cls(Kind.CONSTANT, value=float(value))

    @classmethod
    def durrett_liggett(cls, p, high=5.0):
        return cls(Kind.DURRETT_LIGGETT, p=float(p), high=float(high))

    @classmethod
    def bernoulli_zero(cls, p0, high=1.0):
        return cls(Kind.BERNOULLI_ZERO, p=float(p0), high=float(high))

    @classmethod
    def exponential(cls, rate=1.0):
        return cls(Kind.EXPONENTIAL, rate=float(rate))

    # -- derived properties -------------------------------------------------

    @property
    def is_atomic(self) -> bool:
        return self.kind != Kind.EXPONENTIAL

    def atoms(self):
        """``[(value, probability), ...]`` for atomic kinds, ``None`` for EXPONENTIAL."""
        if self.kind == Kind.CONSTANT:
            return [(self.value, 1.0)]
        if self.kind == Kind.DURRETT_LIGGETT:
            return [(1.0, self.p), (self.high, 1.0 - self.p)]
        if self.kind == Kind.BERNOULLI_ZERO:
            return [(0.0, self.p), (self.high, 1.0 - self.p)]
        return None

    def support_min(self) -> float:
        """Infimum of the support, used to certify region clipping."""
        if self.kind == Kind.CONSTANT:
            return self.value
        if self.kind == Kind.DURRETT_LIGGETT:
            return 1.0 if self.p > 0 else self.high
        if self.kind == Kind.BERNOULLI_ZERO:
            return 0.0 if self.p > 0 else self.high
        return 0.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == Kind.EXPONENTIAL:
            return np.where(x < 0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))
        out = np.zeros_like(x)
        for v, prob in self.atoms():
            out = out + np.where(x >= v, prob, 0.0)
        return np.minimum(out, 1.0)

    def integer_atoms(self):
        """``(scale, [int_value, ...])`` so that atom == int_value / scale exactly.

        Atoms are read through their shortest decimal representation, so
        ``high=2.5`` scales by 2 rather than by a power of two.
        """
        fracs = [Fraction(repr(float(v))) for v, _ in self.atoms()]
        scale = 1
        for f in fracs:
            scale = scale * f.denominator // math.gcd(scale, f.denominator)
        return scale, [int(f * scale) for f in fracs]

    def sample(self, u):
        """Inverse-CDF transform of uniforms ``u`` in [0, 1)."""
        u = np.asarray(u, dtype=float)
        k = self.kind
        if k == Kind.CONSTANT:
            return np.full_like(u, self.value)
        if k == Kind.DURRETT_LIGGETT:
            return np.where(u < self.p, 1.0, self.high)
        if k == Kind.BERNOULLI_ZERO:
            return np.where(u < self.p, 0.0, self.high)
        return -np.log1p(-u) / self.rate

    def sample_int(self, u):
        """Integer-scaled weights (atomic kinds only); see :meth:`integer_atoms`."""
        _, ints = self.integer_atoms()
        u = np.asarray(u, dtype=float)
        if self.kind == Kind.CONSTANT:
            return np.full(u.shape, ints[0], dtype=np.int64)
        return np.where(u < self.p, ints[0], ints[1]).astype(np.int64)

    # -- config round trip ----------------------------------------------------

    def to_items(self) -> dict:
        if self.kind == Kind.CONSTANT:
            return {"kind": self.kind.value, "value": repr(self.value)}
        if self.kind == Kind.EXPONENTIAL:
            return {"kind": self.kind.value, "rate": repr(self.rate)}
        key = "p" if self.kind == Kind.DURRETT_LIGGETT else "p0"
        return {"kind": self.kind.value, key: repr(self.p), "high": repr(self.high)}

    @classmethod
    def from_items(cls, items) -> "DistributionSpec":
        try:
            kind = Kind(items["kind"].strip().lower())
        except (KeyError, ValueError) as exc:
            raise InvalidDistribution(f"unknown distribution kind: {items.get('kind')!r}") from exc
        try:
            if kind == Kind.CONSTANT:
                spec = cls.constant(float(items.get("value", 1.0)))
            elif kind == Kind.DURRETT_LIGGETT:
                spec = cls.durrett_liggett(float(items["p"]), float(items.get("high", 5.0)))
            elif kind == Kind.BERNOULLI_ZERO:
                spec = cls.bernoulli_zero(float(items["p0"]), float(items.get("high", 1.0)))
            else:
                spec = cls.exponential(float(items.get("rate", 1.0)))
        except KeyError as exc:
            raise InvalidDistribution(f"{kind.value}: missing parameter {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise InvalidDistribution(f"{kind.value}: {exc}") from exc
        validate(spec)
        return spec


def validate(spec: DistributionSpec) -> DistributionSpec:
    """Return ``spec`` unchanged or raise :class:`InvalidDistribution`."""
    def finite(name, v):
        if not math.isfinite(v):
            raise InvalidDistribution(f"{name} must be finite, got {v}")

    k = spec.kind
    if k == Kind.CONSTANT:
        finite("value", spec.value)
        if spec.value < 0:
            raise InvalidDistribution(f"passage times must be nonnegative, got value={spec.value}")
    elif k in (Kind.DURRETT_LIGGETT, Kind.BERNOULLI_ZERO):
        finite("p", spec.p)
        finite("high", spec.high)
        if not 0.0 <= spec.p <= 1.0:
            raise InvalidDistribution(f"probability out of range [0, 1]: {spec.p}")
        if k == Kind.DURRETT_LIGGETT and spec.high <= 1.0:
            raise InvalidDistribution(
                f"high must exceed the atom at 1 (infimum of the support), got {spec.high}"
            )
        if k == Kind.BERNOULLI_ZERO and spec.high <= 0.0:
            raise InvalidDistribution(f"high must be positive, got {spec.high}")
    elif k == Kind.EXPONENTIAL:
        finite("rate", spec.rate)
        if spec.rate <= 0:
            raise InvalidDistribution(f"rate must be positive, got {spec.rate}")
    else:  # pragma: no cover
        raise InvalidDistribution(f"unsupported kind {k!r}")
    if spec.is_atomic:
        scale, ints = spec.integer_atoms()
        if max(ints) >= 1 << 31:
            raise InvalidDistribution(f"atoms need an integer scale of {scale}; too fine to compute exactly")
    return spec


@dataclass(frozen=True)
class WeightField:
    spec: DistributionSpec
    seed: int = 0
    replicate_id: int = 0

    def __post_init__(self):
        validate(self.spec)

    @property
    def key(self):
        return np.uint64(
            stream_key(
                np.uint64(to_u64(self.seed)), np.uint64(STREAM_EDGE), np.uint64(to_u64(self.replicate_id)), np.uint64(0)
            )
        )

    def uniforms(self, x0, y0, width, height, axis):
        if max(abs(x0), abs(y0), abs(x0 + width), abs(y0 + height)) >= COORD_LIMIT:
            raise ValueError("coordinates exceed the addressable range of the field")
        return uniform_grid(self.key, int(x0), int(y0), int(width), int(height), int(axis))

    def block(self, x0, y0, width, height, exact=False):
        """Weights of the EAST and NORTH edges based at each vertex of a block.

        Returns ``(east, north)`` arrays of shape ``(height, width)``; entry
        ``[j, i]`` is the edge leaving ``(x0+i, y0+j)``.  With ``exact=True``
        (atomic kinds only) the arrays are int64 in units of ``1/scale``.
        """
        ue = self.uniforms(x0, y0, width, height, Axis.EAST)
        un = self.uniforms(x0, y0, width, height, Axis.NORTH)
        if exact:
            return self.spec.sample_int(ue), self.spec.sample_int(un)
        return self.spec.sample(ue), self.spec.sample(un)


def weight(field: WeightField, e: EdgeId) -> float:
    x, y = e.base
    u = uniform_at(field.key, int(x), int(y), int(e.axis))
    return float(field.spec.sample(np.array([u]))[0])
