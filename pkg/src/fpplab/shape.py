"""Directional time constants, the limit-shape boundary and its local geometry.

Boundary points are kept in polar form ``(theta, r_B)`` and converted to the
plane only for line geometry.  Support lines are stored by their outward
unit normal angle ``phi`` and offset ``c`` (the line is ``x cos phi + y sin phi = c``);
the inclination of the line with the x-axis is ``phi + pi/2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._fit import fit_line
from ._hash import derive_seed
from ._parallel import ordered_map
from .fluctuation import Direction
from .geodesic import passage_time
from .weights import DistributionSpec, Kind, WeightField, validate

GRID_ATOL = 1e-9
WINDOW_CAP = 0.15
TANGENT_ATOL = 0.02  # radians; one-sided tangents closer than this count as one line


class Side(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


class AnchorNotOnHull(ValueError):
    """The anchor sample is not an extreme point of the samples within noise."""


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class MuEstimate:
    direction: Direction
    mu: float
    stderr: float
    n_used: int


@dataclass
class ShapeBoundary:
    theta: np.ndarray
    r_b: np.ndarray
    stderr: np.ndarray
    p: float | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.r_b = np.asarray(self.r_b, dtype=float)
        self.stderr = np.broadcast_to(np.asarray(self.stderr, dtype=float), self.theta.shape).copy()
        if not (self.theta.shape == self.r_b.shape and self.theta.ndim == 1):
            raise ValueError("theta and r_b must be 1-d arrays of equal length")
        if np.any(np.diff(self.theta) <= 0):
            raise ValueError("thetas must be strictly increasing")
        if self.theta[0] < -GRID_ATOL or self.theta[-1] > math.pi / 2 + GRID_ATOL:
            raise ValueError("thetas must lie in [0, pi/2]")
        if np.any(self.r_b <= 0):
            raise ValueError("boundary radii must be positive")

    @classmethod
    def from_radius(cls, theta, radius_fn, stderr=0.0, p=None):
        theta = np.asarray(theta, dtype=float)
        return cls(theta, np.array([radius_fn(t) for t in theta]), stderr, p)

    def __len__(self):
        return len(self.theta)

    def points(self):
        return np.column_stack([self.r_b * np.cos(self.theta), self.r_b * np.sin(self.theta)])

    def index_of(self, theta0):
        i = int(np.argmin(np.abs(self.theta - theta0)))
        if abs(self.theta[i] - theta0) > GRID_ATOL:
            raise ValueError(f"theta0={theta0} is not a grid angle of the boundary")
        return i

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("theta,rB,stderr\n")
            for t, r, s in zip(self.theta, self.r_b, self.stderr):
                fh.write(f"{float(t)!r},{float(r)!r},{float(s)!r}\n")


@dataclass(frozen=True)
class SupportLine:
    theta0: float
    side: Side
    anchor: tuple
    phi: float
    offset: float
    angle_stderr: float = 0.0

    @property
    def inclination(self):
        return self.phi + math.pi / 2

    def radius_at(self, theta):
        """Polar radius ``r_S(theta)`` of the line along the ray at ``theta``."""
        theta = np.asarray(theta, dtype=float)
        denom = np.cos(theta - self.phi)
        with np.errstate(divide="ignore"):
            return np.where(denom > 0, self.offset / denom, np.inf)


@dataclass(frozen=True)
class CurvatureEstimate:
    theta0: float
    side: Side
    kappa: float
    fit_stderr: float
    flag: str = "OK"
    window_used: int = 0
    slope: float = float("nan")

    @property
    def flat(self):
        return self.flag == "FLAT"

    def to_dict(self):
        return {
            "theta0": self.theta0,
            "side": self.side.value,
            "kappa": self.kappa,
            "stderr": self.fit_stderr,
            "flag": self.flag,
            "windowUsed": self.window_used,
        }


@dataclass(frozen=True)
class FlatSegment:
    theta_minus: float
    theta_plus: float
    max_deviation: float
    angles_inside: int


# ---------------------------------------------------------------------------
# time constants


def _mu_seed(seed, rep):
    return derive_seed(seed, "shape", int(rep))


def _slopes_per_replicate(spec, direction, n_list, replicates, seed, threads):
    targets = [direction.point(n) for n in n_list]
    # effective n of each rounded target, so lattice rounding does not bias the slope
    n_eff = np.array([math.hypot(*t) for t in targets]) / direction.r

    def one(rep):
        field = WeightField(spec, _mu_seed(seed, rep), rep)
        return fit_line(n_eff, [passage_time(field, (0, 0), t) for t in targets]).slope

    return np.array(ordered_map(one, range(replicates), threads))


def _check_n_list(n_list, replicates):
    n_list = [int(n) for n in n_list]
    if len(set(n_list)) < 3:
        raise ValueError("need at least 3 distinct n")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    return n_list


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(x.mean()), se


def estimate_mu(spec: DistributionSpec, direction: Direction, n_list, replicates, seed, threads=1) -> MuEstimate:
    """Slope of ``T(0, n * direction)`` against n, averaged over replicates.

    The regressor is the length of the lifted target divided by ``r`` rather
    than n itself.

    Each replicate uses one field for every n (common random numbers), so
    the per-replicate slopes are independent and their spread gives the
    standard error.
    """
    validate(spec)
    n_list = _check_n_list(n_list, replicates)
    mu, se = _mean_se(_slopes_per_replicate(spec, direction, n_list, replicates, seed, threads))
    return MuEstimate(direction, mu, se, len(n_list))


def rational_direction(theta, max_coord=64):
    """Primitive lattice vector ``(a, b)`` with ``max(a, b) <= max_coord`` closest in angle to ``theta``."""
    if not 0.0 <= theta <= math.pi / 2 + GRID_ATOL:
        raise ValueError(f"theta must lie in [0, pi/2], got {theta}")
    if theta <= math.pi / 4:
        f = Fraction(math.tan(theta)).limit_denominator(max_coord)
        return f.denominator, f.numerator
    f = Fraction(math.tan(math.pi / 2 - min(theta, math.pi / 2))).limit_denominator(max_coord)
    return f.numerator, f.denominator


def ray_targets(theta, n_list, max_coord=64):
    """Exact lattice points ``k (a, b)`` near distance n along ``theta`` and their lengths.

    Returns ``(snapped_theta, [(target, length), ...])``.
    """
    a, b = rational_direction(theta, max_coord)
    norm = math.hypot(a, b)
    ks = sorted({max(1, round(n / norm)) for n in n_list})
    return math.atan2(b, a), [((k * a, k * b), k * norm) for k in ks]


def estimate_shape_boundary(
    spec, theta_grid, n_list, replicates, seed, threads=1, min_angles=8, max_coord=None
) -> ShapeBoundary:
    """``r_B(theta) = 1 / mu((1, theta))`` on a grid, with delta-method errors.

    Each requested angle is snapped to the nearest rational direction
    ``(a, b)`` (see :func:`rational_direction`) and the boundary is reported
    at the snapped angles; targets are then exact lattice points on the ray,
    so no rounding enters the slope.  ``max_coord`` defaults to a quarter of
    the smallest n (capped at 64) so every ray gets distinct points.  Replicate ``k`` uses the same field at
    every angle, which keeps the boundary smooth across angles.
    """
    validate(spec)
    n_list = _check_n_list(n_list, replicates)
    thetas = np.asarray(theta_grid, dtype=float)
    if max_coord is None:
        max_coord = max(1, min(64, min(n_list) // 4))
    if len(thetas) < min_angles:
        raise ValueError(f"need at least {min_angles} angles, got {len(thetas)}")
    rays = [ray_targets(float(t), n_list, max_coord) for t in thetas]
    thetas = np.array([r[0] for r in rays])
    if np.any(np.diff(thetas) <= 0):
        raise ValueError("grid angles collapse after snapping; use a coarser grid or larger max_coord")
    for snapped, pts in rays:
        if len(pts) < 3:
            raise ValueError(f"n_list gives fewer than 3 distinct ray points at theta={snapped:.4f}")
    tasks = [(i, rep) for i in range(len(thetas)) for rep in range(replicates)]

    def one(task):
        i, rep = task
        field = WeightField(spec, _mu_seed(seed, rep), rep)
        pts = rays[i][1]
        return fit_line([ln for _, ln in pts], [passage_time(field, (0, 0), t) for t, _ in pts]).slope

    slopes = np.array(ordered_map(one, tasks, threads)).reshape(len(thetas), replicates)
    mus = np.array([_mean_se(row) for row in slopes])
    r_b = 1.0 / mus[:, 0]
    p = spec.p if spec.kind == Kind.DURRETT_LIGGETT else None
    return ShapeBoundary(thetas, r_b, mus[:, 1] / mus[:, 0] ** 2, p)


# ---------------------------------------------------------------------------
# flat segment


def flat_segment_detect(boundary: ShapeBoundary, alpha_hat: float) -> FlatSegment:
    """Predicted cone from a planar speed and the worst deviation from ``x + y = 1`` inside it.

    At zero speed the cone collapses to ``pi/4`` and the deviation is NaN.
    """
    from .oriented import theta_endpoints

    if not alpha_hat >= 0:
        raise ValueError(f"speed must be nonnegative, got {alpha_hat}")
    lo, hi = theta_endpoints(alpha_hat)
    inside = (boundary.theta > lo) & (boundary.theta < hi)
    dev = np.abs(boundary.r_b * (np.cos(boundary.theta) + np.sin(boundary.theta)) - 1.0)[inside]
    return FlatSegment(lo, hi, float(dev.max()) if dev.size else float("nan"), int(inside.sum()))


# ---------------------------------------------------------------------------
# support lines and curvature


def _one_sided_tangent(pts, se, anchor, radial, mask):
    """Tangent angle of the boundary at ``anchor`` from the samples in ``mask``.

    Works in the frame ``(s, h)`` with ``s`` along the tangent to the circle
    through the anchor and ``h`` the inward drop; fits ``h = b s + c s^2``
    (or ``h = b s`` with two samples) and returns ``(angle, stderr)`` of the
    direction of travel with increasing theta, or None without samples.
    """
    t_dir = np.array([-radial[1], radial[0]])
    rel = pts[mask] - anchor
    s = rel @ t_dir
    h = -(rel @ radial)
    w = se[mask]
    keep = np.abs(s) > 0
    s, h, w = s[keep], h[keep], w[keep]
    if len(s) == 0:
        return None
    order = np.argsort(np.abs(s))
    s, h, w = s[order], h[order], w[order]
    near = np.abs(s) <= WINDOW_CAP
    if near.sum() >= 2:
        s, h, w = s[near], h[near], w[near]
    else:
        s, h, w = s[:2], h[:2], w[:2]
    if len(s) >= 3:
        A = np.column_stack([s, s * s])
    else:
        A = s[:, None]
    wt = 1.0 / np.maximum(w, 1e-12) if np.any(w > 0) else np.ones_like(s)
    Aw = A * wt[:, None]
    coef, *_ = np.linalg.lstsq(Aw, h * wt, rcond=None)
    b = coef[0]
    b_se = 0.0
    if len(s) > A.shape[1]:
        cov = np.linalg.pinv(Aw.T @ Aw)
        resid = h * wt - Aw @ coef
        s2 = float(resid @ resid) / (len(s) - A.shape[1])
        # propagated sample error when weighted, residual scatter always
        b_se = math.sqrt(max(cov[0, 0], 0.0) * (max(s2, 1.0) if np.any(w > 0) else s2))
    base = math.atan2(t_dir[1], t_dir[0])
    return base + math.atan(b), b_se / (1 + b * b)


def _line_through(anchor, direction_angle):
    phi = direction_angle - math.pi / 2
    return phi, float(anchor[0] * math.cos(phi) + anchor[1] * math.sin(phi))


def support_lines(boundary: ShapeBoundary, theta0: float, slack=2.0):
    """Extreme support lines ``(S_plus, S_minus)`` at the grid angle ``theta0``.

    The one-sided tangents at the anchor are estimated from the samples on
    each side.  If they agree within noise the point is smooth and both lines
    coincide; otherwise the anchor is a corner and ``S_plus`` (largest
    inclination) follows the larger-theta side while ``S_minus`` follows the
    smaller-theta side.  Every sample must lie inside both lines up to
    ``slack`` standard errors, else :class:`AnchorNotOnHull`.
    """
    i0 = boundary.index_of(theta0)
    th0 = float(boundary.theta[i0])
    pts = boundary.points()
    se = boundary.stderr
    anchor = pts[i0]
    radial = np.array([math.cos(th0), math.sin(th0)])
    left = _one_sided_tangent(pts, se, anchor, radial, boundary.theta < th0)
    right = _one_sided_tangent(pts, se, anchor, radial, boundary.theta > th0)
    if left is None and right is None:
        raise InsufficientSamples("boundary has a single sample")
    if left is None:
        left = right
    if right is None:
        right = left
    (a_l, e_l), (a_r, e_r) = left, right
    tol = 3.0 * math.hypot(e_l, e_r) + TANGENT_ATOL
    if a_l - a_r > tol:
        raise AnchorNotOnHull(
            f"tangent from below theta0 ({a_l:.4f}) exceeds tangent from above ({a_r:.4f}); boundary not convex here"
        )
    if abs(a_r - a_l) <= tol:
        # smooth point: keep the better determined tangent
        if e_l < e_r:
            a_r, e_r = a_l, e_l
        elif e_r < e_l:
            a_l, e_l = a_r, e_r
        else:
            a_l = a_r = 0.5 * (a_l + a_r)
    anchor_polar = (float(boundary.r_b[i0]), th0)
    lines = []
    for side, ang, ang_err in ((Side.PLUS, a_r, e_r), (Side.MINUS, a_l, e_l)):
        phi, c = _line_through(anchor, ang)
        normal = np.array([math.cos(phi), math.sin(phi)])
        excess = pts @ normal - c
        dist = np.linalg.norm(pts - anchor, axis=1)
        allow = slack * se * np.abs(np.cos(boundary.theta - phi)) + (tol + slack * ang_err) * dist + 1e-12
        if np.any(excess > allow):
            j = int(np.argmax(excess - allow))
            raise AnchorNotOnHull(
                f"sample at theta={boundary.theta[j]:.4f} lies {excess[j]:.3g} outside the {side.value} line"
            )
        lines.append(SupportLine(th0, side, anchor_polar, phi, c, float(ang_err)))
    return lines[0], lines[1]


def _gap_profile(boundary, line: SupportLine, mask):
    th = boundary.theta[mask]
    r_s = line.radius_at(th)
    gap = r_s - boundary.r_b[mask]
    anchor = np.array([line.anchor[0] * math.cos(line.anchor[1]), line.anchor[0] * math.sin(line.anchor[1])])
    pts_s = np.column_stack([r_s * np.cos(th), r_s * np.sin(th)])
    d = np.linalg.norm(pts_s - anchor, axis=1)
    # noise of a gap: radial error of the sample plus the tilt error of the line
    noise = np.hypot(boundary.stderr[mask], line.angle_stderr * d)
    return d, gap, noise


def curvature_exponent(boundary: ShapeBoundary, theta0: float, side, min_samples=5, window_cap=WINDOW_CAP, slack=2.0):
    """Exponent ``kappa = 1/m`` of the gap law ``gap ~ d**m`` on one side of ``theta0``.

    PLUS examines the smaller-theta side against ``S_plus``; MINUS the
    larger-theta side against ``S_minus``.  Each side is thus measured
    against the tangent coming from the other side, so a corner reads as
    ``kappa = 1`` and a facet as FLAT.  FLAT is also reported when fewer
    than three gaps exceed ``slack`` standard errors.  The window starts with the 3 samples
    closest to the anchor and grows while the fit standard error improves.
    """
    side = Side(side)
    plus, minus = support_lines(boundary, theta0, slack=slack)
    th0 = plus.theta0
    if side == Side.PLUS:
        line, mask = plus, boundary.theta < th0 - GRID_ATOL
    else:
        line, mask = minus, boundary.theta > th0 + GRID_ATOL
    d, gap, se = _gap_profile(boundary, line, mask)
    inwin = d < window_cap
    d, gap, se = d[inwin], gap[inwin], se[inwin]
    if len(d) < min_samples:
        raise InsufficientSamples(f"{len(d)} samples within d<{window_cap} on the {side.value} side; need {min_samples}")
    order = np.argsort(d)
    d, gap, se = d[order], gap[order], se[order]
    significant = gap > slack * se + 1e-12
    if significant.sum() < 3:
        # no growth law is resolvable from fewer than three gaps above noise
        return CurvatureEstimate(th0, side, 0.0, 0.0, "FLAT", len(d))
    x_all, y_all = np.log(d[significant]), np.log(gap[significant])
    best = fit_line(x_all[:3], y_all[:3])
    used = 3
    for k in range(4, len(x_all) + 1):
        f = fit_line(x_all[:k], y_all[:k])
        if f.slope_se >= best.slope_se:
            break
        best, used = f, k
    m = best.slope
    if m <= 0:
        return CurvatureEstimate(th0, side, 0.0, float("inf"), "NONMONOTONE", used, m)
    kappa = min(1.0, 1.0 / m)
    return CurvatureEstimate(th0, side, kappa, best.slope_se / m**2, "OK", used, m)
