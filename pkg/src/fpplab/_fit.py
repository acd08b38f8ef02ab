"""Ordinary least squares for a straight line, with standard errors."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    points: int


def fit_line(x, y, sigma=None) -> LineFit:
    """Fit ``y = slope * x + intercept``.

    Without ``sigma`` the standard errors come from the residual variance
    (zero when there is no residual degree of freedom).  With ``sigma`` the
    fit is weighted and the errors are the propagated per-point errors.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = len(x)
    if k < 2 or np.ptp(x) == 0:
        raise ValueError("need at least two distinct abscissae")
    w = np.ones(k) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    if sigma is None:
        resid = y - (slope * x + intercept)
        s2 = (resid**2).sum() / (k - 2) if k > 2 else 0.0
    else:
        s2 = 1.0
    slope_se = float(np.sqrt(s2 / sxx))
    intercept_se = float(np.sqrt(s2 * (1.0 / sw + xm**2 / sxx)))
    return LineFit(float(slope), float(intercept), slope_se, intercept_se, k)
