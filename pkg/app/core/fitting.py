"""
Power-law fitting
Least-squares slopes on log-log data and the upper-bound verdict rule
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.schemas.report import Verdict

# Norms below this are treated as exact zeros (e.g. theta_0 of the free profile)
ZERO_NORM = 1e-13


@dataclass(frozen=True)
class LogLogFit:
    """Straight-line fit log y = slope * log x + intercept"""

    slope: float
    intercept: float
    residual: float
    points: int
    vanishing: bool = False


def fit_loglog(x: Sequence[float], y: Sequence[float], drop_largest: int = 0) -> Optional[LogLogFit]:
    """
    Fit a power law y ~ C x^p

    Args:
        x: Positive abscissae (frequencies or times)
        y: Non-negative values; non-finite entries are ignored
        drop_largest: Number of largest-x points excluded (preasymptotic range)

    Returns:
        Optional[LogLogFit]: None if fewer than two usable points remain;
        a fit flagged ``vanishing`` when every value is numerically zero
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0)
    x, y = x[keep], y[keep]
    order = np.argsort(x)
    x, y = x[order], y[order]
    if drop_largest and x.size > drop_largest + 1:
        x, y = x[:-drop_largest], y[:-drop_largest]
    if x.size and np.all(np.abs(y) <= ZERO_NORM):
        return LogLogFit(slope=float("inf"), intercept=float("-inf"), residual=0.0, points=x.size, vanishing=True)
    positive = y > 0
    x, y = x[positive], y[positive]
    if x.size < 2:
        return None

    log_x, log_y = np.log(x), np.log(y)
    slope, intercept = np.polyfit(log_x, log_y, 1)
    misfit = log_y - (slope * log_x + intercept)
    residual = float(np.sqrt(np.mean(misfit ** 2)))
    return LogLogFit(float(slope), float(intercept), residual, int(x.size))


def bound_verdict(
    fit: Optional[LogLogFit],
    predicted: float,
    tolerance: float,
    residual_threshold: float,
    decay: bool = False,
) -> Verdict:
    """
    Compare a fitted exponent with a predicted upper bound

    Frequency bounds ``norm <= C r^p`` (r -> 0) are violated when the slope is
    below p - tol. Time-decay bounds ``norm <= C t^p`` (t -> infinity) are
    violated when the slope is above p + tol.

    Args:
        fit: Fit result (None counts as INCONCLUSIVE)
        predicted: Predicted exponent p
        tolerance: Slope tolerance
        residual_threshold: Fits with a larger RMS residual are INCONCLUSIVE
        decay: True for time-decay series

    Returns:
        Verdict: CONSISTENT, VIOLATION or INCONCLUSIVE
    """
    if fit is None:
        return Verdict.INCONCLUSIVE
    if fit.vanishing:
        return Verdict.CONSISTENT
    if fit.residual > residual_threshold:
        return Verdict.INCONCLUSIVE
    if decay:
        return Verdict.VIOLATION if fit.slope > predicted + tolerance else Verdict.CONSISTENT
    return Verdict.VIOLATION if fit.slope < predicted - tolerance else Verdict.CONSISTENT


def is_sharp(fit: Optional[LogLogFit], predicted: float, window: float = 0.2) -> bool:
    """Informational: slope within ``window`` of the predicted exponent"""
    return bool(fit is not None and not fit.vanishing and abs(fit.slope - predicted) <= window)
