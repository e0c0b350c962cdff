"""Two-sample Welch t-test."""

import math

import numpy as np
from scipy import stats


class InsufficientDataError(ValueError):
    pass


def welch_t(xs, ys):
    """Return ``(t, df)`` for Welch's unequal-variance test (``nan`` if both variances vanish)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2 or y.size < 2:
        raise InsufficientDataError("each sample needs at least two values")
    vx, vy = x.var(ddof=1) / x.size, y.var(ddof=1) / y.size
    se2 = vx + vy
    if se2 == 0:
        return math.nan, math.nan
    t = (x.mean() - y.mean()) / math.sqrt(se2)
    df = se2 ** 2 / (vx ** 2 / (x.size - 1) + vy ** 2 / (y.size - 1))
    return float(t), float(df)


def welch_t_test(xs, ys) -> float:
    """Two-sided p-value of Welch's t-test.

    With zero variance on both sides the result is 1 for equal means and 0
    otherwise.
    """
    t, df = welch_t(xs, ys)
    if math.isnan(t):
        return 1.0 if float(np.mean(xs)) == float(np.mean(ys)) else 0.0
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
