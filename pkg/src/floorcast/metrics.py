"""Goodness-of-fit metrics for predicted vs. measured floors."""

import numpy as np


def pearson_r(pred, actual):
    """Pearson correlation; ``nan`` when either side has zero variance."""
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    dp = p - p.mean()
    da = a - a.mean()
    den = np.sqrt((dp @ dp) * (da @ da))
    if den == 0:
        return float("nan")
    return float(np.clip((dp @ da) / den, -1.0, 1.0))


def r_squared(actual, pred):
    """``1 - SS_res / SS_tot`` with ``SS_tot`` about the mean of ``actual``.

    Can be negative.  ``nan`` when ``actual`` is constant.
    """
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    ss_res = float(np.sum((a - p) ** 2))
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0:
        return float("nan")
    return 1.0 - ss_res / ss_tot


def abs_percent_errors(pred, actual):
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    return np.abs(p - a) / a * 100.0


def mape(pred, actual):
    """Mean absolute percentage error relative to ``actual``, in percent."""
    return float(np.mean(abs_percent_errors(pred, actual)))


def accuracies(pred, actual):
    """Per-point accuracy ``max(0, 100 - APE)`` in percent."""
    return np.maximum(0.0, 100.0 - abs_percent_errors(pred, actual))
