"""Exponential decay-rate fits."""

import numpy as np

from .errors import FitError

__all__ = ["fit_decay"]


def fit_decay(t, values, tail_fraction=0.5):
    """Fit ``values ~ C exp(-rate t)`` over the final part of a series.

    Parameters
    ----------
    t, values : array_like
        Sample times and strictly positive values.
    tail_fraction : float
        Fraction of the samples (the last ones) used in the fit.

    Returns
    -------
    rate : float
        Negated slope of log(values) against t; positive means decay.
    r_squared : float
        Coefficient of determination of the line fit (1 for an exactly
        constant series).
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise FitError("t and values must be 1-d arrays of equal length")
    if not 0.0 < tail_fraction < 1.0:
        raise FitError(f"tail_fraction must lie in (0, 1), got {tail_fraction}")
    n_tail = int(np.floor(tail_fraction * len(t)))
    if n_tail < 10:
        raise FitError(f"need at least 10 samples in the tail window, got {n_tail}")
    tt, vv = t[-n_tail:], v[-n_tail:]
    if not np.all(np.isfinite(vv)) or np.any(vv <= 0.0):
        raise FitError("values in the tail window must be positive and finite")
    y = np.log(vv)
    tc = tt - tt.mean()
    yc = y - y.mean()
    sxx = float(tc @ tc)
    if sxx == 0.0:
        raise FitError("tail window has zero time extent")
    slope = float(tc @ yc) / sxx
    ss_tot = float(yc @ yc)
    resid = yc - slope * tc
    ss_res = float(resid @ resid)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return -slope, r2
