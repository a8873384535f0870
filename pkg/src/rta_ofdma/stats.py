"""Confidence intervals for rare-event proportions and batch ratios."""

from __future__ import annotations

import math
from statistics import NormalDist

import numpy as np
from scipy import stats as _st

Z95 = NormalDist().inv_cdf(0.975)


def wilson_interval(successes: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Stays informative at zero or very few events, which is the regime of
    interest for loss rates near 1e-5. Returns (0, 1) when ``total`` is 0.
    """
    if total <= 0:
        return (0.0, 1.0)
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    phat = successes / total
    z2n = z * z / total
    denom = 1.0 + z2n
    center = (phat + z2n / 2) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z2n / (4 * total)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == total else min(1.0, center + half)
    return (lo, hi)


def ratio_interval(num, den, confidence: float = 0.95) -> tuple[float, float, float]:
    """Batch-means interval for sum(num) / sum(den).

    Uses the delta-method variance of a ratio estimator over batches with
    possibly unequal sizes. Batches with ``den == 0`` are ignored. With
    fewer than two batches the interval collapses to the point estimate.
    """
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    keep = den > 0
    num, den = num[keep], den[keep]
    if den.sum() == 0:
        return (math.nan, math.nan, math.nan)
    r = float(num.sum() / den.sum())
    b = len(den)
    if b < 2:
        return (r, r, r)
    resid = num - r * den
    se = math.sqrt((resid @ resid) / (b * (b - 1))) / den.mean()
    t = _st.t.ppf(0.5 + confidence / 2, b - 1)
    return (r, float(r - t * se), float(r + t * se))
