import math
from collections.abc import Sequence

import numpy as np
from scipy import stats


def mean_confidence_interval(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float | None]:
    """
    Mean and half-width of the Student-t confidence interval.

    The half-width is None with fewer than two samples.
    """
    if not values:
        return math.nan, None
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    sem = float(arr.std(ddof=1)) / math.sqrt(arr.size)
    t_crit = float(stats.t.ppf(0.5 + confidence / 2.0, df=arr.size - 1))
    return mean, t_crit * sem


def binomial_stderr(p: float, trials: int) -> float:
    """Standard error of an empirical proportion."""
    if trials <= 0:
        return math.inf
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)
