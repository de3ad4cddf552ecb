"""Student's t survival function and the paired t-test."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc


class Sidedness(enum.Enum):
    TWO_SIDED = "two-sided"
    ONE_SIDED_GREATER = "greater"


def student_t_sf(t: float, dof: float) -> float:
    """P(T > t) for Student's t with ``dof`` degrees of freedom.

    Uses the regularized incomplete beta function,
    ``P(|T| > |t|) = I_x(dof/2, 1/2)`` with ``x = dof / (dof + t**2)``.
    """
    if not dof > 0:
        raise ValueError("dof must be positive")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = dof / (dof + t * t)
    tail = 0.5 * float(betainc(0.5 * dof, 0.5, x))
    return tail if t >= 0 else 1.0 - tail


def student_t_cdf(t: float, dof: float) -> float:
    return student_t_sf(-t, dof)


class DegenerateTest(ValueError):
    pass


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    dof: int
    p_value: float
    sidedness: Sidedness
    n_pairs: int
    mean_difference: float = 0.0


def _p_value(t: float, dof: int, sidedness: Sidedness) -> float:
    sf = student_t_sf(t, dof)
    if sidedness is Sidedness.ONE_SIDED_GREATER:
        return sf
    return min(1.0, 2.0 * min(sf, 1.0 - sf))


def paired_t_test(a: Sequence[float], b: Sequence[float],
                  sidedness: Sidedness = Sidedness.TWO_SIDED) -> TTestResult:
    """Paired t-test on ``d = a - b``.

    ``ONE_SIDED_GREATER`` tests the alternative ``mean(a) > mean(b)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and the same length")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    dof = n - 1
    if sd == 0:
        if mean == 0:
            return TTestResult(0.0, dof, 1.0, sidedness, n, 0.0)
        raise DegenerateTest("degenerate: zero variance, nonzero shift")
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, dof, _p_value(t, dof, sidedness), sidedness, n, mean)
